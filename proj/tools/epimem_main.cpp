#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "epimem/pipeline.hpp"

namespace fs = std::filesystem;
using namespace epimem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitGateway = 4;
constexpr int kExitInternal = 5;

struct CommonFlags {
  std::optional<fs::path> config_file;
  std::optional<std::string> fixture_dir;
  std::optional<std::string> base_url;
  std::optional<double> theta;
  std::optional<uint64_t> seed;
  std::optional<int> jobs;
  bool small_models = false;
  bool no_step2 = false;
  bool no_step1 = false;
  bool flat_categories = false;
  bool no_temporal = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "JSON config file (flags override)");
    cmd->add_option("--fixture-dir", fixture_dir, "mock gateway fixture directory");
    cmd->add_option("--base-url", base_url, "HTTP gateway base URL (switches backend to http)");
    cmd->add_option("--theta", theta, "connected-pair similarity threshold");
    cmd->add_option("--seed", seed, "k-means seed");
    cmd->add_option("--jobs", jobs, "parallel question evaluation (default: logical cores)");
    cmd->add_flag("--small-models", small_models, "use the small-model configuration");
    cmd->add_flag("--no-step2", no_step2, "disable cross-session reasoning");
    cmd->add_flag("--no-step1", no_step1, "skip extraction; one fragment per raw turn");
    cmd->add_flag("--flat-categories", flat_categories, "single flat category list");
    cmd->add_flag("--no-temporal", no_temporal, "message-date-only temporals");
  }

  RunConfig resolve() const {
    RunConfig config = load_run_config(config_file);
    if (fixture_dir) {
      config.gateway_backend = "mock";
      config.fixture_dir = *fixture_dir;
    }
    if (base_url) {
      config.gateway_backend = "http";
      config.base_url = *base_url;
    }
    if (theta) config.consolidation.theta = *theta;
    if (seed) config.consolidation.kmeans.seed = *seed;
    if (jobs) config.jobs = *jobs;
    if (small_models) config.use_small_models = true;
    if (no_step2) config.consolidation.reasoning_enabled = false;
    if (no_step1) config.extraction.skip_extraction = true;
    if (flat_categories) config.extraction.use_categories = false;
    if (no_temporal) config.extraction.use_temporal_reasoning = false;
    return config;
  }
};

DatasetStyle style_from_string(const std::string& s) {
  if (s == "locomo") return DatasetStyle::locomo;
  if (s == "longmemeval") return DatasetStyle::longmemeval;
  throw ConfigError("unknown dataset style \"" + s + "\" (expected locomo or longmemeval)");
}

void maybe_load_cache(const RunConfig& config, EmbeddingClient& client) {
  if (!config.embedding_cache_path.empty()) client.load_cache(config.embedding_cache_path);
}

void maybe_save_cache(const RunConfig& config, const EmbeddingClient& client) {
  if (!config.embedding_cache_path.empty()) client.save_cache(config.embedding_cache_path);
}

int cmd_build(const CommonFlags& flags, const fs::path& conversation_file, const fs::path& out,
              std::optional<fs::path> manifest_path) {
  RunConfig config = flags.resolve();
  auto conversation = load_native_conversation(conversation_file);
  LlmGateway gateway(config.gateway_config());
  EmbeddingClient embeddings(config.make_embedding_backend());
  maybe_load_cache(config, embeddings);
  Manifest manifest(manifest_path ? *manifest_path : fs::path(out.string() + ".manifest"));
  WarningLog warnings;

  MemoryStore store = build_memory(conversation, config, gateway, embeddings, &manifest, &warnings);
  save_store(store, out);
  maybe_save_cache(config, embeddings);

  std::cout << "built " << out.string() << ": " << store.extracted.size() << " extracted, "
            << store.reasoned.size() << " reasoned, pool " << store.final_pool.clusters.size()
            << " clusters\n";
  for (const auto& w : warnings.snapshot()) std::cerr << "warning: " << w << "\n";
  return 0;
}

int cmd_query(const CommonFlags& flags, const fs::path& store_file, const std::string& question,
              std::optional<int> budget, std::optional<std::string> retriever,
              const std::string& style_name, bool dry_run) {
  RunConfig config = flags.resolve();
  if (budget) config.retrieval.token_budget = *budget;
  if (retriever) {
    if (*retriever == "dense")
      config.retrieval.mode = RetrievalConfig::Mode::dense;
    else if (*retriever == "bm25")
      config.retrieval.mode = RetrievalConfig::Mode::bm25;
    else
      throw ConfigError("unknown retriever \"" + *retriever + "\"");
  }

  MemoryStore store = load_store(store_file);
  EmbeddingClient embeddings(config.make_embedding_backend());
  maybe_load_cache(config, embeddings);
  if (!store.embedding_backend_id.empty() &&
      store.embedding_backend_id != embeddings.backend().id())
    throw ConfigError("store was built with embedding backend \"" + store.embedding_backend_id +
                      "\" but the configured backend is \"" + embeddings.backend().id() + "\"");
  store.seal(embeddings);

  std::optional<LlmGateway> gateway;
  if (!dry_run) gateway.emplace(config.gateway_config());
  auto result = query_memory(store, question, config, gateway ? &*gateway : nullptr, embeddings,
                             style_from_string(style_name), dry_run);

  std::cout << "retrieved " << result.ranked.size() << " candidates:\n";
  const size_t shown = std::min<size_t>(result.ranked.size(), 20);
  for (size_t i = 0; i < shown; ++i)
    std::cout << "  " << result.ranked[i].fragment_id << "  " << result.ranked[i].score << "\n";
  if (result.ranked.size() > shown)
    std::cout << "  ... " << (result.ranked.size() - shown) << " more\n";
  std::cout << "context (" << result.context.token_count << " tokens <= "
            << config.retrieval.token_budget << "):\n"
            << result.context.text() << "\n";
  if (result.answer_text) std::cout << "answer: " << *result.answer_text << "\n";
  maybe_save_cache(config, embeddings);
  return 0;
}

int cmd_eval(const CommonFlags& flags, const fs::path& dataset_file, const std::string& style_name,
             const fs::path& out_dir, const std::string& budgets_csv,
             const std::string& ablations_csv, bool no_judge) {
  RunConfig base_config = flags.resolve();
  if (no_judge) base_config.judge_enabled = false;
  const DatasetStyle style = style_from_string(style_name);
  const EvalDataset dataset = load_dataset(dataset_file, style);

  std::vector<int> budgets;
  {
    std::istringstream in(budgets_csv);
    std::string tok;
    while (std::getline(in, tok, ',')) {
      if (!tok.empty()) budgets.push_back(std::stoi(tok));
    }
  }
  if (budgets.empty()) budgets.push_back(base_config.retrieval.token_budget);

  std::vector<std::string> ablations;
  {
    std::istringstream in(ablations_csv);
    std::string tok;
    while (std::getline(in, tok, ',')) {
      if (!tok.empty()) ablations.push_back(tok);
    }
  }
  if (ablations.empty()) ablations.push_back("none");

  fs::create_directories(out_dir);
  for (const auto& ablation : ablations) {
    RunConfig config = base_config;
    if (ablation == "none") {
    } else if (ablation == "no-step2") {
      config.consolidation.reasoning_enabled = false;
    } else if (ablation == "no-step1") {
      config.extraction.skip_extraction = true;
    } else if (ablation == "flat-categories") {
      config.extraction.use_categories = false;
    } else if (ablation == "no-temporal") {
      config.extraction.use_temporal_reasoning = false;
    } else {
      throw ConfigError("unknown ablation \"" + ablation +
                        "\" (none, no-step2, no-step1, flat-categories, no-temporal)");
    }

    for (int budget : budgets) {
      config.retrieval.token_budget = budget;
      LlmGateway gateway(config.gateway_config());
      EmbeddingClient embeddings(config.make_embedding_backend());
      maybe_load_cache(config, embeddings);
      EvalOptions options;
      options.extraction = config.extraction;
      options.consolidation = config.consolidation;
      options.retrieval = config.retrieval;
      options.judge_enabled = config.judge_enabled;
      options.abstention_patterns = config.abstention_patterns;
      options.jobs = config.jobs > 0 ? config.jobs
                                     : static_cast<int>(std::thread::hardware_concurrency());
      options.ablation_label = ablation;
      options.config_hash = config.config_hash();

      WarningLog warnings;
      EvalReport report = run_eval(dataset, style, options, gateway, embeddings, &warnings);

      const std::string stem = ablation + "__" + std::to_string(budget);
      {
        std::ofstream json_out(out_dir / (stem + ".json"), std::ios::binary);
        json_out << report.to_json().dump(2) << "\n";
      }
      {
        std::ofstream table_out(out_dir / (stem + ".txt"), std::ios::binary);
        table_out << report.render_table();
      }
      std::cout << "wrote " << (out_dir / stem).string() << ".{json,txt}\n";
      maybe_save_cache(config, embeddings);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"episodic conversational memory engine"};
  app.require_subcommand(1);

  CommonFlags build_flags, query_flags, eval_flags;

  auto* build = app.add_subcommand("build", "construct memory from a conversation file");
  fs::path conversation_file, build_out;
  std::optional<fs::path> manifest_path;
  build->add_option("--conversation", conversation_file, "native conversation JSON")->required();
  build->add_option("--out", build_out, "output store file")->required();
  build->add_option("--manifest", manifest_path, "manifest path (default: <out>.manifest)");
  build_flags.attach(build);

  auto* query = app.add_subcommand("query", "retrieve context and answer a question");
  fs::path store_file;
  std::string question, query_style = "locomo";
  std::optional<int> budget;
  std::optional<std::string> retriever;
  bool dry_run = false;
  query->add_option("--store", store_file, "store file from `build`")->required();
  query->add_option("--question", question, "question text")->required();
  query->add_option("--budget", budget, "token budget");
  query->add_option("--retriever", retriever, "dense | bm25");
  query->add_option("--style", query_style, "answer prompt style: locomo | longmemeval");
  query->add_flag("--dry-run", dry_run, "stop before the answer call");
  query_flags.attach(query);

  auto* eval = app.add_subcommand("eval", "run a benchmark evaluation");
  fs::path dataset_file, out_dir = "reports";
  std::string eval_style = "locomo", budget_sweep, ablate = "none";
  bool no_judge = false;
  eval->add_option("--dataset", dataset_file, "dataset JSON file")->required();
  eval->add_option("--style", eval_style, "locomo | longmemeval")->required();
  eval->add_option("--out-dir", out_dir, "report output directory");
  eval->add_option("--budget-sweep", budget_sweep, "comma-separated budgets, e.g. 1024,2048,4096");
  eval->add_option("--ablate", ablate,
                   "comma-separated ablations: none,no-step2,no-step1,flat-categories,no-temporal");
  eval->add_flag("--no-judge", no_judge, "skip LLM-as-a-judge scoring");
  eval_flags.attach(eval);

  CLI11_PARSE(app, argc, argv);

  try {
    if (build->parsed()) return cmd_build(build_flags, conversation_file, build_out, manifest_path);
    if (query->parsed())
      return cmd_query(query_flags, store_file, question, budget, retriever, query_style, dry_run);
    if (eval->parsed())
      return cmd_eval(eval_flags, dataset_file, eval_style, out_dir, budget_sweep, ablate,
                      no_judge);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const GatewayError& e) {
    std::cerr << "gateway error: " << e.what() << "\n";
    return kExitGateway;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return 0;
}
