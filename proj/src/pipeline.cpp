#include "epimem/pipeline.hpp"

#include <fstream>

namespace epimem {

namespace {

RetrievalConfig::Mode mode_from_string(const std::string& mode) {
  if (mode == "dense") return RetrievalConfig::Mode::dense;
  if (mode == "bm25") return RetrievalConfig::Mode::bm25;
  throw ConfigError("unknown retrieval mode \"" + mode + "\" (expected dense or bm25)");
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  if (j.contains("gateway")) {
    const auto& g = j.at("gateway");
    c.gateway_backend = g.value("backend", c.gateway_backend);
    c.fixture_dir = g.value("fixture_dir", c.fixture_dir);
    c.base_url = g.value("base_url", c.base_url);
    c.token_env = g.value("token_env", c.token_env);
    c.retry_limit = g.value("retry_limit", c.retry_limit);
    if (g.contains("models")) {
      const auto& m = g.at("models");
      c.models.extract = m.value("extract", c.models.extract);
      c.models.reason = m.value("reason", c.models.reason);
      c.models.response = m.value("response", c.models.response);
      c.models.judge = m.value("judge", c.models.judge);
    }
    if (g.contains("small_models")) {
      const auto& m = g.at("small_models");
      c.small_models = c.models;
      c.small_models.extract = m.value("extract", c.models.extract);
      c.small_models.reason = m.value("reason", c.models.reason);
      c.small_models.response = m.value("response", c.models.response);
      c.small_models.judge = m.value("judge", c.models.judge);
    }
  }
  if (j.contains("embedding")) {
    const auto& e = j.at("embedding");
    c.embedding_backend = e.value("backend", c.embedding_backend);
    c.embedding_dimension = e.value("dimension", c.embedding_dimension);
    c.embedding_base_url = e.value("base_url", c.embedding_base_url);
    c.embedding_model = e.value("model", c.embedding_model);
    c.embedding_cache_path = e.value("cache_path", c.embedding_cache_path);
  }
  if (j.contains("theta")) c.consolidation.theta = j.at("theta").get<double>();
  if (j.contains("kmeans")) {
    const auto& k = j.at("kmeans");
    c.consolidation.kmeans.max_iterations =
        k.value("max_iterations", c.consolidation.kmeans.max_iterations);
    c.consolidation.kmeans.restarts = k.value("restarts", c.consolidation.kmeans.restarts);
    c.consolidation.kmeans.seed = k.value("seed", c.consolidation.kmeans.seed);
  }
  if (j.contains("retrieval")) {
    const auto& r = j.at("retrieval");
    if (r.contains("mode")) c.retrieval.mode = mode_from_string(r.at("mode").get<std::string>());
    c.retrieval.token_budget = r.value("token_budget", c.retrieval.token_budget);
    c.retrieval.overfetch_k = r.value("overfetch_k", c.retrieval.overfetch_k);
  }
  if (j.contains("ablations")) {
    const auto& a = j.at("ablations");
    c.consolidation.reasoning_enabled = !a.value("no_step2", false);
    c.extraction.skip_extraction = a.value("no_step1", false);
    c.extraction.use_categories = !a.value("flat_categories", false);
    c.extraction.use_temporal_reasoning = !a.value("no_temporal", false);
  }
  c.judge_enabled = j.value("judge_enabled", c.judge_enabled);
  if (j.contains("abstention_patterns"))
    c.abstention_patterns = j.at("abstention_patterns").get<std::vector<std::string>>();
  c.jobs = j.value("jobs", c.jobs);
  if (c.jobs < 0) throw ConfigError("jobs must be >= 0");
  c.use_small_models = j.value("small_models", c.use_small_models);
  if (c.retrieval.token_budget < 64) throw ConfigError("token_budget must be >= 64");
  if (c.consolidation.theta <= 0.0 || c.consolidation.theta >= 1.0)
    throw ConfigError("theta must lie in (0,1)");
  return c;
}

nlohmann::json RunConfig::to_json() const {
  return {
      {"gateway",
       {{"backend", gateway_backend},
        {"fixture_dir", fixture_dir},
        {"base_url", base_url},
        {"token_env", token_env},
        {"retry_limit", retry_limit},
        {"models",
         {{"extract", models.extract},
          {"reason", models.reason},
          {"response", models.response},
          {"judge", models.judge}}},
        {"small_models",
         {{"extract", small_models.extract},
          {"reason", small_models.reason},
          {"response", small_models.response},
          {"judge", small_models.judge}}}}},
      {"embedding",
       {{"backend", embedding_backend},
        {"dimension", embedding_dimension},
        {"base_url", embedding_base_url},
        {"model", embedding_model},
        {"cache_path", embedding_cache_path}}},
      {"theta", consolidation.theta},
      {"kmeans",
       {{"max_iterations", consolidation.kmeans.max_iterations},
        {"restarts", consolidation.kmeans.restarts},
        {"seed", consolidation.kmeans.seed}}},
      {"retrieval",
       {{"mode", retrieval.mode == RetrievalConfig::Mode::dense ? "dense" : "bm25"},
        {"token_budget", retrieval.token_budget},
        {"overfetch_k", retrieval.overfetch_k}}},
      {"ablations",
       {{"no_step2", !consolidation.reasoning_enabled},
        {"no_step1", extraction.skip_extraction},
        {"flat_categories", !extraction.use_categories},
        {"no_temporal", !extraction.use_temporal_reasoning}}},
      {"judge_enabled", judge_enabled},
      {"abstention_patterns", abstention_patterns},
      {"jobs", jobs},
      {"small_models", use_small_models}};
}

std::string RunConfig::config_hash() const { return hex64(fnv1a64(to_json().dump())); }

std::shared_ptr<LlmBackend> RunConfig::make_llm_backend() const {
  if (gateway_backend == "mock") {
    if (fixture_dir.empty()) throw ConfigError("mock gateway requires gateway.fixture_dir");
    return std::make_shared<MockLlmBackend>(fixture_dir);
  }
  if (gateway_backend == "http") {
    if (base_url.empty()) throw ConfigError("http gateway requires gateway.base_url");
    return std::make_shared<HttpLlmBackend>(base_url, token_env);
  }
  throw ConfigError("unknown gateway backend \"" + gateway_backend + "\"");
}

std::shared_ptr<EmbeddingBackend> RunConfig::make_embedding_backend() const {
  if (embedding_backend == "mock")
    return std::make_shared<MockEmbeddingBackend>(embedding_dimension);
  if (embedding_backend == "http") {
    if (embedding_base_url.empty())
      throw ConfigError("http embedding backend requires embedding.base_url");
    return std::make_shared<HttpEmbeddingBackend>(embedding_base_url, embedding_model, token_env,
                                                  embedding_dimension);
  }
  throw ConfigError("unknown embedding backend \"" + embedding_backend + "\"");
}

GatewayConfig RunConfig::gateway_config() const {
  GatewayConfig g;
  g.backend = make_llm_backend();
  g.retry_limit = retry_limit;
  g.models = use_small_models ? small_models : models;
  return g;
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& config_file) {
  if (!config_file) return RunConfig::from_json(nlohmann::json::object());
  std::ifstream in(*config_file);
  if (!in) throw ConfigError("cannot open config file " + config_file->string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("malformed JSON config " + config_file->string());
  return RunConfig::from_json(j);
}

MemoryStore build_memory(const Conversation& conversation, const RunConfig& config,
                         LlmGateway& gateway, EmbeddingClient& embeddings, Manifest* manifest,
                         WarningLog* warnings) {
  if (manifest)
    manifest->append({{"event", "build_started"},
                      {"conversation", conversation.conversation_id},
                      {"config_hash", config.config_hash()},
                      {"config", config.to_json()}});
  return construct_memory(conversation, config.extraction, config.consolidation, gateway,
                          embeddings, manifest, warnings, config.config_hash());
}

QueryResult query_memory(const MemoryStore& store, const std::string& question,
                         const RunConfig& config, LlmGateway* gateway,
                         EmbeddingClient& embeddings, DatasetStyle style, bool dry_run,
                         WarningLog* warnings) {
  QueryResult result;
  result.ranked = retrieve(question, store, config.retrieval, &embeddings, warnings);
  result.context = assemble_context(result.ranked, store, config.retrieval, warnings);
  if (!dry_run) {
    if (!gateway) throw ConfigError("answer generation requires a gateway (or use --dry-run)");
    result.answer_text = answer(question, result.context, *gateway, style);
  }
  return result;
}

}  // namespace epimem
