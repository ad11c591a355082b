#include "support/test_support.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "epimem/evaluation.hpp"

namespace epimem::testing {

namespace {
std::atomic<int> scratch_counter{0};
}

ScratchDir::ScratchDir(const std::string& tag) {
  path_ = fs::temp_directory_path() /
          ("epimem-" + tag + "-" + std::to_string(::getpid()) + "-" +
           std::to_string(scratch_counter.fetch_add(1)));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

ScratchDir::~ScratchDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("test support: cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << content;
}

fs::path source_dir() { return fs::path(EPIMEM_SOURCE_DIR); }
fs::path fixtures_dir() { return fs::path(EPIMEM_TESTS_DIR) / "fixtures"; }
fs::path golden_dir() { return fs::path(EPIMEM_TESTS_DIR) / "golden"; }

// ---------------------------------------------------------------------------
// Deterministic reply synthesis

namespace {

struct PromptMessage {
  std::string id;
  std::string date;
  std::string text;
};

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::vector<PromptMessage> parse_conversation_block(const std::string& prompt) {
  const std::string marker = "<Conversation>\n";
  const auto pos = prompt.rfind(marker);
  std::vector<PromptMessage> messages;
  if (pos == std::string::npos) return messages;
  for (const auto& line : lines_of(prompt.substr(pos + marker.size()))) {
    if (line.empty() || line.front() != '[') continue;
    const auto id_end = line.find(']');
    const auto date_start = line.find('(', id_end);
    const auto date_end = line.find(')', date_start);
    if (id_end == std::string::npos || date_start == std::string::npos ||
        date_end == std::string::npos)
      continue;
    PromptMessage m;
    m.id = line.substr(1, id_end - 1);
    m.date = line.substr(date_start + 1, 10);
    m.text = date_end + 2 <= line.size() ? line.substr(date_end + 2) : "";
    messages.push_back(std::move(m));
  }
  return messages;
}

struct PromptFragment {
  std::string key;
  std::string time;
  std::string content;
};

std::vector<PromptFragment> parse_fragment_block(const std::string& prompt) {
  const std::string marker = "Below are the memory fragments to analyze:";
  const auto pos = prompt.rfind(marker);
  std::vector<PromptFragment> fragments;
  if (pos == std::string::npos) return fragments;
  for (const auto& line : lines_of(prompt.substr(pos + marker.size()))) {
    if (line.empty() || line.front() != '[') continue;
    const auto close = line.find("]: ");
    if (close == std::string::npos) continue;
    const std::string head = line.substr(1, close - 1);
    const auto comma = head.rfind(", ");
    if (comma == std::string::npos) continue;
    fragments.push_back(
        {head.substr(0, comma), head.substr(comma + 2), line.substr(close + 3)});
  }
  return fragments;
}

std::string first_words(const std::string& text, int n) {
  std::istringstream in(text);
  std::string word, out;
  for (int i = 0; i < n && (in >> word); ++i) {
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  return out;
}

std::string synth_extraction(const std::string& prompt, bool flat) {
  const auto messages = parse_conversation_block(prompt);
  nlohmann::json factual = nlohmann::json::array();
  nlohmann::json experiential = nlohmann::json::array();
  nlohmann::json subjective = nlohmann::json::array();
  nlohmann::json flat_list = nlohmann::json::array();
  for (size_t i = 0; i < messages.size(); ++i) {
    const auto& m = messages[i];
    std::string date;
    switch (i % 4) {
      case 1: date = "Before " + m.date; break;
      case 2: date = "After " + m.date; break;
      default: date = m.date; break;
    }
    nlohmann::json entry = {{"key", first_words(m.text, 2)},
                            {"value", m.text},
                            {"message_id", m.id},
                            {"date", date}};
    if (flat) {
      flat_list.push_back(std::move(entry));
    } else {
      switch (i % 3) {
        case 0: factual.push_back(std::move(entry)); break;
        case 1: experiential.push_back(std::move(entry)); break;
        default: subjective.push_back(std::move(entry)); break;
      }
    }
  }
  if (flat) return nlohmann::json{{"Personal_Information", flat_list}}.dump(2);
  return nlohmann::json{{"Factual_Information", factual},
                        {"Experiential_Information", experiential},
                        {"Subjective_Information", subjective}}
      .dump(2);
}

std::string synth_reasoning(const std::string& prompt) {
  const auto fragments = parse_fragment_block(prompt);
  nlohmann::json insights = nlohmann::json::array();
  if (!fragments.empty()) {
    insights.push_back({{"inference_type", "accumulation"},
                        {"key", "recurring theme"},
                        {"date", fragments.front().time},
                        {"value", "User logged " + std::to_string(fragments.size()) +
                                      " related items over time"}});
    insights.push_back({{"inference_type", "connection/implication"},
                        {"key", "topic link"},
                        {"date", fragments.back().time},
                        {"value", "Entries about " + fragments.front().key +
                                      " connect across sessions"}});
  }
  return nlohmann::json{{"extended_insight", insights}}.dump(2);
}

std::string synth_answer(const std::string& prompt) {
  // Context lines are the only "[key, time]: content" lines in answer prompts.
  std::vector<PromptFragment> context;
  for (const auto& line : lines_of(prompt)) {
    if (line.empty() || line.front() != '[') continue;
    const auto close = line.find("]: ");
    if (close == std::string::npos) continue;
    const std::string head = line.substr(1, close - 1);
    const auto comma = head.rfind(", ");
    if (comma == std::string::npos) continue;
    context.push_back({head.substr(0, comma), head.substr(comma + 2), line.substr(close + 3)});
  }
  if (context.empty()) return "Not mentioned in the conversation";

  std::string question;
  if (auto pos = prompt.find("Question: "); pos != std::string::npos) {
    question = prompt.substr(pos + 10);
    if (auto nl = question.find('\n'); nl != std::string::npos) question.resize(nl);
  } else if (auto q = prompt.find("Now, please consider the following question:\n\n");
             q != std::string::npos) {
    question = prompt.substr(q + 46);
    if (auto nl = question.find('\n'); nl != std::string::npos) question.resize(nl);
  }

  const auto q_tokens = metric_tokenize(question);
  size_t best = 0;
  int best_overlap = -1;
  for (size_t i = 0; i < context.size(); ++i) {
    const auto c_tokens = metric_tokenize(context[i].key + " " + context[i].content);
    int overlap = 0;
    for (const auto& t : q_tokens)
      for (const auto& c : c_tokens)
        if (t == c) {
          ++overlap;
          break;
        }
    if (overlap > best_overlap) {
      best_overlap = overlap;
      best = i;
    }
  }
  return first_words(context[best].content, 8);
}

std::string synth_judge(const std::string& prompt) {
  auto block = [&](const std::string& open, const std::string& close) -> std::string {
    const auto a = prompt.find(open);
    if (a == std::string::npos) return "";
    const auto start = a + open.size();
    const auto b = prompt.find(close, start);
    if (b == std::string::npos) return "";
    std::string out = prompt.substr(start, b - start);
    while (!out.empty() && (out.front() == '\n')) out.erase(out.begin());
    while (!out.empty() && (out.back() == '\n')) out.pop_back();
    return out;
  };
  const auto gold = metric_tokenize(block("<gold_answer>", "</gold_answer>"));
  const auto pred = metric_tokenize(block("<predicted_answer>", "</predicted_answer>"));
  if (gold.empty() || pred.empty()) return "0";
  int overlap = 0;
  std::vector<bool> used(pred.size(), false);
  for (const auto& g : gold) {
    for (size_t i = 0; i < pred.size(); ++i) {
      if (!used[i] && pred[i] == g) {
        used[i] = true;
        ++overlap;
        break;
      }
    }
  }
  const int score =
      static_cast<int>(100.0 * overlap / static_cast<double>(std::max(gold.size(), pred.size())));
  return std::to_string(score);
}

}  // namespace

std::string RecordingLlmBackend::synthesize(const CompletionRequest& request) {
  const std::string& prompt = request.user_prompt;
  if (prompt.find("Assign a score from 0 to 100") != std::string::npos) return synth_judge(prompt);
  if (prompt.find("five inference types") != std::string::npos) return synth_reasoning(prompt);
  if (prompt.find("Short Answer:") != std::string::npos ||
      prompt.find("Respond with a short phrase only") != std::string::npos)
    return synth_answer(prompt);
  if (prompt.find("\"Personal_Information\"") != std::string::npos)
    return synth_extraction(prompt, /*flat=*/true);
  if (prompt.find("INSTRUCTIONS") != std::string::npos)
    return synth_extraction(prompt, /*flat=*/false);
  return "OK";
}

RecordingLlmBackend::RecordingLlmBackend(fs::path fixture_dir) : dir_(std::move(fixture_dir)) {
  fs::create_directories(dir_);
}

std::string RecordingLlmBackend::complete(const CompletionRequest& request) {
  const auto file = dir_ / (MockLlmBackend::fixture_key(request) + ".txt");
  if (fs::exists(file)) return read_file(file);
  const std::string reply = synthesize(request);
  MockLlmBackend::write_fixture(dir_, request, reply,
                                first_words(request.user_prompt, 6));
  return reply;
}

Message make_message(const std::string& id, int session_index, const std::string& iso_date,
                     const std::string& text, const std::string& speaker) {
  Message m;
  m.message_id = id;
  m.session_index = session_index;
  auto d = Date::parse_iso(iso_date);
  if (!d) throw DataError("bad test date " + iso_date);
  m.date = *d;
  m.speaker = speaker;
  m.text = text;
  return m;
}

Session example_session() {
  Session s;
  s.session_index = 1;
  s.messages = {
      make_message("msg-301", 1, "2024-05-17",
                   "I'm living in Rome now with my girlfriend, Hana. We moved here last summer "
                   "because she started grad school at Stanford."),
      make_message("msg-302", 1, "2024-05-17",
                   "I quit my job at Coupang in March. I just didn't see myself growing there "
                   "anymore."),
      make_message("msg-303", 1, "2024-05-17",
                   "I'm thinking about switching into UX design. I've always liked the idea of "
                   "making tech more human-friendly."),
      make_message("msg-304", 1, "2024-05-17",
                   "My brother Junho lives in Seattle. He's an engineer and always sends me "
                   "photos of the mountains."),
      make_message("msg-305", 1, "2024-05-17", "I ate chicken with my friends yesterday."),
  };
  return s;
}

std::string fragments_digest(const std::vector<MemoryFragment>& fragments) {
  std::ostringstream out;
  for (const auto& f : fragments) {
    out << f.fragment_id << "|" << f.key << "|" << f.content << "|" << category_name(f.category)
        << "|" << render_temporal(f.temporal) << "|" << f.session_index << "|";
    for (const auto& id : f.source_message_ids) out << id << ",";
    if (f.inference_type) out << "|" << inference_type_name(*f.inference_type);
    if (f.source_pair) out << "|" << f.source_pair->first << "+" << f.source_pair->second;
    out << "\n";
  }
  return out.str();
}

RunConfig mock_run_config(const fs::path& fixture_dir, int dimension) {
  RunConfig config;
  config.gateway_backend = "mock";
  config.fixture_dir = fixture_dir.string();
  config.embedding_backend = "mock";
  config.embedding_dimension = dimension;
  return config;
}

EvalOptions eval_options_from(const RunConfig& config, const std::string& ablation, int jobs) {
  EvalOptions options;
  options.extraction = config.extraction;
  options.consolidation = config.consolidation;
  options.retrieval = config.retrieval;
  options.judge_enabled = config.judge_enabled;
  options.abstention_patterns = config.abstention_patterns;
  options.jobs = jobs;
  options.ablation_label = ablation;
  options.config_hash = config.config_hash();
  return options;
}

namespace {

LlmGateway recording_gateway(const RunConfig& config) {
  GatewayConfig g;
  g.backend = std::make_shared<RecordingLlmBackend>(config.fixture_dir);
  g.retry_limit = config.retry_limit;
  g.models = config.use_small_models ? config.small_models : config.models;
  return LlmGateway(g);
}

}  // namespace

void record_conversation_fixtures(const Conversation& conversation, const RunConfig& config) {
  LlmGateway gateway = recording_gateway(config);
  EmbeddingClient embeddings(config.make_embedding_backend());
  (void)build_memory(conversation, config, gateway, embeddings);
}

void record_eval_fixtures(const EvalDataset& dataset, DatasetStyle style,
                          const RunConfig& config) {
  LlmGateway gateway = recording_gateway(config);
  EmbeddingClient embeddings(config.make_embedding_backend());
  (void)run_eval(dataset, style, eval_options_from(config, "record", /*jobs=*/1), gateway,
                 embeddings);
}

int run_cli(const std::vector<std::string>& args, std::string* stdout_text) {
  ScratchDir capture("cli-out");
  const fs::path out_file = capture / "out.txt";
  std::string command;
  for (const auto& arg : args) {
    std::string quoted = "'";
    for (char c : arg) {
      if (c == '\'')
        quoted += "'\\''";
      else
        quoted.push_back(c);
    }
    quoted.push_back('\'');
    if (!command.empty()) command.push_back(' ');
    command += quoted;
  }
  command += " > '" + out_file.string() + "' 2>&1";
  const int rc = std::system(command.c_str());
  if (stdout_text) *stdout_text = read_file(out_file);
  return WEXITSTATUS(rc);
}

}  // namespace epimem::testing
