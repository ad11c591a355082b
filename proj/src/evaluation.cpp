#include "epimem/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "epimem/memory_store.hpp"
#include "epimem/prompts.hpp"
#include "epimem/store.hpp"

namespace epimem {

std::string_view qa_category_name(QaCategory c) {
  switch (c) {
    case QaCategory::single_hop: return "single_hop";
    case QaCategory::multi_hop: return "multi_hop";
    case QaCategory::temporal_reasoning: return "temporal_reasoning";
    case QaCategory::adversarial: return "adversarial";
    case QaCategory::knowledge_update: return "knowledge_update";
  }
  return "single_hop";
}

namespace {

std::string normalize_type(const std::string& raw) {
  std::string out;
  for (unsigned char c : raw) {
    if (c == '_' || c == ' ')
      out.push_back('-');
    else
      out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

}  // namespace

QaCategory unify_category(DatasetStyle dataset, const std::string& raw_type,
                          const std::string& question_id) {
  const std::string type = normalize_type(raw_type);
  if (dataset == DatasetStyle::locomo) {
    if (type == "open-domain-knowledge" || type == "single-hop") return QaCategory::single_hop;
    if (type == "multi-hop") return QaCategory::multi_hop;
    if (type == "temporal-reasoning") return QaCategory::temporal_reasoning;
    if (type == "adversarial") return QaCategory::adversarial;
    throw DataError("unmappable LoCoMo question type \"" + raw_type + "\"");
  }
  // LongMemEval: abstention ids override the type; "single*" types are
  // single-hop; knowledge-revision types are knowledge updates; the rest map
  // by replacing "session" with "hop".
  if (ends_with(question_id, "_abs")) return QaCategory::adversarial;
  if (type.find("single") != std::string::npos) return QaCategory::single_hop;
  if (type.find("knowledge") != std::string::npos) return QaCategory::knowledge_update;
  const std::string hopped = replace_all(type, "session", "hop");
  if (hopped == "multi-hop") return QaCategory::multi_hop;
  if (hopped == "temporal-reasoning") return QaCategory::temporal_reasoning;
  throw DataError("unmappable LongMemEval question type \"" + raw_type + "\"");
}

std::vector<std::string> metric_tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

namespace {

std::map<std::string, int> token_counts(const std::vector<std::string>& tokens) {
  std::map<std::string, int> counts;
  for (const auto& t : tokens) ++counts[t];
  return counts;
}

int clipped_overlap(const std::vector<std::string>& pred, const std::vector<std::string>& ref) {
  const auto pc = token_counts(pred), rc = token_counts(ref);
  int overlap = 0;
  for (const auto& [token, count] : pc) {
    auto it = rc.find(token);
    if (it != rc.end()) overlap += std::min(count, it->second);
  }
  return overlap;
}

double f1_of(double precision, double recall) {
  return (precision + recall) == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

}  // namespace

double bleu1(const std::string& prediction, const std::string& reference) {
  const auto pred = metric_tokenize(prediction), ref = metric_tokenize(reference);
  if (pred.empty() || ref.empty()) return 0.0;
  const double precision =
      static_cast<double>(clipped_overlap(pred, ref)) / static_cast<double>(pred.size());
  const double brevity =
      pred.size() > ref.size()
          ? 1.0
          : std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(pred.size()));
  return precision * brevity;
}

PrfScore rouge1(const std::string& prediction, const std::string& reference) {
  const auto pred = metric_tokenize(prediction), ref = metric_tokenize(reference);
  if (pred.empty() || ref.empty()) return {};
  const double overlap = clipped_overlap(pred, ref);
  PrfScore s;
  s.precision = overlap / static_cast<double>(pred.size());
  s.recall = overlap / static_cast<double>(ref.size());
  s.f1 = f1_of(s.precision, s.recall);
  return s;
}

PrfScore rougeL(const std::string& prediction, const std::string& reference) {
  const auto pred = metric_tokenize(prediction), ref = metric_tokenize(reference);
  if (pred.empty() || ref.empty()) return {};
  // Token-level longest common subsequence.
  const size_t m = pred.size(), n = ref.size();
  std::vector<std::vector<int>> dp(m + 1, std::vector<int>(n + 1, 0));
  for (size_t i = 1; i <= m; ++i)
    for (size_t j = 1; j <= n; ++j)
      dp[i][j] = pred[i - 1] == ref[j - 1] ? dp[i - 1][j - 1] + 1
                                           : std::max(dp[i - 1][j], dp[i][j - 1]);
  const double lcs = dp[m][n];
  PrfScore s;
  s.precision = lcs / static_cast<double>(m);
  s.recall = lcs / static_cast<double>(n);
  s.f1 = f1_of(s.precision, s.recall);
  return s;
}

namespace {

std::optional<int> first_integer(const std::string& text) {
  for (size_t i = 0; i < text.size(); ++i) {
    if (std::isdigit(static_cast<unsigned char>(text[i]))) {
      size_t end = i;
      while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
      const bool negative = i > 0 && text[i - 1] == '-';
      long value = std::stol(text.substr(i, end - i));
      return negative ? -static_cast<int>(value) : static_cast<int>(value);
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<int> judge(const std::string& question, const std::string& gold,
                         const std::string& prediction, LlmGateway& gateway) {
  auto request = gateway.request_for_role(
      LlmRole::judge, std::nullopt,
      render_template(judge_template(), {{"question", question},
                                         {"gold_answer", gold},
                                         {"predicted_answer", prediction}}));
  for (int attempt = 0; attempt < 2; ++attempt) {
    const std::string reply = gateway.complete(request);
    if (auto score = first_integer(reply)) return std::clamp(*score, 0, 100);
  }
  return std::nullopt;  // judge-failure, excluded from means but counted
}

bool is_abstention(const std::string& prediction, const std::vector<std::string>& patterns) {
  std::string lower;
  lower.reserve(prediction.size());
  for (unsigned char c : prediction) lower.push_back(static_cast<char>(std::tolower(c)));
  for (const auto& pattern : patterns) {
    std::string p;
    p.reserve(pattern.size());
    for (unsigned char c : pattern) p.push_back(static_cast<char>(std::tolower(c)));
    if (!p.empty() && lower.find(p) != std::string::npos) return true;
  }
  return false;
}

std::vector<std::string> default_abstention_patterns(DatasetStyle style) {
  if (style == DatasetStyle::locomo)
    return {"not mentioned in the conversation", "not mentioned", "no information",
            "cannot be answered", "cannot answer"};
  return {"not mentioned",   "no information",      "not enough information",
          "cannot answer",   "cannot be answered",  "i don't know",
          "i do not know",   "does not mention",    "unanswerable",
          "never mentioned", "not specified"};
}

double adversarial_accuracy(const std::vector<QaItem>& items,
                            const std::vector<std::string>& predictions,
                            const std::vector<std::string>& patterns) {
  if (items.size() != predictions.size())
    throw InternalError("adversarial_accuracy: items/predictions size mismatch");
  int adversarial = 0, safe = 0;
  for (size_t i = 0; i < items.size(); ++i) {
    if (items[i].category != QaCategory::adversarial) continue;
    ++adversarial;
    if (is_abstention(predictions[i], patterns)) ++safe;
  }
  return adversarial == 0 ? 0.0 : static_cast<double>(safe) / adversarial;
}

// ---------------------------------------------------------------------------
// Dataset loading

namespace {

nlohmann::json parse_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file " + path.string());
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw DataError("malformed JSON in " + path.string());
  return j;
}

std::string json_to_text(const nlohmann::json& value) {
  if (value.is_string()) return value.get<std::string>();
  return value.dump();
}

Date parse_locomo_datetime(const std::string& text, const std::string& where) {
  // "1:56 pm on 8 May, 2023"
  static const std::map<std::string, int> months = {
      {"january", 1}, {"february", 2}, {"march", 3},     {"april", 4},
      {"may", 5},     {"june", 6},     {"july", 7},      {"august", 8},
      {"september", 9}, {"october", 10}, {"november", 11}, {"december", 12}};
  std::string date_part = text;
  if (auto pos = text.find(" on "); pos != std::string::npos) date_part = text.substr(pos + 4);
  std::istringstream in(date_part);
  int day = 0, year = 0;
  std::string month_word;
  in >> day >> month_word >> year;
  if (!month_word.empty() && month_word.back() == ',') month_word.pop_back();
  std::transform(month_word.begin(), month_word.end(), month_word.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  auto it = months.find(month_word);
  if (in.fail() || it == months.end() || day < 1 || year < 1)
    throw DataError("unparseable date \"" + text + "\" at " + where);
  Date d{year, it->second, day};
  if (!d.valid()) throw DataError("invalid date \"" + text + "\" at " + where);
  return d;
}

Date parse_longmemeval_datetime(const std::string& text, const std::string& where) {
  // "2023/05/20 (Sat) 02:21"
  if (text.size() < 10) throw DataError("unparseable date \"" + text + "\" at " + where);
  std::string iso = text.substr(0, 10);
  std::replace(iso.begin(), iso.end(), '/', '-');
  auto d = Date::parse_iso(iso);
  if (!d) throw DataError("unparseable date \"" + text + "\" at " + where);
  return *d;
}

std::string locomo_category_to_type(const nlohmann::json& category, const std::string& where) {
  if (category.is_string()) return category.get<std::string>();
  if (category.is_number_integer()) {
    switch (category.get<int>()) {
      case 1: return "multi-hop";
      case 2: return "temporal-reasoning";
      case 3: return "open-domain-knowledge";
      case 4: return "single-hop";
      case 5: return "adversarial";
      default: break;
    }
  }
  throw DataError("unknown LoCoMo category " + category.dump() + " at " + where);
}

}  // namespace

EvalDataset load_locomo(const std::filesystem::path& path) {
  const auto root = parse_json_file(path);
  if (!root.is_array()) throw DataError(path.string() + ": expected a top-level array");
  EvalDataset dataset;
  int sample_no = 0;
  for (const auto& sample : root) {
    ++sample_no;
    const std::string where = path.string() + " sample " + std::to_string(sample_no);
    Conversation conv;
    conv.conversation_id = sample.contains("sample_id") ? json_to_text(sample.at("sample_id"))
                                                        : "conv-" + std::to_string(sample_no);
    if (!sample.contains("conversation"))
      throw DataError(where + ": missing \"conversation\"");
    const auto& raw_conv = sample.at("conversation");

    std::vector<int> session_numbers;
    for (const auto& [key, value] : raw_conv.items()) {
      if (key.rfind("session_", 0) == 0 && value.is_array()) {
        const std::string tail = key.substr(8);
        if (!tail.empty() && std::all_of(tail.begin(), tail.end(), [](unsigned char c) {
              return std::isdigit(c) != 0;
            }))
          session_numbers.push_back(std::stoi(tail));
      }
    }
    std::sort(session_numbers.begin(), session_numbers.end());

    int session_index = 0;
    for (int number : session_numbers) {
      const std::string session_key = "session_" + std::to_string(number);
      const auto& turns = raw_conv.at(session_key);
      if (turns.empty()) continue;
      ++session_index;
      const std::string dt_key = session_key + "_date_time";
      if (!raw_conv.contains(dt_key))
        throw DataError(where + ": missing \"" + dt_key + "\"");
      const Date date =
          parse_locomo_datetime(raw_conv.at(dt_key).get<std::string>(), where + " " + dt_key);
      Session session;
      session.session_index = session_index;
      int turn_no = 0;
      for (const auto& turn : turns) {
        ++turn_no;
        Message m;
        m.message_id = turn.contains("dia_id")
                           ? json_to_text(turn.at("dia_id"))
                           : session_key + ":" + std::to_string(turn_no);
        m.session_index = session_index;
        m.date = date;
        m.speaker = turn.contains("speaker") ? json_to_text(turn.at("speaker")) : "";
        m.text = turn.contains("text") ? json_to_text(turn.at("text")) : "";
        if (turn.contains("blip_caption") && turn.at("blip_caption").is_string()) {
          // Image turns keep their caption so the text is never empty.
          const std::string caption = turn.at("blip_caption").get<std::string>();
          if (!caption.empty()) m.text += (m.text.empty() ? "" : " ") + ("[shares a photo: " + caption + "]");
        }
        if (m.text.empty()) continue;
        session.messages.push_back(std::move(m));
      }
      if (!session.messages.empty()) conv.sessions.push_back(std::move(session));
    }
    if (conv.sessions.empty()) throw DataError(where + ": conversation has no sessions");

    if (sample.contains("qa")) {
      int qa_no = 0;
      for (const auto& qa : sample.at("qa")) {
        ++qa_no;
        QaItem item;
        item.question_id = conv.conversation_id + "-q" + std::to_string(qa_no);
        item.question = qa.contains("question") ? json_to_text(qa.at("question")) : "";
        if (qa.contains("answer"))
          item.gold_answer = json_to_text(qa.at("answer"));
        else if (qa.contains("adversarial_answer"))
          item.gold_answer = json_to_text(qa.at("adversarial_answer"));
        if (!qa.contains("category"))
          throw DataError(where + " qa " + std::to_string(qa_no) + ": missing category");
        item.raw_type = locomo_category_to_type(qa.at("category"),
                                                where + " qa " + std::to_string(qa_no));
        item.category = unify_category(DatasetStyle::locomo, item.raw_type, item.question_id);
        item.conversation_id = conv.conversation_id;
        dataset.items.push_back(std::move(item));
      }
    }
    dataset.conversations.push_back(std::move(conv));
  }
  return dataset;
}

EvalDataset load_longmemeval(const std::filesystem::path& path) {
  const auto root = parse_json_file(path);
  if (!root.is_array()) throw DataError(path.string() + ": expected a top-level array");
  EvalDataset dataset;
  int item_no = 0;
  for (const auto& raw : root) {
    ++item_no;
    const std::string where = path.string() + " item " + std::to_string(item_no);
    QaItem item;
    item.question_id = raw.contains("question_id") ? json_to_text(raw.at("question_id"))
                                                   : "q" + std::to_string(item_no);
    item.question = raw.contains("question") ? json_to_text(raw.at("question")) : "";
    item.gold_answer = raw.contains("answer") ? json_to_text(raw.at("answer")) : "";
    if (!raw.contains("question_type")) throw DataError(where + ": missing question_type");
    item.raw_type = raw.at("question_type").get<std::string>();
    item.category = unify_category(DatasetStyle::longmemeval, item.raw_type, item.question_id);
    item.conversation_id = item.question_id;  // one haystack per question

    Conversation conv;
    conv.conversation_id = item.conversation_id;
    if (!raw.contains("haystack_sessions"))
      throw DataError(where + ": missing haystack_sessions");
    const auto& sessions = raw.at("haystack_sessions");
    const auto dates = raw.contains("haystack_dates") ? raw.at("haystack_dates")
                                                      : nlohmann::json::array();
    const auto ids = raw.contains("haystack_session_ids") ? raw.at("haystack_session_ids")
                                                          : nlohmann::json::array();
    int session_index = 0;
    for (size_t s = 0; s < sessions.size(); ++s) {
      const auto& turns = sessions[s];
      if (!turns.is_array() || turns.empty()) continue;
      ++session_index;
      Date date{2023, 1, 1};
      if (s < dates.size())
        date = parse_longmemeval_datetime(dates[s].get<std::string>(),
                                          where + " haystack_dates[" + std::to_string(s) + "]");
      const std::string session_id =
          s < ids.size() ? json_to_text(ids[s]) : "s" + std::to_string(session_index);
      Session session;
      session.session_index = session_index;
      int turn_no = 0;
      for (const auto& turn : turns) {
        ++turn_no;
        Message m;
        m.message_id = session_id + ":" + std::to_string(turn_no);
        m.session_index = session_index;
        m.date = date;
        m.speaker = turn.contains("role") ? json_to_text(turn.at("role")) : "";
        m.text = turn.contains("content") ? json_to_text(turn.at("content")) : "";
        if (m.text.empty()) continue;
        session.messages.push_back(std::move(m));
      }
      if (!session.messages.empty()) conv.sessions.push_back(std::move(session));
    }
    if (conv.sessions.empty()) throw DataError(where + ": no usable haystack sessions");
    dataset.conversations.push_back(std::move(conv));
    dataset.items.push_back(std::move(item));
  }
  return dataset;
}

Conversation load_native_conversation(const std::filesystem::path& path) {
  const auto root = parse_json_file(path);
  Conversation conv;
  conv.conversation_id = root.contains("conversation_id")
                             ? json_to_text(root.at("conversation_id"))
                             : path.stem().string();
  if (!root.contains("sessions") || !root.at("sessions").is_array())
    throw DataError(path.string() + ": missing \"sessions\" array");
  std::set<std::string> seen_message_ids;
  for (const auto& raw_session : root.at("sessions")) {
    Session session;
    session.session_index = raw_session.value("session_index", 0);
    for (const auto& raw_message : raw_session.at("messages")) {
      Message m;
      m.message_id = raw_message.at("message_id").get<std::string>();
      if (!seen_message_ids.insert(m.message_id).second)
        throw DataError(path.string() + ": duplicate message_id \"" + m.message_id + "\"");
      m.session_index = session.session_index;
      auto date = Date::parse_iso(raw_message.at("date").get<std::string>());
      if (!date)
        throw DataError(path.string() + ": bad date for message " + m.message_id);
      m.date = *date;
      if (raw_message.contains("weekday")) m.weekday = raw_message.at("weekday").get<std::string>();
      m.speaker = raw_message.value("speaker", std::string{});
      m.text = raw_message.at("text").get<std::string>();
      session.messages.push_back(std::move(m));
    }
    if (session.session_index == 0)
      session.session_index = static_cast<int>(conv.sessions.size()) + 1;
    if (!conv.sessions.empty() && session.session_index <= conv.sessions.back().session_index)
      throw DataError(path.string() + ": session_index values must be strictly increasing");
    conv.sessions.push_back(std::move(session));
  }
  if (conv.sessions.empty()) throw DataError(path.string() + ": conversation has no sessions");
  return conv;
}

EvalDataset load_dataset(const std::filesystem::path& path, DatasetStyle style) {
  return style == DatasetStyle::locomo ? load_locomo(path) : load_longmemeval(path);
}

std::map<std::string, int> category_counts(const EvalDataset& dataset) {
  std::map<std::string, int> counts;
  for (const auto& item : dataset.items) ++counts[std::string(qa_category_name(item.category))];
  return counts;
}

// ---------------------------------------------------------------------------
// Memory construction + evaluation drivers

MemoryStore construct_memory(const Conversation& conversation, const ExtractionConfig& extraction,
                             const ConsolidationConfig& consolidation, LlmGateway& gateway,
                             EmbeddingClient& embeddings, Manifest* manifest,
                             WarningLog* warnings, const std::string& config_hash) {
  std::vector<SessionMemory> session_memories;
  for (const auto& session : conversation.sessions) {
    SessionMemory sm;
    sm.session_index = session.session_index;
    sm.session_date = session.session_date();
    sm.fragments = extract_session(session, gateway, extraction, warnings);
    for (const auto& f : sm.fragments) sm.vectors.push_back(embeddings.embed_fragment(f));
    session_memories.push_back(std::move(sm));
  }
  auto result =
      consolidate_conversation(session_memories, consolidation, &gateway, manifest, warnings);

  MemoryStore store;
  store.conversation_id = conversation.conversation_id;
  store.extracted = std::move(result.extracted);
  store.reasoned = std::move(result.reasoned);
  store.final_pool = std::move(result.final_pool);
  store.trace = std::move(result.trace);
  store.config_hash = config_hash;
  store.seal(embeddings);
  return store;
}

namespace {

CategoryStats finalize_stats(const std::vector<const ItemRecord*>& records) {
  CategoryStats stats;
  stats.count = static_cast<int>(records.size());
  double judge_total = 0.0;
  for (const auto* r : records) {
    stats.bleu1_mean += r->bleu1;
    stats.rouge1_mean += r->rouge1_f1;
    stats.rougeL_mean += r->rougeL_f1;
    if (r->judge_score) {
      judge_total += *r->judge_score;
      ++stats.judged;
    }
    if (r->judge_failed) ++stats.judge_failures;
  }
  if (stats.count > 0) {
    stats.bleu1_mean /= stats.count;
    stats.rouge1_mean /= stats.count;
    stats.rougeL_mean /= stats.count;
  }
  if (stats.judged > 0) stats.llm_judge_mean = judge_total / stats.judged;
  return stats;
}

nlohmann::json stats_to_json(const CategoryStats& s) {
  return {{"count", s.count},
          {"judged", s.judged},
          {"judge_failures", s.judge_failures},
          {"llm_judge_mean", s.llm_judge_mean},
          {"bleu1_mean", s.bleu1_mean},
          {"rouge1_mean", s.rouge1_mean},
          {"rougeL_mean", s.rougeL_mean}};
}

}  // namespace

EvalReport run_eval(const EvalDataset& dataset, DatasetStyle style, const EvalOptions& options,
                    LlmGateway& gateway, EmbeddingClient& embeddings, WarningLog* warnings) {
  const int jobs = std::max(1, options.jobs);

  // Stores are independent across conversations; build them concurrently and
  // merge in dataset order.
  std::map<std::string, MemoryStore> stores;
  {
    std::vector<std::optional<MemoryStore>> built(dataset.conversations.size());
    std::atomic<size_t> next_conv{0};
    std::exception_ptr build_failure;
    std::mutex build_failure_mutex;
    auto build_worker = [&] {
      for (size_t i = next_conv.fetch_add(1); i < built.size(); i = next_conv.fetch_add(1)) {
        try {
          built[i] = construct_memory(dataset.conversations[i], options.extraction,
                                      options.consolidation, gateway, embeddings, nullptr,
                                      warnings, options.config_hash);
        } catch (...) {
          std::lock_guard<std::mutex> lock(build_failure_mutex);
          if (!build_failure) build_failure = std::current_exception();
        }
      }
    };
    if (jobs == 1 || built.size() <= 1) {
      build_worker();
    } else {
      std::vector<std::thread> workers;
      for (int w = 0; w < std::min<int>(jobs, static_cast<int>(built.size())); ++w)
        workers.emplace_back(build_worker);
      for (auto& worker : workers) worker.join();
    }
    if (build_failure) std::rethrow_exception(build_failure);
    for (size_t i = 0; i < built.size(); ++i) {
      const auto& id = dataset.conversations[i].conversation_id;
      if (!stores.emplace(id, std::move(*built[i])).second)
        throw DataError("duplicate conversation id in dataset: " + id);
    }
  }

  const auto patterns = options.abstention_patterns.empty()
                            ? default_abstention_patterns(style)
                            : options.abstention_patterns;

  std::vector<ItemRecord> records(dataset.items.size());
  std::atomic<size_t> next{0};
  auto evaluate_one = [&](size_t i) {
    const QaItem& item = dataset.items[i];
    auto store_it = stores.find(item.conversation_id);
    if (store_it == stores.end())
      throw DataError("question " + item.question_id + " references unknown conversation " +
                      item.conversation_id);
    const MemoryStore& store = store_it->second;

    ItemRecord r;
    r.question_id = item.question_id;
    r.category = item.category;
    auto ranked = retrieve(item.question, store, options.retrieval, &embeddings, warnings);
    auto context = assemble_context(ranked, store, options.retrieval, warnings);
    r.prediction = answer(item.question, context, gateway, style);
    r.bleu1 = bleu1(r.prediction, item.gold_answer);
    r.rouge1_f1 = rouge1(r.prediction, item.gold_answer).f1;
    r.rougeL_f1 = rougeL(r.prediction, item.gold_answer).f1;
    if (options.judge_enabled) {
      r.judge_score = judge(item.question, item.gold_answer, r.prediction, gateway);
      r.judge_failed = !r.judge_score.has_value();
    }
    r.abstained = is_abstention(r.prediction, patterns);
    records[i] = std::move(r);
  };

  if (jobs == 1 || records.size() <= 1) {
    for (size_t i = 0; i < records.size(); ++i) evaluate_one(i);
  } else {
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (size_t i = next.fetch_add(1); i < records.size(); i = next.fetch_add(1)) {
          try {
            evaluate_one(i);
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& worker : workers) worker.join();
    if (failure) std::rethrow_exception(failure);
  }

  EvalReport report;
  report.items = std::move(records);
  report.token_budget = options.retrieval.token_budget;
  report.ablation = options.ablation_label;

  std::map<std::string, std::vector<const ItemRecord*>> by_category;
  std::vector<const ItemRecord*> all;
  std::vector<std::string> predictions;
  for (const auto& r : report.items) {
    by_category[std::string(qa_category_name(r.category))].push_back(&r);
    all.push_back(&r);
    predictions.push_back(r.prediction);
    if (r.category == QaCategory::adversarial) ++report.adversarial_count;
  }
  for (const auto& [name, list] : by_category) report.per_category[name] = finalize_stats(list);
  report.total = finalize_stats(all);
  report.adversarial_accuracy = adversarial_accuracy(dataset.items, predictions, patterns);
  return report;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per_cat = nlohmann::json::object();
  for (const auto& [name, stats] : per_category) per_cat[name] = stats_to_json(stats);
  nlohmann::json item_list = nlohmann::json::array();
  for (const auto& r : items) {
    nlohmann::json j = {{"question_id", r.question_id},
                        {"category", std::string(qa_category_name(r.category))},
                        {"prediction", r.prediction},
                        {"bleu1", r.bleu1},
                        {"rouge1_f1", r.rouge1_f1},
                        {"rougeL_f1", r.rougeL_f1},
                        {"judge_failed", r.judge_failed},
                        {"abstained", r.abstained}};
    if (r.judge_score) j["judge_score"] = *r.judge_score;
    item_list.push_back(std::move(j));
  }
  return {{"schema_version", 1},
          {"ablation", ablation},
          {"token_budget", token_budget},
          {"total", stats_to_json(total)},
          {"per_category", per_cat},
          {"adversarial", {{"count", adversarial_count}, {"accuracy", adversarial_accuracy}}},
          {"items", item_list}};
}

std::string EvalReport::render_table() const {
  std::ostringstream out;
  char line[256];
  out << "ablation=" << ablation << " token_budget=" << token_budget << "\n";
  std::snprintf(line, sizeof(line), "%-20s %6s %8s %8s %8s %8s\n", "category", "count", "judge",
                "bleu1", "rouge1", "rougeL");
  out << line;
  auto row = [&](const std::string& name, const CategoryStats& s) {
    std::snprintf(line, sizeof(line), "%-20s %6d %8.2f %8.4f %8.4f %8.4f\n", name.c_str(), s.count,
                  s.llm_judge_mean, s.bleu1_mean, s.rouge1_mean, s.rougeL_mean);
    out << line;
  };
  for (const auto& [name, stats] : per_category) row(name, stats);
  row("total", total);
  std::snprintf(line, sizeof(line), "adversarial accuracy: %.4f over %d items\n",
                adversarial_accuracy, adversarial_count);
  out << line;
  if (total.judge_failures > 0) out << "judge failures: " << total.judge_failures << "\n";
  return out.str();
}

}  // namespace epimem
