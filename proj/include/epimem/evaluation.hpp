#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "epimem/consolidation.hpp"
#include "epimem/core.hpp"
#include "epimem/extraction.hpp"
#include "epimem/retrieval.hpp"

namespace epimem {

enum class QaCategory { single_hop, multi_hop, temporal_reasoning, adversarial, knowledge_update };

std::string_view qa_category_name(QaCategory c);

// Maps each benchmark's native question types onto the five shared
// categories. Unknown raw types are hard errors naming the offending value.
QaCategory unify_category(DatasetStyle dataset, const std::string& raw_type,
                          const std::string& question_id);

struct QaItem {
  std::string question_id;
  std::string question;
  std::string gold_answer;
  std::string raw_type;
  QaCategory category = QaCategory::single_hop;
  std::string conversation_id;
};

// Metric tokenization: lowercase, split on non-alphanumerics, drop empties.
std::vector<std::string> metric_tokenize(std::string_view text);

double bleu1(const std::string& prediction, const std::string& reference);

struct PrfScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

PrfScore rouge1(const std::string& prediction, const std::string& reference);
PrfScore rougeL(const std::string& prediction, const std::string& reference);

// First integer in the judge's reply, clamped to [0,100]; nullopt after one
// retry still yields nothing parseable (a counted judge-failure).
std::optional<int> judge(const std::string& question, const std::string& gold,
                         const std::string& prediction, LlmGateway& gateway);

// A prediction is "safe" when it contains any of the abstention patterns,
// case-insensitively.
bool is_abstention(const std::string& prediction, const std::vector<std::string>& patterns);
std::vector<std::string> default_abstention_patterns(DatasetStyle style);

// Fraction of adversarial items whose prediction is a safe abstention.
// predictions runs parallel to items; non-adversarial items are ignored.
double adversarial_accuracy(const std::vector<QaItem>& items,
                            const std::vector<std::string>& predictions,
                            const std::vector<std::string>& patterns);

struct Conversation {
  std::string conversation_id;
  std::vector<Session> sessions;
};

struct EvalDataset {
  std::vector<Conversation> conversations;
  std::vector<QaItem> items;
};

// Loaders for the two published benchmark layouts (field maps in the README)
// and for this project's native conversation files.
EvalDataset load_locomo(const std::filesystem::path& path);
EvalDataset load_longmemeval(const std::filesystem::path& path);
Conversation load_native_conversation(const std::filesystem::path& path);
EvalDataset load_dataset(const std::filesystem::path& path, DatasetStyle style);

class Manifest;
class MemoryStore;

// Extraction + consolidation for one conversation; returns a sealed store
// ready for retrieval. Shared by the CLI driver and the eval harness.
MemoryStore construct_memory(const Conversation& conversation, const ExtractionConfig& extraction,
                             const ConsolidationConfig& consolidation, LlmGateway& gateway,
                             EmbeddingClient& embeddings, Manifest* manifest = nullptr,
                             WarningLog* warnings = nullptr, const std::string& config_hash = "");

struct ItemRecord {
  std::string question_id;
  QaCategory category = QaCategory::single_hop;
  std::string prediction;
  double bleu1 = 0.0;
  double rouge1_f1 = 0.0;
  double rougeL_f1 = 0.0;
  std::optional<int> judge_score;
  bool judge_failed = false;
  bool abstained = false;
};

struct CategoryStats {
  int count = 0;
  int judged = 0;
  int judge_failures = 0;
  double llm_judge_mean = 0.0;  // 0-100, over judged items
  double bleu1_mean = 0.0;
  double rouge1_mean = 0.0;
  double rougeL_mean = 0.0;
};

struct EvalReport {
  std::map<std::string, CategoryStats> per_category;  // keyed by category name
  CategoryStats total;
  double adversarial_accuracy = 0.0;
  int adversarial_count = 0;
  std::vector<ItemRecord> items;  // dataset order
  int token_budget = 0;
  std::string ablation;  // "none", "no-step2", ...

  nlohmann::json to_json() const;   // machine-readable, schema-versioned
  std::string render_table() const; // human-readable summary
};

struct EvalOptions {
  ExtractionConfig extraction;
  ConsolidationConfig consolidation;
  RetrievalConfig retrieval;
  bool judge_enabled = true;
  std::vector<std::string> abstention_patterns;  // empty: dataset default
  int jobs = 1;
  std::string ablation_label = "none";
  std::string config_hash;
};

// Builds memory per conversation, then answers and scores every question.
// Questions run concurrently (jobs > 1) with a deterministic ordered merge.
EvalReport run_eval(const EvalDataset& dataset, DatasetStyle style, const EvalOptions& options,
                    LlmGateway& gateway, EmbeddingClient& embeddings,
                    WarningLog* warnings = nullptr);

std::map<std::string, int> category_counts(const EvalDataset& dataset);

}  // namespace epimem
