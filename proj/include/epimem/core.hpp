#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "epimem/date.hpp"

namespace epimem {

// Error taxonomy; the CLI maps these onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class DataError : public Error {
 public:
  using Error::Error;
};
class GatewayError : public Error {
 public:
  using Error::Error;
};
class InternalError : public Error {
 public:
  using Error::Error;
};

// Append-only warning sink. Non-fatal anomalies (unparseable dates, dropped
// extraction entries, skipped pairs) land here instead of aborting a run.
class WarningLog {
 public:
  void add(std::string message) {
    std::lock_guard<std::mutex> lock(mutex_);
    entries_.push_back(std::move(message));
  }
  std::vector<std::string> snapshot() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return entries_;
  }
  size_t size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return entries_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::vector<std::string> entries_;
};

inline void warn(WarningLog* log, std::string message) {
  if (log) log->add(std::move(message));
}

// FNV-1a 64-bit; used for mock-backend fixture keys, embedding-cache keys
// and config hashes.
uint64_t fnv1a64(std::string_view text);
std::string hex64(uint64_t value);

struct Message {
  std::string message_id;
  int session_index = 0;  // 1-based
  Date date;
  std::optional<std::string> weekday;  // derived from date when absent
  std::string speaker;
  std::string text;
};

struct Session {
  int session_index = 0;
  std::vector<Message> messages;

  Date session_date() const;  // date of the first message
  const Message* find_message(std::string_view message_id) const;
};

// Variant order doubles as the tie rank at equal anchor dates:
// before < on_date < range < after.
enum class TemporalKind { before = 0, on_date = 1, range = 2, after = 3 };

struct TemporalRef {
  TemporalKind kind = TemporalKind::on_date;
  Date start;  // the anchor; for range this is d_start
  Date end;    // == start except for range

  static TemporalRef on(Date d) { return {TemporalKind::on_date, d, d}; }
  static TemporalRef before(Date d) { return {TemporalKind::before, d, d}; }
  static TemporalRef after(Date d) { return {TemporalKind::after, d, d}; }
  static TemporalRef range(Date a, Date b) { return {TemporalKind::range, a, b}; }

  Date anchor() const { return start; }
  bool operator==(const TemporalRef&) const = default;
};

// Prompt-surface rendering: "YYYY-MM-DD", "Before YYYY-MM-DD",
// "After YYYY-MM-DD", "YYYY-MM-DD to YYYY-MM-DD".
std::string render_temporal(const TemporalRef& t);

// Total: any string maps to a TemporalRef; unrecognized ones degrade to
// on_date(fallback) with a warning.
TemporalRef parse_temporal(std::string_view text, Date fallback, WarningLog* warnings = nullptr);

// Total order: anchor date first, then variant rank, then range end.
// Remaining ties are broken by fragment_id at the call site.
int compare_temporal(const TemporalRef& a, const TemporalRef& b);
inline bool temporal_less(const TemporalRef& a, const TemporalRef& b) {
  return compare_temporal(a, b) < 0;
}

enum class Category { factual, experiential, subjective, reasoning };

std::string_view category_name(Category c);
std::optional<Category> category_from_name(std::string_view name);

// The five cross-session evolution patterns; present iff category==reasoning.
enum class InferenceType {
  extension_generalization,
  accumulation,
  specification_refinement,
  transformation,
  connection_implication,
};

std::string_view inference_type_name(InferenceType t);  // "extension/generalization", ...
std::optional<InferenceType> inference_type_from_name(std::string_view name);  // case-insensitive

struct MemoryFragment {
  std::string fragment_id;  // "s{i}-m{n}" extracted, "s{i}-r{n}" reasoned
  std::string key;
  std::string content;
  Category category = Category::factual;
  TemporalRef temporal;
  std::vector<std::string> source_message_ids;  // empty for reasoned fragments
  int session_index = 0;
  std::optional<InferenceType> inference_type;
  std::optional<std::pair<std::string, std::string>> source_pair;  // (pool cluster, new cluster)
  std::vector<std::string> warnings;

  bool is_reasoned() const { return category == Category::reasoning; }
};

// Text used for embeddings and the BM25 corpus.
inline std::string embedding_text(const MemoryFragment& f) { return f.key + ": " + f.content; }

// Context / Step-2 surface form: "[{key}, {time}]: {content}".
std::string render_fragment_line(const MemoryFragment& f);

// Canonical chronological order: compare_temporal, ties by fragment_id.
bool fragment_chrono_less(const MemoryFragment& a, const MemoryFragment& b);

}  // namespace epimem
