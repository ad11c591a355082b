#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "epimem/core.hpp"
#include "epimem/embedding.hpp"

namespace epimem {

class DimensionMismatch : public InternalError {
 public:
  using InternalError::InternalError;
};

// Cosine similarity. Dimension mismatch is a hard error; a zero vector scores
// 0 with a warning.
double cosine(std::span<const double> a, std::span<const double> b, WarningLog* warnings = nullptr);

struct ScoredId {
  std::string fragment_id;
  double score = 0.0;
  bool operator==(const ScoredId&) const = default;
};

// Exact top-k over dense vectors. Build single-writer, then seal; reads are
// lock-free afterwards.
class DenseIndex {
 public:
  void add(std::string fragment_id, EmbeddingVector vector);
  void seal();
  bool sealed() const { return sealed_; }
  size_t size() const { return ids_.size(); }
  int dimension() const { return dimension_; }

  // min(k, size) results, descending score, ties ascending by fragment_id.
  std::vector<ScoredId> topk(const EmbeddingVector& query, size_t k,
                             WarningLog* warnings = nullptr) const;

 private:
  std::vector<std::string> ids_;
  std::vector<EmbeddingVector> vectors_;
  int dimension_ = 0;
  bool sealed_ = false;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

// Okapi BM25 with IDF = ln(1 + (N - df + 0.5) / (df + 0.5)); documents are
// "key: content" texts, lowercased and split on non-alphanumerics.
class Bm25Index {
 public:
  explicit Bm25Index(Bm25Params params = {}) : params_(params) {}

  static std::vector<std::string> tokenize(std::string_view text);

  void add(std::string fragment_id, const std::string& text);
  void seal();
  bool sealed() const { return sealed_; }
  size_t size() const { return ids_.size(); }

  double score(const std::vector<std::string>& query_terms, const std::string& fragment_id) const;
  std::vector<ScoredId> topk(const std::string& query, size_t k) const;

 private:
  double score_slot(const std::vector<std::string>& query_terms, size_t slot) const;

  Bm25Params params_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, size_t> slot_of_;
  std::unordered_map<std::string, std::vector<std::pair<size_t, int>>> postings_;  // term -> (slot, tf)
  std::vector<int> doc_lengths_;
  double avg_doc_length_ = 0.0;
  bool sealed_ = false;
};

}  // namespace epimem
