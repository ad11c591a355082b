#include "epimem/vector_index.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

namespace epimem {

double cosine(std::span<const double> a, std::span<const double> b, WarningLog* warnings) {
  if (a.size() != b.size())
    throw DimensionMismatch("cosine over dimensions " + std::to_string(a.size()) + " and " +
                            std::to_string(b.size()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    warn(warnings, "cosine against a zero vector, scoring 0");
    return 0.0;
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

void DenseIndex::add(std::string fragment_id, EmbeddingVector vector) {
  if (sealed_) throw InternalError("add to a sealed dense index");
  if (vectors_.empty())
    dimension_ = static_cast<int>(vector.size());
  else if (static_cast<int>(vector.size()) != dimension_)
    throw DimensionMismatch("index dimension " + std::to_string(dimension_) + ", vector " +
                            std::to_string(vector.size()));
  for (const auto& id : ids_)
    if (id == fragment_id) throw InternalError("duplicate fragment_id in index: " + fragment_id);
  ids_.push_back(std::move(fragment_id));
  vectors_.push_back(std::move(vector));
}

void DenseIndex::seal() { sealed_ = true; }

std::vector<ScoredId> DenseIndex::topk(const EmbeddingVector& query, size_t k,
                                       WarningLog* warnings) const {
  if (!sealed_) throw InternalError("topk on an unsealed dense index");
  if (ids_.empty() || k == 0) return {};
  std::vector<ScoredId> scored;
  scored.reserve(ids_.size());
  for (size_t i = 0; i < ids_.size(); ++i)
    scored.push_back({ids_[i], cosine(query, vectors_[i], warnings)});
  std::sort(scored.begin(), scored.end(), [](const ScoredId& x, const ScoredId& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.fragment_id < y.fragment_id;
  });
  scored.resize(std::min(k, scored.size()));
  return scored;
}

std::vector<std::string> Bm25Index::tokenize(std::string_view text) {
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

void Bm25Index::add(std::string fragment_id, const std::string& text) {
  if (sealed_) throw InternalError("add to a sealed bm25 index");
  if (slot_of_.count(fragment_id))
    throw InternalError("duplicate fragment_id in index: " + fragment_id);
  const size_t slot = ids_.size();
  const auto tokens = tokenize(text);
  std::map<std::string, int> tf;
  for (const auto& t : tokens) ++tf[t];
  for (const auto& [term, count] : tf) postings_[term].push_back({slot, count});
  doc_lengths_.push_back(static_cast<int>(tokens.size()));
  slot_of_.emplace(fragment_id, slot);
  ids_.push_back(std::move(fragment_id));
}

void Bm25Index::seal() {
  double total = 0.0;
  for (int len : doc_lengths_) total += len;
  avg_doc_length_ = doc_lengths_.empty() ? 0.0 : total / doc_lengths_.size();
  sealed_ = true;
}

double Bm25Index::score_slot(const std::vector<std::string>& query_terms, size_t slot) const {
  const double n_docs = static_cast<double>(ids_.size());
  double score = 0.0;
  for (const auto& term : query_terms) {
    auto posting = postings_.find(term);
    if (posting == postings_.end()) continue;  // absent terms contribute 0
    const double df = static_cast<double>(posting->second.size());
    int tf = 0;
    for (const auto& [doc_slot, count] : posting->second) {
      if (doc_slot == slot) {
        tf = count;
        break;
      }
    }
    if (tf == 0) continue;
    const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
    const double dl = doc_lengths_[slot];
    const double denom = tf + params_.k1 * (1.0 - params_.b + params_.b * dl / avg_doc_length_);
    score += idf * (tf * (params_.k1 + 1.0)) / denom;
  }
  return score;
}

double Bm25Index::score(const std::vector<std::string>& query_terms,
                        const std::string& fragment_id) const {
  if (!sealed_) throw InternalError("score on an unsealed bm25 index");
  auto it = slot_of_.find(fragment_id);
  if (it == slot_of_.end()) throw InternalError("unknown fragment_id: " + fragment_id);
  return score_slot(query_terms, it->second);
}

std::vector<ScoredId> Bm25Index::topk(const std::string& query, size_t k) const {
  if (!sealed_) throw InternalError("topk on an unsealed bm25 index");
  const auto terms = tokenize(query);
  if (terms.empty() || ids_.empty() || k == 0) return {};
  std::vector<ScoredId> scored;
  scored.reserve(ids_.size());
  for (size_t slot = 0; slot < ids_.size(); ++slot)
    scored.push_back({ids_[slot], score_slot(terms, slot)});
  std::sort(scored.begin(), scored.end(), [](const ScoredId& x, const ScoredId& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.fragment_id < y.fragment_id;
  });
  scored.resize(std::min(k, scored.size()));
  return scored;
}

}  // namespace epimem
