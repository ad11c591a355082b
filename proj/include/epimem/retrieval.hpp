#pragma once

#include <functional>
#include <string>
#include <vector>

#include "epimem/core.hpp"
#include "epimem/gateway.hpp"
#include "epimem/memory_store.hpp"

namespace epimem {

enum class DatasetStyle { locomo, longmemeval };

using Tokenizer = std::function<int(const std::string&)>;

struct RetrievalConfig {
  enum class Mode { dense, bm25 };
  Mode mode = Mode::dense;
  int token_budget = 2048;  // >= 64
  int overfetch_k = 200;
  Tokenizer tokenizer;  // empty: heuristic ceil(words * 4/3)
};

// Default word-count heuristic unless a tokenizer is supplied.
int count_tokens(const std::string& text, const Tokenizer& tokenizer = {});

// Top overfetch_k candidates over the full store (extracted ∪ reasoned);
// dense mode embeds the raw query.
std::vector<ScoredId> retrieve(const std::string& query, const MemoryStore& store,
                               const RetrievalConfig& config, EmbeddingClient* embeddings,
                               WarningLog* warnings = nullptr);

struct AssembledContext {
  std::vector<std::string> lines;  // chronological order
  int token_count = 0;
  std::vector<std::string> included_fragment_ids;  // same order as lines
  std::string text() const;                        // lines joined with '\n'
};

// Rank-greedy budget fill: each candidate in rank order is admitted iff the
// full rendering including it still fits the budget; admitted lines are then
// re-sorted chronologically.
AssembledContext assemble_context(const std::vector<ScoredId>& ranked, const MemoryStore& store,
                                  const RetrievalConfig& config, WarningLog* warnings = nullptr);

std::string build_answer_prompt(const std::string& query, const AssembledContext& context,
                                DatasetStyle style);

std::string answer(const std::string& query, const AssembledContext& context, LlmGateway& gateway,
                   DatasetStyle style);

}  // namespace epimem
