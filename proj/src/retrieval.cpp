#include "epimem/retrieval.hpp"

#include <algorithm>
#include <sstream>

#include "epimem/prompts.hpp"

namespace epimem {

int count_tokens(const std::string& text, const Tokenizer& tokenizer) {
  if (tokenizer) return tokenizer(text);
  // Word-to-token heuristic: ceil(words * 4/3).
  std::istringstream in(text);
  std::string word;
  long long words = 0;
  while (in >> word) ++words;
  return static_cast<int>((words * 4 + 2) / 3);
}

std::vector<ScoredId> retrieve(const std::string& query, const MemoryStore& store,
                               const RetrievalConfig& config, EmbeddingClient* embeddings,
                               WarningLog* warnings) {
  if (store.size() == 0) return {};
  const size_t k = static_cast<size_t>(std::max(1, config.overfetch_k));
  if (config.mode == RetrievalConfig::Mode::dense) {
    if (!embeddings) throw ConfigError("dense retrieval requires an embedding client");
    return store.dense_index().topk(embeddings->embed_text(query), k, warnings);
  }
  return store.bm25_index().topk(query, k);
}

std::string AssembledContext::text() const {
  std::string out;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (i > 0) out.push_back('\n');
    out += lines[i];
  }
  return out;
}

AssembledContext assemble_context(const std::vector<ScoredId>& ranked, const MemoryStore& store,
                                  const RetrievalConfig& config, WarningLog* warnings) {
  if (config.token_budget < 64) throw ConfigError("token_budget must be >= 64");

  // Rank-greedy admission: a candidate joins iff the full rendering with it
  // still fits; later, smaller candidates may still fit after a skip.
  std::vector<const MemoryFragment*> admitted;
  std::string rendered;
  for (const auto& candidate : ranked) {
    const MemoryFragment* f = store.find(candidate.fragment_id);
    if (!f) throw InternalError("ranked candidate not in store: " + candidate.fragment_id);
    std::string attempt = rendered;
    if (!attempt.empty()) attempt.push_back('\n');
    attempt += render_fragment_line(*f);
    if (count_tokens(attempt, config.tokenizer) <= config.token_budget) {
      rendered = std::move(attempt);
      admitted.push_back(f);
    }
  }

  AssembledContext context;
  if (admitted.empty()) {
    if (!ranked.empty())
      warn(warnings, "token budget " + std::to_string(config.token_budget) +
                         " admits no candidates; context is empty");
    return context;
  }

  std::sort(admitted.begin(), admitted.end(),
            [](const MemoryFragment* a, const MemoryFragment* b) {
              return fragment_chrono_less(*a, *b);
            });
  for (const auto* f : admitted) {
    context.lines.push_back(render_fragment_line(*f));
    context.included_fragment_ids.push_back(f->fragment_id);
  }
  context.token_count = count_tokens(context.text(), config.tokenizer);
  return context;
}

std::string build_answer_prompt(const std::string& query, const AssembledContext& context,
                                DatasetStyle style) {
  const std::string tmpl =
      style == DatasetStyle::locomo ? answer_locomo_template() : answer_longmemeval_template();
  return render_template(tmpl, {{"context", context.text()}, {"question", query}});
}

std::string answer(const std::string& query, const AssembledContext& context, LlmGateway& gateway,
                   DatasetStyle style) {
  auto request = gateway.request_for_role(LlmRole::response, std::nullopt,
                                          build_answer_prompt(query, context, style));
  return gateway.complete(request);
}

}  // namespace epimem
