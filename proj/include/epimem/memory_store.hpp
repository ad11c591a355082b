#pragma once

#include <string>
#include <vector>

#include "epimem/consolidation.hpp"
#include "epimem/core.hpp"
#include "epimem/embedding.hpp"
#include "epimem/vector_index.hpp"

namespace epimem {

// The sealed memory of one conversation: extracted fragments, reasoning
// fragments, their retrieval indexes, and the consolidation trace.
class MemoryStore {
 public:
  std::string conversation_id;
  std::vector<MemoryFragment> extracted;  // fragment_id order
  std::vector<MemoryFragment> reasoned;   // fragment_id order
  PersistentPool final_pool;
  std::vector<SessionTrace> trace;

  std::string embedding_backend_id;
  int dimension = 0;
  std::string config_hash;

  // Sorts both fragment lists, embeds anything not yet embedded (reasoning
  // fragments are embedded here), and builds the dense + BM25 indexes over
  // the union. Further mutation is rejected.
  void seal(EmbeddingClient& embeddings);
  bool sealed() const { return sealed_; }

  size_t size() const { return extracted.size() + reasoned.size(); }
  const MemoryFragment* find(std::string_view fragment_id) const;

  const DenseIndex& dense_index() const;
  const Bm25Index& bm25_index() const;

 private:
  DenseIndex dense_;
  Bm25Index bm25_;
  bool sealed_ = false;
};

}  // namespace epimem
