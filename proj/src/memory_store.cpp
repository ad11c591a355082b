#include "epimem/memory_store.hpp"

#include <algorithm>

namespace epimem {

void MemoryStore::seal(EmbeddingClient& embeddings) {
  if (sealed_) throw InternalError("store already sealed");
  auto by_id = [](const MemoryFragment& a, const MemoryFragment& b) {
    return a.fragment_id < b.fragment_id;
  };
  std::sort(extracted.begin(), extracted.end(), by_id);
  std::sort(reasoned.begin(), reasoned.end(), by_id);

  embedding_backend_id = embeddings.backend().id();
  dimension = embeddings.backend().dimension();

  dense_ = DenseIndex{};
  bm25_ = Bm25Index{};
  for (const auto* list : {&extracted, &reasoned}) {
    for (const auto& f : *list) {
      dense_.add(f.fragment_id, embeddings.embed_fragment(f));
      bm25_.add(f.fragment_id, embedding_text(f));
    }
  }
  dense_.seal();
  bm25_.seal();
  sealed_ = true;
}

const MemoryFragment* MemoryStore::find(std::string_view fragment_id) const {
  for (const auto* list : {&extracted, &reasoned})
    for (const auto& f : *list)
      if (f.fragment_id == fragment_id) return &f;
  return nullptr;
}

const DenseIndex& MemoryStore::dense_index() const {
  if (!sealed_) throw InternalError("store not sealed");
  return dense_;
}

const Bm25Index& MemoryStore::bm25_index() const {
  if (!sealed_) throw InternalError("store not sealed");
  return bm25_;
}

}  // namespace epimem
