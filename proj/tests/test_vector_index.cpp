#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "epimem/embedding.hpp"
#include "epimem/vector_index.hpp"
#include "support/test_support.hpp"

using namespace epimem;
using namespace epimem::testing;

TEST_CASE("mock embedding follows the documented hash-seeding procedure") {
  MockEmbeddingBackend backend(16);
  const std::string text = "current residence: Lives in Rome with girlfriend Hana";
  const auto v = backend.embed(text);
  REQUIRE(v.size() == 16);

  // Independent recomputation: FNV-1a seed, mt19937_64 + standard normals,
  // then L2 normalization.
  std::mt19937_64 rng(fnv1a64(text));
  std::normal_distribution<double> normal(0.0, 1.0);
  EmbeddingVector expected(16);
  double norm = 0.0;
  for (auto& x : expected) {
    x = normal(rng);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (size_t i = 0; i < expected.size(); ++i) CHECK(v[i] == doctest::Approx(expected[i] / norm));

  double self = 0.0;
  for (double x : v) self += x * x;
  CHECK(self == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(backend.embed(text) == v);
}

TEST_CASE("embedding client caches by content") {
  auto backend = std::make_shared<MockEmbeddingBackend>(8);
  EmbeddingClient client(backend);
  MemoryFragment a;
  a.key = "k";
  a.content = "c";
  MemoryFragment b = a;
  b.fragment_id = "other-id";
  const auto va = client.embed_fragment(a);
  const auto vb = client.embed_fragment(b);
  CHECK(va == vb);  // same key/content, same vector
  CHECK(client.cache_size() == 1);
  CHECK(client.cache_hits() == 1);
}

TEST_CASE("embedding cache round-trips through disk") {
  ScratchDir dir("emb");
  auto backend = std::make_shared<MockEmbeddingBackend>(8);
  EmbeddingClient client(backend);
  const auto v1 = client.embed_text("alpha");
  const auto v2 = client.embed_text("beta");
  client.save_cache(dir / "cache.bin");

  EmbeddingClient fresh(backend);
  fresh.load_cache(dir / "cache.bin");
  CHECK(fresh.cache_size() == 2);
  CHECK(fresh.embed_text("alpha") == v1);
  CHECK(fresh.cache_hits() == 1);

  EmbeddingClient wrong(std::make_shared<MockEmbeddingBackend>(12));
  CHECK_THROWS_AS(wrong.load_cache(dir / "cache.bin"), DataError);
  CHECK(v2.size() == 8);
}

TEST_CASE("cosine basics") {
  EmbeddingVector v{0.3, -1.2, 4.0};
  CHECK(cosine(v, v) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(cosine(EmbeddingVector{1, 0}, EmbeddingVector{0, 1}) == 0.0);
  CHECK(cosine(EmbeddingVector{1, 2, 3}, EmbeddingVector{4, 5, 6}) ==
        doctest::Approx(0.9746).epsilon(1e-4));
  CHECK_THROWS_AS(cosine(EmbeddingVector{1, 2}, EmbeddingVector{1, 2, 3}), DimensionMismatch);
  WarningLog log;
  CHECK(cosine(EmbeddingVector{0, 0}, EmbeddingVector{1, 1}, &log) == 0.0);
  CHECK(log.size() == 1);
}

TEST_CASE("cosine symmetry and scale invariance") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    EmbeddingVector a(6), b(6);
    for (auto& x : a) x = normal(rng);
    for (auto& x : b) x = normal(rng);
    CHECK(std::abs(cosine(a, b) - cosine(b, a)) < 1e-12);
    const double scale = 0.001 + (rng() % 1000) / 10.0;
    EmbeddingVector scaled = a;
    for (auto& x : scaled) x *= scale;
    CHECK(std::abs(cosine(scaled, b) - cosine(a, b)) < 1e-9);
    CHECK(cosine(a, b) >= -1.0 - 1e-12);
    CHECK(cosine(a, b) <= 1.0 + 1e-12);
  }
}

TEST_CASE("dense topk equals the exhaustive oracle, ties by fragment_id") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> normal(0.0, 1.0);
  DenseIndex index;
  std::vector<std::pair<std::string, EmbeddingVector>> entries;
  for (int i = 0; i < 100; ++i) {
    EmbeddingVector v(5);
    for (auto& x : v) x = normal(rng);
    const std::string id = "f" + std::to_string(100 + i);
    entries.emplace_back(id, v);
    index.add(id, v);
  }
  index.seal();

  EmbeddingVector query(5);
  for (auto& x : query) x = normal(rng);
  auto got = index.topk(query, 10);
  REQUIRE(got.size() == 10);

  auto oracle = entries;
  std::vector<ScoredId> scored;
  for (const auto& [id, v] : oracle) scored.push_back({id, cosine(query, v)});
  std::stable_sort(scored.begin(), scored.end(), [](const ScoredId& a, const ScoredId& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.fragment_id < b.fragment_id;
  });
  for (size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].fragment_id == scored[i].fragment_id);
    CHECK(got[i].score == doctest::Approx(scored[i].score).epsilon(1e-12));
  }
}

TEST_CASE("dense topk is insertion-order invariant with exact ties") {
  EmbeddingVector q{1.0, 0.0};
  std::vector<std::pair<std::string, EmbeddingVector>> entries = {
      {"b", {2.0, 0.0}}, {"a", {1.0, 0.0}}, {"c", {0.5, 0.0}}};  // all cosine 1 with q
  DenseIndex forward, backward;
  for (const auto& [id, v] : entries) forward.add(id, v);
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) backward.add(it->first, it->second);
  forward.seal();
  backward.seal();
  auto f = forward.topk(q, 3), b = backward.topk(q, 3);
  REQUIRE(f.size() == 3);
  CHECK(f[0].fragment_id == "a");
  CHECK(f[1].fragment_id == "b");
  CHECK(f[2].fragment_id == "c");
  for (size_t i = 0; i < 3; ++i) CHECK(f[i].fragment_id == b[i].fragment_id);
  // k > size returns everything.
  CHECK(forward.topk(q, 99).size() == 3);
}

TEST_CASE("bm25 single-document score matches the formula") {
  Bm25Index index;
  index.add("d1", "cat sat");
  index.seal();
  // N=1, df=1, tf=1, dl=avgdl=2: idf = ln(1 + 0.5/1.5), tf-term = 1.
  const double expected = std::log(1.0 + (1.0 - 1.0 + 0.5) / (1.0 + 0.5));
  CHECK(index.score({"cat"}, "d1") == doctest::Approx(expected).epsilon(1e-12));
  CHECK(index.score({"dog"}, "d1") == 0.0);  // absent term contributes 0
  CHECK(index.topk("", 5).empty());
}

namespace {

// Plain-formula oracle, computed without the index internals.
double bm25_oracle(const std::vector<std::string>& query,
                   const std::vector<std::vector<std::string>>& docs, size_t target,
                   double k1 = 1.2, double b = 0.75) {
  const double n = static_cast<double>(docs.size());
  double avgdl = 0.0;
  for (const auto& d : docs) avgdl += d.size();
  avgdl /= n;
  double score = 0.0;
  for (const auto& term : query) {
    double df = 0.0;
    for (const auto& d : docs)
      if (std::count(d.begin(), d.end(), term) > 0) df += 1.0;
    const double tf =
        static_cast<double>(std::count(docs[target].begin(), docs[target].end(), term));
    if (tf == 0 || df == 0) continue;
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * docs[target].size() / avgdl));
  }
  return score;
}

}  // namespace

TEST_CASE("bm25 ranking matches the formula oracle on a toy corpus") {
  const std::vector<std::string> texts = {
      "the cat sat on the mat",  "a dog chased the cat",     "dogs and cats living together",
      "the quick brown fox",     "cat cat cat everywhere"};
  Bm25Index index;
  std::vector<std::vector<std::string>> docs;
  for (size_t i = 0; i < texts.size(); ++i) {
    index.add("d" + std::to_string(i), texts[i]);
    docs.push_back(Bm25Index::tokenize(texts[i]));
  }
  index.seal();

  const std::string query = "cat dog";
  const auto qterms = Bm25Index::tokenize(query);
  auto ranked = index.topk(query, 5);
  REQUIRE(ranked.size() == 5);
  std::vector<ScoredId> oracle;
  for (size_t i = 0; i < texts.size(); ++i)
    oracle.push_back({"d" + std::to_string(i), bm25_oracle(qterms, docs, i)});
  std::sort(oracle.begin(), oracle.end(), [](const ScoredId& a, const ScoredId& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.fragment_id < b.fragment_id;
  });
  for (size_t i = 0; i < ranked.size(); ++i) {
    CHECK(ranked[i].fragment_id == oracle[i].fragment_id);
    CHECK(ranked[i].score == doctest::Approx(oracle[i].score).epsilon(1e-12));
  }
}

TEST_CASE("bm25 monotonicity: more query-term occurrences never score lower") {
  std::mt19937_64 rng(31);
  const std::vector<std::string> vocab = {"red", "blue", "green", "fish", "bird", "tree"};
  for (int trial = 0; trial < 50; ++trial) {
    // Base corpus with a target doc that contains "fish" at least once.
    std::vector<std::vector<std::string>> docs;
    for (int d = 0; d < 4; ++d) {
      std::vector<std::string> doc;
      const int len = 4 + static_cast<int>(rng() % 5);
      for (int w = 0; w < len; ++w) doc.push_back(vocab[rng() % vocab.size()]);
      docs.push_back(std::move(doc));
    }
    docs[0][0] = "fish";
    // Bump tf by replacing a non-"fish" slot, holding length, df and N fixed.
    auto bumped = docs;
    for (auto& w : bumped[0]) {
      if (w != "fish") {
        w = "fish";
        break;
      }
    }
    auto build = [](const std::vector<std::vector<std::string>>& corpus) {
      Bm25Index index;
      for (size_t i = 0; i < corpus.size(); ++i) {
        std::string text;
        for (const auto& w : corpus[i]) text += w + " ";
        index.add("d" + std::to_string(i), text);
      }
      index.seal();
      return index;
    };
    const auto before = build(docs).score({"fish"}, "d0");
    const auto after = build(bumped).score({"fish"}, "d0");
    CHECK(after >= before - 1e-12);
  }
}
