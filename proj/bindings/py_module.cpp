#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "epimem/pipeline.hpp"

namespace py = pybind11;
using namespace epimem;

namespace {

Date date_from_iso(const std::string& iso) {
  auto d = Date::parse_iso(iso);
  if (!d) throw py::value_error("not an ISO date: " + iso);
  return *d;
}

py::dict temporal_to_dict(const TemporalRef& t) {
  py::dict out;
  switch (t.kind) {
    case TemporalKind::on_date: out["kind"] = "on_date"; break;
    case TemporalKind::before: out["kind"] = "before"; break;
    case TemporalKind::after: out["kind"] = "after"; break;
    case TemporalKind::range: out["kind"] = "range"; break;
  }
  out["start"] = t.start.to_iso();
  out["end"] = t.end.to_iso();
  out["rendered"] = render_temporal(t);
  return out;
}

DatasetStyle style_from(const std::string& name) {
  if (name == "locomo") return DatasetStyle::locomo;
  if (name == "longmemeval") return DatasetStyle::longmemeval;
  throw py::value_error("style must be locomo or longmemeval");
}

}  // namespace

PYBIND11_MODULE(_epimem, m) {
  m.doc() = "episodic conversational memory engine (C++ core)";

  m.def(
      "parse_temporal",
      [](const std::string& text, const std::string& fallback_iso) {
        return temporal_to_dict(parse_temporal(text, date_from_iso(fallback_iso)));
      },
      py::arg("text"), py::arg("fallback"));

  m.def(
      "compare_temporal",
      [](const std::string& a, const std::string& b, const std::string& fallback_iso) {
        const Date fallback = date_from_iso(fallback_iso);
        return compare_temporal(parse_temporal(a, fallback), parse_temporal(b, fallback));
      },
      py::arg("a"), py::arg("b"), py::arg("fallback"));

  m.def(
      "resolve_relative_date",
      [](const std::string& expression, const std::string& message_date) -> py::object {
        auto d = resolve_relative_date(expression, date_from_iso(message_date));
        if (!d) return py::none();
        return py::str(d->to_iso());
      },
      py::arg("expression"), py::arg("message_date"));

  m.def(
      "cosine",
      [](const EmbeddingVector& a, const EmbeddingVector& b) { return cosine(a, b); },
      py::arg("a"), py::arg("b"));

  m.def(
      "topk_dense",
      [](const std::map<std::string, EmbeddingVector>& entries, const EmbeddingVector& query,
         size_t k) {
        DenseIndex index;
        for (const auto& [id, v] : entries) index.add(id, v);
        index.seal();
        std::vector<std::pair<std::string, double>> out;
        for (const auto& hit : index.topk(query, k)) out.emplace_back(hit.fragment_id, hit.score);
        return out;
      },
      py::arg("entries"), py::arg("query"), py::arg("k"));

  m.def(
      "topk_bm25",
      [](const std::map<std::string, std::string>& docs, const std::string& query, size_t k) {
        Bm25Index index;
        for (const auto& [id, text] : docs) index.add(id, text);
        index.seal();
        std::vector<std::pair<std::string, double>> out;
        for (const auto& hit : index.topk(query, k)) out.emplace_back(hit.fragment_id, hit.score);
        return out;
      },
      py::arg("docs"), py::arg("query"), py::arg("k"));

  m.def("count_tokens",
        [](const std::string& text) { return count_tokens(text); },
        py::arg("text"));

  m.def("bleu1", &bleu1, py::arg("prediction"), py::arg("reference"));
  m.def(
      "rouge1",
      [](const std::string& p, const std::string& r) {
        auto s = rouge1(p, r);
        return py::make_tuple(s.precision, s.recall, s.f1);
      },
      py::arg("prediction"), py::arg("reference"));
  m.def(
      "rougeL",
      [](const std::string& p, const std::string& r) {
        auto s = rougeL(p, r);
        return py::make_tuple(s.precision, s.recall, s.f1);
      },
      py::arg("prediction"), py::arg("reference"));

  m.def(
      "unify_category",
      [](const std::string& style, const std::string& raw_type, const std::string& question_id) {
        return std::string(
            qa_category_name(unify_category(style_from(style), raw_type, question_id)));
      },
      py::arg("style"), py::arg("raw_type"), py::arg("question_id") = std::string{});

  m.def(
      "cluster_vectors",
      [](const std::vector<EmbeddingVector>& vectors, uint64_t seed) {
        ConsolidationConfig config;
        config.kmeans.seed = seed;
        std::vector<MemoryFragment> fragments(vectors.size());
        for (size_t i = 0; i < vectors.size(); ++i) {
          fragments[i].fragment_id = "f" + std::to_string(i + 1000);  // stable lexicographic order
          fragments[i].key = fragments[i].content = fragments[i].fragment_id;
        }
        auto outcome = cluster_session(fragments, vectors, 1, config);
        py::dict out;
        out["k"] = outcome.chosen_k;
        out["silhouette"] = outcome.silhouette;
        out["fallback_singletons"] = outcome.fallback_singletons;
        std::vector<std::vector<int>> groups;
        for (const auto& cluster : outcome.clusters) {
          std::vector<int> members;
          for (const auto& id : cluster.member_fragment_ids)
            members.push_back(std::stoi(id.substr(1)) - 1000);
          groups.push_back(std::move(members));
        }
        out["clusters"] = groups;
        return out;
      },
      py::arg("vectors"), py::arg("seed") = 42);

  m.def(
      "mean_silhouette",
      [](const std::vector<int>& assignment, const std::vector<EmbeddingVector>& vectors) {
        return mean_silhouette(assignment, vectors);
      },
      py::arg("assignment"), py::arg("vectors"));

  m.def(
      "build_memory",
      [](const std::string& conversation_path, const std::string& out_store,
         const std::string& fixture_dir, int embedding_dimension, bool no_step2) {
        RunConfig config;
        config.gateway_backend = "mock";
        config.fixture_dir = fixture_dir;
        config.embedding_dimension = embedding_dimension;
        config.consolidation.reasoning_enabled = !no_step2;
        auto conversation = load_native_conversation(conversation_path);
        LlmGateway gateway(config.gateway_config());
        EmbeddingClient embeddings(config.make_embedding_backend());
        MemoryStore store = build_memory(conversation, config, gateway, embeddings);
        save_store(store, out_store);
        py::dict out;
        out["extracted"] = store.extracted.size();
        out["reasoned"] = store.reasoned.size();
        out["pool_clusters"] = store.final_pool.clusters.size();
        return out;
      },
      py::arg("conversation_path"), py::arg("out_store"), py::arg("fixture_dir"),
      py::arg("embedding_dimension") = 32, py::arg("no_step2") = false);

  m.def(
      "query_store",
      [](const std::string& store_path, const std::string& question, int budget,
         const std::string& retriever, int embedding_dimension) {
        RunConfig config;
        config.retrieval.token_budget = budget;
        config.retrieval.mode = retriever == "bm25" ? RetrievalConfig::Mode::bm25
                                                    : RetrievalConfig::Mode::dense;
        config.embedding_dimension = embedding_dimension;
        MemoryStore store = load_store(store_path);
        EmbeddingClient embeddings(config.make_embedding_backend());
        store.seal(embeddings);
        auto result = query_memory(store, question, config, nullptr, embeddings,
                                   DatasetStyle::locomo, /*dry_run=*/true);
        py::dict out;
        std::vector<std::pair<std::string, double>> ranked;
        for (const auto& hit : result.ranked) ranked.emplace_back(hit.fragment_id, hit.score);
        out["ranked"] = ranked;
        out["context"] = result.context.text();
        out["token_count"] = result.context.token_count;
        out["included"] = result.context.included_fragment_ids;
        return out;
      },
      py::arg("store_path"), py::arg("question"), py::arg("budget") = 2048,
      py::arg("retriever") = "dense", py::arg("embedding_dimension") = 32);
}
