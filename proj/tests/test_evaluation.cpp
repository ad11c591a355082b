#include <doctest.h>

#include <algorithm>
#include <random>

#include "epimem/evaluation.hpp"
#include "epimem/prompts.hpp"
#include "support/test_support.hpp"

using namespace epimem;
using namespace epimem::testing;

TEST_CASE("category unification covers both datasets") {
  CHECK(unify_category(DatasetStyle::locomo, "open-domain-knowledge", "") ==
        QaCategory::single_hop);
  CHECK(unify_category(DatasetStyle::locomo, "single-hop", "") == QaCategory::single_hop);
  CHECK(unify_category(DatasetStyle::locomo, "multi-hop", "") == QaCategory::multi_hop);
  CHECK(unify_category(DatasetStyle::locomo, "temporal-reasoning", "") ==
        QaCategory::temporal_reasoning);
  CHECK(unify_category(DatasetStyle::locomo, "adversarial", "") == QaCategory::adversarial);
  CHECK_THROWS_AS(unify_category(DatasetStyle::locomo, "weird-type", ""), DataError);

  CHECK(unify_category(DatasetStyle::longmemeval, "single-session-user", "q1") ==
        QaCategory::single_hop);
  CHECK(unify_category(DatasetStyle::longmemeval, "single-session-assistant", "q2") ==
        QaCategory::single_hop);
  CHECK(unify_category(DatasetStyle::longmemeval, "single-session-preference", "q3") ==
        QaCategory::single_hop);
  CHECK(unify_category(DatasetStyle::longmemeval, "multi-session", "q4") ==
        QaCategory::multi_hop);
  CHECK(unify_category(DatasetStyle::longmemeval, "temporal-reasoning", "q5") ==
        QaCategory::temporal_reasoning);
  CHECK(unify_category(DatasetStyle::longmemeval, "knowledge-update", "q6") ==
        QaCategory::knowledge_update);
  // The abstention suffix overrides the raw type.
  CHECK(unify_category(DatasetStyle::longmemeval, "temporal-reasoning", "q17_abs") ==
        QaCategory::adversarial);
  CHECK_THROWS_AS(unify_category(DatasetStyle::longmemeval, "essay", "q7"), DataError);
}

TEST_CASE("metric kernels on hand-computed cases") {
  CHECK(bleu1("the cat sat", "the cat sat") == doctest::Approx(1.0));
  CHECK(rouge1("the cat sat", "the cat sat").f1 == doctest::Approx(1.0));
  CHECK(rougeL("the cat sat", "the cat sat").f1 == doctest::Approx(1.0));

  const auto r1 = rouge1("the cat", "the cat sat");
  CHECK(r1.precision == doctest::Approx(1.0));
  CHECK(r1.recall == doctest::Approx(2.0 / 3.0));
  CHECK(r1.f1 == doctest::Approx(0.8));

  CHECK(bleu1("alpha beta", "gamma delta") == 0.0);
  CHECK(rouge1("alpha beta", "gamma delta").f1 == 0.0);
  CHECK(rougeL("alpha beta", "gamma delta").f1 == 0.0);
  CHECK(bleu1("", "anything") == 0.0);
  CHECK(rougeL("anything", "").f1 == 0.0);

  // Brevity penalty: short prediction against a longer reference.
  const double expected_bp = std::exp(1.0 - 3.0 / 2.0);
  CHECK(bleu1("the cat", "the cat sat") == doctest::Approx(1.0 * expected_bp).epsilon(1e-12));
  // Clipping: repeated tokens only count up to the reference multiplicity.
  CHECK(bleu1("cat cat cat", "the cat") == doctest::Approx((1.0 / 3.0) * 1.0).epsilon(1e-12));

  // Order sensitivity: rougeL sees subsequences, rouge1 does not.
  const auto bag = rouge1("sat cat the", "the cat sat");
  CHECK(bag.f1 == doctest::Approx(1.0));
  const auto seq = rougeL("sat cat the", "the cat sat");
  CHECK(seq.f1 < 1.0);
}

namespace {

// Exponential-time LCS by exhaustive subsequence enumeration.
int lcs_bruteforce(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  int best = 0;
  const size_t n = a.size();
  for (size_t mask = 0; mask < (1ull << n); ++mask) {
    std::vector<std::string> candidate;
    for (size_t i = 0; i < n; ++i)
      if (mask & (1ull << i)) candidate.push_back(a[i]);
    // is candidate a subsequence of b?
    size_t j = 0;
    for (const auto& token : b) {
      if (j < candidate.size() && token == candidate[j]) ++j;
    }
    if (j == candidate.size()) best = std::max(best, static_cast<int>(candidate.size()));
  }
  return best;
}

}  // namespace

TEST_CASE("rougeL LCS matches exhaustive search on short strings") {
  std::mt19937_64 rng(67);
  const std::vector<std::string> vocab = {"a", "b", "c", "d"};
  for (int trial = 0; trial < 60; ++trial) {
    std::string sa, sb;
    const size_t la = 1 + rng() % 9, lb = 1 + rng() % 9;
    for (size_t i = 0; i < la; ++i) sa += vocab[rng() % vocab.size()] + " ";
    for (size_t i = 0; i < lb; ++i) sb += vocab[rng() % vocab.size()] + " ";
    const auto ta = metric_tokenize(sa), tb = metric_tokenize(sb);
    const int lcs = lcs_bruteforce(ta, tb);
    const auto score = rougeL(sa, sb);
    CHECK(score.precision == doctest::Approx(double(lcs) / ta.size()).epsilon(1e-12));
    CHECK(score.recall == doctest::Approx(double(lcs) / tb.size()).epsilon(1e-12));
  }
}

TEST_CASE("judge parses the first integer and clamps") {
  ScratchDir dir("judge");
  auto pin = [&](const std::string& reply, const std::string& prediction) {
    CompletionRequest request;
    request.model_name = "default-judge";
    request.user_prompt =
        render_template(judge_template(), {{"question", "Q?"},
                                           {"gold_answer", "gold"},
                                           {"predicted_answer", prediction}});
    MockLlmBackend::write_fixture(dir.path(), request, reply, "judge " + prediction);
  };
  pin("100", "p100");
  pin("Score: 85", "p85");
  pin("great answer", "pfail");
  pin("150", "p150");

  GatewayConfig config;
  config.backend = std::make_shared<MockLlmBackend>(dir.path());
  LlmGateway gateway(config);
  CHECK(judge("Q?", "gold", "p100", gateway) == 100);
  CHECK(judge("Q?", "gold", "p85", gateway) == 85);
  CHECK(judge("Q?", "gold", "p150", gateway) == 100);  // clamped

  const size_t calls_before = gateway.call_log().size();
  CHECK(!judge("Q?", "gold", "pfail", gateway).has_value());
  CHECK(gateway.call_log().size() == calls_before + 2);  // one retry, then give up
}

TEST_CASE("abstention detection and adversarial accuracy") {
  const auto patterns = default_abstention_patterns(DatasetStyle::locomo);
  CHECK(is_abstention("This is Not Mentioned in the conversation.", patterns));
  CHECK(is_abstention("NO INFORMATION available", patterns));
  CHECK(!is_abstention("Rome", patterns));

  std::vector<QaItem> items(5);
  for (auto& item : items) item.category = QaCategory::adversarial;
  items[4].category = QaCategory::single_hop;  // ignored by the metric
  const std::string safe = "Not mentioned in the conversation";
  CHECK(adversarial_accuracy(items, {safe, safe, safe, safe, "Rome"}, patterns) == 1.0);
  CHECK(adversarial_accuracy(items, {"a", "b", "c", "d", safe}, patterns) == 0.0);
  CHECK(adversarial_accuracy(items, {safe, safe, safe, "Rome", "x"}, patterns) == 0.75);

  // 3 of 4 abstain -> 0.75 through the report aggregation.
  ScratchDir dir("adv");
  RunConfig config = mock_run_config(dir.path());
  auto dataset = load_locomo(fixtures_dir() / "mini_locomo.json");
  record_eval_fixtures(dataset, DatasetStyle::locomo, config);

  LlmGateway gateway(config.gateway_config());
  EmbeddingClient embeddings(config.make_embedding_backend());
  auto report = run_eval(dataset, DatasetStyle::locomo, eval_options_from(config), gateway,
                         embeddings);
  CHECK(report.adversarial_count == 2);
  CHECK(report.adversarial_accuracy >= 0.0);
  CHECK(report.adversarial_accuracy <= 1.0);
}

TEST_CASE("dataset loaders parse the published layouts") {
  auto locomo = load_locomo(fixtures_dir() / "mini_locomo.json");
  CHECK(locomo.conversations.size() == 2);
  CHECK(locomo.items.size() == 8);
  CHECK(locomo.conversations[0].sessions.size() == 3);
  CHECK(locomo.conversations[0].sessions[0].messages[0].message_id == "D1:1");
  CHECK(locomo.conversations[0].sessions[0].messages[0].date == Date{2023, 5, 8});
  CHECK(locomo.conversations[0].sessions[0].messages[0].speaker == "Joan");
  const auto locomo_counts = category_counts(locomo);
  CHECK(locomo_counts.at("single_hop") == 3);  // cat 4 + cat 3
  CHECK(locomo_counts.at("multi_hop") == 1);
  CHECK(locomo_counts.at("temporal_reasoning") == 2);
  CHECK(locomo_counts.at("adversarial") == 2);

  auto lme = load_longmemeval(fixtures_dir() / "mini_longmemeval.json");
  CHECK(lme.conversations.size() == 3);  // one haystack per question
  CHECK(lme.items.size() == 3);
  CHECK(lme.items[0].category == QaCategory::single_hop);
  CHECK(lme.items[1].category == QaCategory::multi_hop);
  CHECK(lme.items[2].category == QaCategory::adversarial);  // _abs id
  CHECK(lme.conversations[1].sessions.size() == 2);
  CHECK(lme.conversations[1].sessions[0].messages[0].date == Date{2023, 6, 10});

  CHECK_THROWS_AS(load_locomo(fixtures_dir() / "does_not_exist.json"), DataError);

  auto native = load_native_conversation(fixtures_dir() / "fixture_conv_a.json");
  CHECK(native.conversation_id == "fixture-a");
  CHECK(native.sessions.size() == 3);
  ScratchDir dir("native");
  write_file(dir / "dup.json", R"EPX({
    "conversation_id": "dup",
    "sessions": [{"session_index": 1, "messages": [
      {"message_id": "m1", "date": "2024-01-01", "text": "one"},
      {"message_id": "m1", "date": "2024-01-01", "text": "two"}
    ]}]
  })EPX");
  CHECK_THROWS_AS(load_native_conversation(dir / "dup.json"), DataError);
}

TEST_CASE("run_eval is deterministic and aggregates faithfully") {
  ScratchDir dir("eval");
  RunConfig config = mock_run_config(dir.path());
  auto dataset = load_locomo(fixtures_dir() / "mini_locomo.json");
  record_eval_fixtures(dataset, DatasetStyle::locomo, config);

  LlmGateway gateway(config.gateway_config());
  EmbeddingClient embeddings(config.make_embedding_backend());
  auto report1 = run_eval(dataset, DatasetStyle::locomo, eval_options_from(config), gateway,
                          embeddings);
  LlmGateway gateway2(config.gateway_config());
  EmbeddingClient embeddings2(config.make_embedding_backend());
  auto report2 = run_eval(dataset, DatasetStyle::locomo, eval_options_from(config), gateway2,
                          embeddings2);
  CHECK(report1.to_json().dump() == report2.to_json().dump());

  // Parallel evaluation merges to the same bytes.
  LlmGateway gateway4(config.gateway_config());
  EmbeddingClient embeddings4(config.make_embedding_backend());
  auto report4 = run_eval(dataset, DatasetStyle::locomo,
                          eval_options_from(config, "none", /*jobs=*/4), gateway4, embeddings4);
  CHECK(report4.to_json().dump() == report1.to_json().dump());

  // Aggregate means equal the mean of per-item records.
  double bleu_sum = 0.0;
  for (const auto& item : report1.items) bleu_sum += item.bleu1;
  CHECK(report1.total.bleu1_mean ==
        doctest::Approx(bleu_sum / report1.items.size()).epsilon(1e-12));
  int count_sum = 0;
  for (const auto& [name, stats] : report1.per_category) count_sum += stats.count;
  CHECK(count_sum == static_cast<int>(report1.items.size()));
  CHECK(report1.total.judged + report1.total.judge_failures ==
        static_cast<int>(report1.items.size()));

  // The reasoning store actually participates: conv-a repeats sentences
  // across sessions, so the pipeline produced reasoning fragments.
  MemoryStore probe = construct_memory(dataset.conversations[0], config.extraction,
                                       config.consolidation, gateway, embeddings);
  CHECK(probe.reasoned.size() > 0);
}

TEST_CASE("run_eval handles the longmemeval style end to end") {
  ScratchDir dir("lme");
  RunConfig config = mock_run_config(dir.path());
  auto dataset = load_longmemeval(fixtures_dir() / "mini_longmemeval.json");
  record_eval_fixtures(dataset, DatasetStyle::longmemeval, config);

  LlmGateway gateway(config.gateway_config());
  EmbeddingClient embeddings(config.make_embedding_backend());
  auto report = run_eval(dataset, DatasetStyle::longmemeval, eval_options_from(config), gateway,
                         embeddings);
  CHECK(report.items.size() == 3);
  CHECK(report.per_category.count("single_hop") == 1);
  CHECK(report.per_category.count("multi_hop") == 1);
  CHECK(report.per_category.count("adversarial") == 1);
  CHECK(report.adversarial_count == 1);
  // The _abs question's haystack says nothing about Iceland, so the answer
  // synthesizer cannot echo matching content and the judge scores low.
  for (const auto& r : report.items)
    if (r.category == QaCategory::adversarial) CHECK(r.prediction != "");

  LlmGateway gateway2(config.gateway_config());
  EmbeddingClient embeddings2(config.make_embedding_backend());
  auto report2 = run_eval(dataset, DatasetStyle::longmemeval, eval_options_from(config), gateway2,
                          embeddings2);
  CHECK(report.to_json().dump() == report2.to_json().dump());
  CHECK(report.render_table() == report2.render_table());
}

TEST_CASE("ablation structural contracts") {
  ScratchDir dir("ablate");
  RunConfig base = mock_run_config(dir.path());
  auto dataset = load_locomo(fixtures_dir() / "mini_locomo.json");
  const auto& conversation = dataset.conversations[0];

  auto build_with = [&](RunConfig config) {
    record_conversation_fixtures(conversation, config);
    LlmGateway gateway(config.gateway_config());
    EmbeddingClient embeddings(config.make_embedding_backend());
    return construct_memory(conversation, config.extraction, config.consolidation, gateway,
                            embeddings);
  };

  auto full = build_with(base);
  CHECK(full.reasoned.size() > 0);

  RunConfig no_step2 = base;
  no_step2.consolidation.reasoning_enabled = false;
  auto store2 = build_with(no_step2);
  CHECK(store2.reasoned.empty());
  CHECK(fragments_digest(store2.extracted) == fragments_digest(full.extracted));

  RunConfig no_step1 = base;
  no_step1.extraction.skip_extraction = true;
  auto store1 = build_with(no_step1);
  size_t turns = 0;
  for (const auto& s : conversation.sessions) turns += s.messages.size();
  CHECK(store1.extracted.size() == turns);  // one fragment per raw turn

  RunConfig flat = base;
  flat.extraction.use_categories = false;
  auto store3 = build_with(flat);
  for (const auto& f : store3.extracted) CHECK(f.category == Category::factual);

  RunConfig no_temporal = base;
  no_temporal.extraction.use_temporal_reasoning = false;
  auto store4 = build_with(no_temporal);
  for (const auto& f : store4.extracted) {
    CHECK(f.temporal.kind == TemporalKind::on_date);
    bool matches_source = false;
    for (const auto& s : conversation.sessions)
      if (const Message* m = s.find_message(f.source_message_ids.at(0)))
        matches_source = f.temporal.start == m->date;
    CHECK(matches_source);
  }
}
