#include <doctest.h>

#include <json.hpp>

#include "epimem/extraction.hpp"
#include "support/test_support.hpp"

using namespace epimem;
using namespace epimem::testing;

namespace {

// The Step-1 example output for the example session.
nlohmann::json example_extraction_reply() {
  return nlohmann::json::parse(R"({
    "Factual_Information": [
      {"key": "current residence", "value": "Lives in Rome with girlfriend Hana",
       "message_id": "msg-301", "date": "2024-05-17"},
      {"key": "brother's residence", "value": "Has brother Junho living in Seattle",
       "message_id": "msg-304", "date": "2024-05-17"}
    ],
    "Experiential_Information": [
      {"key": "job resignation", "value": "Quit job at Coupang in March",
       "message_id": "msg-302", "date": "Before 2024-05-17"},
      {"key": "meal with friends", "value": "Ate chicken with friends",
       "message_id": "msg-305", "date": "2024-05-16"}
    ],
    "Subjective_Information": [
      {"key": "career aspiration", "value": "Considers switching into UX design",
       "message_id": "msg-303", "date": "After 2024-05-17"}
    ]
  })");
}

}  // namespace

TEST_CASE("parse_extraction maps entries onto fragments") {
  WarningLog log;
  auto fragments =
      parse_extraction(example_extraction_reply(), example_session(), ExtractionConfig{}, &log);
  REQUIRE(fragments.size() == 5);

  const auto& residence = fragments[0];
  CHECK(residence.fragment_id == "s1-m1");
  CHECK(residence.key == "current residence");
  CHECK(residence.content == "Lives in Rome with girlfriend Hana");
  CHECK(residence.category == Category::factual);
  CHECK(residence.temporal == TemporalRef::on(Date{2024, 5, 17}));
  CHECK(residence.source_message_ids == std::vector<std::string>{"msg-301"});

  const auto& resignation = fragments[2];
  CHECK(resignation.category == Category::experiential);
  CHECK(resignation.temporal == TemporalRef::before(Date{2024, 5, 17}));

  CHECK(fragments[4].category == Category::subjective);
  CHECK(fragments[4].temporal == TemporalRef::after(Date{2024, 5, 17}));
  CHECK(log.size() == 0);
}

TEST_CASE("unknown message ids drop the entry with a warning") {
  auto reply = example_extraction_reply();
  reply["Factual_Information"].push_back({{"key", "ghost"},
                                          {"value", "References a missing message"},
                                          {"message_id", "msg-999"},
                                          {"date", "2024-05-17"}});
  WarningLog log;
  auto fragments = parse_extraction(reply, example_session(), ExtractionConfig{}, &log);
  CHECK(fragments.size() == 5);
  for (const auto& f : fragments) CHECK(f.key != "ghost");
  CHECK(log.size() >= 1);
}

TEST_CASE("all-empty extraction yields a warning and no fragments") {
  const auto reply = nlohmann::json{{"Factual_Information", nlohmann::json::array()},
                                    {"Experiential_Information", nlohmann::json::array()},
                                    {"Subjective_Information", nlohmann::json::array()}};
  WarningLog log;
  auto fragments = parse_extraction(reply, example_session(), ExtractionConfig{}, &log);
  CHECK(fragments.empty());
  CHECK(log.size() == 1);
}

TEST_CASE("bad date strings degrade to the message date") {
  auto reply = nlohmann::json{{"Factual_Information",
                               nlohmann::json::array({{{"key", "pet"},
                                                       {"value", "Owns a cat"},
                                                       {"message_id", "msg-301"},
                                                       {"date", "sometime last spring"}}})},
                              {"Experiential_Information", nlohmann::json::array()},
                              {"Subjective_Information", nlohmann::json::array()}};
  WarningLog log;
  auto fragments = parse_extraction(reply, example_session(), ExtractionConfig{}, &log);
  REQUIRE(fragments.size() == 1);
  CHECK(fragments[0].temporal == TemporalRef::on(Date{2024, 5, 17}));
  CHECK(fragments[0].warnings.size() == 1);
}

TEST_CASE("flat-category parsing puts everything in one category") {
  ExtractionConfig config;
  config.use_categories = false;
  const auto reply = nlohmann::json{
      {"Personal_Information",
       nlohmann::json::array({{{"key", "residence"},
                               {"value", "Lives in Rome"},
                               {"message_id", "msg-301"},
                               {"date", "2024-05-17"}},
                              {{"key", "job"},
                               {"value", "Quit job at Coupang"},
                               {"message_id", "msg-302"},
                               {"date", "Before 2024-05-17"}}})}};
  auto fragments = parse_extraction(reply, example_session(), config);
  REQUIRE(fragments.size() == 2);
  for (const auto& f : fragments) CHECK(f.category == Category::factual);
}

TEST_CASE("no-temporal parsing pins every fragment to its message date") {
  ExtractionConfig config;
  config.use_temporal_reasoning = false;
  auto fragments = parse_extraction(example_extraction_reply(), example_session(), config);
  for (const auto& f : fragments) CHECK(f.temporal == TemporalRef::on(Date{2024, 5, 17}));
}

TEST_CASE("skip_extraction emits one fragment per raw message") {
  Session session;
  session.session_index = 3;
  for (int i = 0; i < 21; ++i)
    session.messages.push_back(make_message("t" + std::to_string(i), 3, "2024-02-01",
                                            "message number " + std::to_string(i) +
                                                " with some more words here"));
  ExtractionConfig config;
  config.skip_extraction = true;
  ScratchDir dir("ex");
  GatewayConfig gateway_config;
  gateway_config.backend = std::make_shared<MockLlmBackend>(dir.path());
  LlmGateway gateway(gateway_config);
  auto fragments = extract_session(session, gateway, config);
  REQUIRE(fragments.size() == 21);
  CHECK(fragments[0].fragment_id == "s3-m1");
  CHECK(fragments[0].key == "message number 0 with some");
  CHECK(fragments[0].content == session.messages[0].text);
  CHECK(fragments[0].category == Category::factual);
  CHECK(fragments[0].temporal == TemporalRef::on(Date{2024, 2, 1}));
  CHECK(gateway.call_log().empty());  // the gateway was bypassed
}

TEST_CASE("extract_session over the mock gateway is deterministic") {
  ScratchDir dir("ex");
  const Session session = example_session();
  ExtractionConfig config;

  CompletionRequest request;
  request.model_name = "default-extract";
  request.user_prompt = build_extraction_prompt(session, config);
  MockLlmBackend::write_fixture(dir.path(), request, example_extraction_reply().dump(2),
                                "example session");

  GatewayConfig gateway_config;
  gateway_config.backend = std::make_shared<MockLlmBackend>(dir.path());
  LlmGateway gateway(gateway_config);

  auto first = extract_session(session, gateway, config);
  auto second = extract_session(session, gateway, config);
  CHECK(fragments_digest(first) == fragments_digest(second));
  REQUIRE(first.size() == 5);

  int factual = 0, experiential = 0, subjective = 0;
  for (const auto& f : first) {
    factual += f.category == Category::factual;
    experiential += f.category == Category::experiential;
    subjective += f.category == Category::subjective;
    // Every source id must resolve inside the session.
    for (const auto& id : f.source_message_ids) CHECK(session.find_message(id) != nullptr);
  }
  CHECK(factual >= 1);
  CHECK(experiential >= 1);
  CHECK(subjective >= 1);
}
