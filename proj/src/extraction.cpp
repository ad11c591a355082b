#include "epimem/extraction.hpp"

#include <sstream>

#include "epimem/prompts.hpp"

namespace epimem {

namespace {

constexpr const char* kFactualKey = "Factual_Information";
constexpr const char* kExperientialKey = "Experiential_Information";
constexpr const char* kSubjectiveKey = "Subjective_Information";
constexpr const char* kFlatKey = "Personal_Information";

std::string first_n_tokens(const std::string& text, int n) {
  std::istringstream in(text);
  std::string word, out;
  for (int i = 0; i < n && (in >> word); ++i) {
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  return out;
}

std::string render_message_line(const Message& m) {
  const std::string weekday = m.weekday ? *m.weekday : m.date.weekday_name();
  std::string line = "[" + m.message_id + "] (" + m.date.to_iso() + " " + weekday + ") ";
  if (!m.speaker.empty()) line += m.speaker + ": ";
  line += m.text;
  return line;
}

}  // namespace

std::vector<std::string> extraction_required_keys(const ExtractionConfig& config) {
  if (!config.use_categories) return {kFlatKey};
  return {kFactualKey, kExperientialKey, kSubjectiveKey};
}

std::string build_extraction_prompt(const Session& session, const ExtractionConfig& config) {
  if (session.messages.empty())
    throw DataError("cannot build extraction prompt for empty session " +
                    std::to_string(session.session_index));
  std::string conversation;
  for (size_t i = 0; i < session.messages.size(); ++i) {
    if (i > 0) conversation += "\n\n";
    conversation += render_message_line(session.messages[i]);
  }
  return render_template(step1_template(config.use_categories, config.use_temporal_reasoning),
                         {{"conversation", conversation}});
}

std::vector<MemoryFragment> parse_extraction(const nlohmann::json& tree, const Session& session,
                                             const ExtractionConfig& config, WarningLog* warnings) {
  struct ListSpec {
    const char* json_key;
    Category category;
  };
  std::vector<ListSpec> lists;
  if (config.use_categories) {
    lists = {{kFactualKey, Category::factual},
             {kExperientialKey, Category::experiential},
             {kSubjectiveKey, Category::subjective}};
  } else {
    lists = {{kFlatKey, Category::factual}};
  }

  std::vector<MemoryFragment> fragments;
  int ordinal = 1;
  for (const auto& spec : lists) {
    if (!tree.contains(spec.json_key)) {
      throw StructuredOutputFailure(std::string("extraction reply missing key ") + spec.json_key,
                                    tree.dump());
    }
    const auto& list = tree.at(spec.json_key);
    if (!list.is_array()) {
      warn(warnings, std::string("extraction key ") + spec.json_key + " is not a list; skipped");
      continue;
    }
    for (const auto& entry : list) {
      if (!entry.is_object() || !entry.contains("key") || !entry.contains("value")) {
        warn(warnings, "malformed extraction entry dropped: " + entry.dump());
        continue;
      }
      MemoryFragment f;
      f.key = entry.at("key").get<std::string>();
      f.content = entry.at("value").get<std::string>();
      if (f.key.empty() || f.content.empty()) {
        warn(warnings, "extraction entry with empty key/value dropped");
        continue;
      }
      f.category = spec.category;
      f.session_index = session.session_index;

      // message_id may be a single id or a list of ids.
      std::vector<std::string> raw_ids;
      if (entry.contains("message_id")) {
        const auto& mid = entry.at("message_id");
        if (mid.is_string())
          raw_ids.push_back(mid.get<std::string>());
        else if (mid.is_array())
          for (const auto& one : mid)
            if (one.is_string()) raw_ids.push_back(one.get<std::string>());
      }
      const Message* source = nullptr;
      for (const auto& id : raw_ids) {
        if (const Message* m = session.find_message(id)) {
          f.source_message_ids.push_back(id);
          if (!source) source = m;
        } else {
          warn(warnings, "extraction entry references unknown message_id \"" + id + "\"");
        }
      }
      if (f.source_message_ids.empty()) {
        warn(warnings, "extraction entry \"" + f.key + "\" dropped: no resolvable message_id");
        continue;
      }

      const Date message_date = source->date;
      if (!config.use_temporal_reasoning) {
        f.temporal = TemporalRef::on(message_date);
      } else {
        const std::string date_text =
            entry.contains("date") && entry.at("date").is_string()
                ? entry.at("date").get<std::string>()
                : message_date.to_iso();
        WarningLog local;
        f.temporal = parse_temporal(date_text, message_date, &local);
        for (auto& w : local.snapshot()) {
          f.warnings.push_back(w);
          warn(warnings, w);
        }
      }
      f.fragment_id = "s" + std::to_string(session.session_index) + "-m" + std::to_string(ordinal);
      ++ordinal;
      fragments.push_back(std::move(f));
    }
  }
  if (fragments.empty())
    warn(warnings, "extraction produced no fragments for session " +
                       std::to_string(session.session_index));
  return fragments;
}

std::vector<MemoryFragment> extract_session(const Session& session, LlmGateway& gateway,
                                            const ExtractionConfig& config, WarningLog* warnings) {
  if (config.skip_extraction) {
    // Step-1 off-switch: each raw turn becomes one factual fragment so the
    // later steps still have something to work with.
    std::vector<MemoryFragment> fragments;
    int ordinal = 1;
    for (const auto& m : session.messages) {
      MemoryFragment f;
      f.fragment_id =
          "s" + std::to_string(session.session_index) + "-m" + std::to_string(ordinal++);
      f.key = first_n_tokens(m.text, 5);
      if (f.key.empty()) f.key = m.message_id;
      f.content = m.text;
      f.category = Category::factual;
      f.temporal = TemporalRef::on(m.date);
      f.source_message_ids = {m.message_id};
      f.session_index = session.session_index;
      fragments.push_back(std::move(f));
    }
    return fragments;
  }

  auto request = gateway.request_for_role(LlmRole::extract, std::nullopt,
                                          build_extraction_prompt(session, config));
  auto tree = gateway.complete_structured(request, extraction_required_keys(config));
  return parse_extraction(tree, session, config, warnings);
}

}  // namespace epimem
