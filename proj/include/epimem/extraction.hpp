#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "epimem/core.hpp"
#include "epimem/gateway.hpp"

namespace epimem {

struct ExtractionConfig {
  bool use_categories = true;         // off: flat "Personal_Information" list
  bool use_temporal_reasoning = true; // off: every date is the message date
  bool skip_extraction = false;       // off-switch for Step 1: one fragment per raw turn
};

std::vector<std::string> extraction_required_keys(const ExtractionConfig& config);

// Renders the Step-1 prompt for a session. Messages appear as
// "[id] (YYYY-MM-DD Weekday) text", with "speaker: text" when a speaker name
// is set.
std::string build_extraction_prompt(const Session& session, const ExtractionConfig& config);

// Validates and normalizes a structured extraction reply into fragments.
// Entries with unresolvable message ids are dropped with a warning; bad date
// strings degrade to the source message's date.
std::vector<MemoryFragment> parse_extraction(const nlohmann::json& tree, const Session& session,
                                             const ExtractionConfig& config,
                                             WarningLog* warnings = nullptr);

// Step 1 end to end. With skip_extraction the gateway is bypassed and each
// raw message becomes one factual fragment.
std::vector<MemoryFragment> extract_session(const Session& session, LlmGateway& gateway,
                                            const ExtractionConfig& config,
                                            WarningLog* warnings = nullptr);

}  // namespace epimem
