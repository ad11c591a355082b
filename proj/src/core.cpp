#include "epimem/core.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace epimem {

uint64_t fnv1a64(std::string_view text) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

Date Session::session_date() const {
  if (messages.empty()) throw DataError("session " + std::to_string(session_index) + " is empty");
  return messages.front().date;
}

const Message* Session::find_message(std::string_view message_id) const {
  for (const auto& m : messages) {
    if (m.message_id == message_id) return &m;
  }
  return nullptr;
}

std::string render_temporal(const TemporalRef& t) {
  switch (t.kind) {
    case TemporalKind::on_date:
      return t.start.to_iso();
    case TemporalKind::before:
      return "Before " + t.start.to_iso();
    case TemporalKind::after:
      return "After " + t.start.to_iso();
    case TemporalKind::range:
      return t.start.to_iso() + " to " + t.end.to_iso();
  }
  return t.start.to_iso();
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool iprefix(std::string_view text, std::string_view prefix, std::string_view* rest) {
  if (text.size() < prefix.size()) return false;
  for (size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(text[i])) !=
        std::tolower(static_cast<unsigned char>(prefix[i])))
      return false;
  }
  *rest = trim(text.substr(prefix.size()));
  return true;
}

// A side of a range may itself carry a Before/After prefix ("Before
// 2023-03-05 to 2023-03-22"); the bare date is the boundary.
std::optional<Date> parse_side(std::string_view side) {
  side = trim(side);
  std::string_view rest;
  if (iprefix(side, "before ", &rest) || iprefix(side, "after ", &rest)) side = rest;
  return Date::parse_iso(side);
}

}  // namespace

TemporalRef parse_temporal(std::string_view text, Date fallback, WarningLog* warnings) {
  const std::string_view trimmed = trim(text);
  if (auto d = Date::parse_iso(trimmed)) return TemporalRef::on(*d);
  std::string_view rest;
  if (iprefix(trimmed, "before ", &rest)) {
    if (auto d = Date::parse_iso(rest)) return TemporalRef::before(*d);
  }
  if (iprefix(trimmed, "after ", &rest)) {
    if (auto d = Date::parse_iso(rest)) return TemporalRef::after(*d);
  }
  if (auto pos = trimmed.find(" to "); pos != std::string_view::npos) {
    auto a = parse_side(trimmed.substr(0, pos));
    auto b = parse_side(trimmed.substr(pos + 4));
    if (a && b) {
      if (*b < *a) {
        warn(warnings, "temporal range reversed, swapping: \"" + std::string(trimmed) + "\"");
        std::swap(*a, *b);
      }
      return TemporalRef::range(*a, *b);
    }
  }
  warn(warnings, "unparseable temporal \"" + std::string(trimmed) + "\", using " +
                     fallback.to_iso());
  return TemporalRef::on(fallback);
}

int compare_temporal(const TemporalRef& a, const TemporalRef& b) {
  const int da = a.anchor().day_number(), db = b.anchor().day_number();
  if (da != db) return da < db ? -1 : 1;
  if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind) ? -1 : 1;
  const int ea = a.end.day_number(), eb = b.end.day_number();
  if (ea != eb) return ea < eb ? -1 : 1;
  return 0;
}

std::string_view category_name(Category c) {
  switch (c) {
    case Category::factual: return "factual";
    case Category::experiential: return "experiential";
    case Category::subjective: return "subjective";
    case Category::reasoning: return "reasoning";
  }
  return "factual";
}

std::optional<Category> category_from_name(std::string_view name) {
  if (name == "factual") return Category::factual;
  if (name == "experiential") return Category::experiential;
  if (name == "subjective") return Category::subjective;
  if (name == "reasoning") return Category::reasoning;
  return std::nullopt;
}

std::string_view inference_type_name(InferenceType t) {
  switch (t) {
    case InferenceType::extension_generalization: return "extension/generalization";
    case InferenceType::accumulation: return "accumulation";
    case InferenceType::specification_refinement: return "specification/refinement";
    case InferenceType::transformation: return "transformation";
    case InferenceType::connection_implication: return "connection/implication";
  }
  return "accumulation";
}

std::optional<InferenceType> inference_type_from_name(std::string_view name) {
  std::string lower(trim(name));
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  static const std::array<InferenceType, 5> all = {
      InferenceType::extension_generalization, InferenceType::accumulation,
      InferenceType::specification_refinement, InferenceType::transformation,
      InferenceType::connection_implication};
  for (auto t : all) {
    if (lower == inference_type_name(t)) return t;
  }
  return std::nullopt;
}

std::string render_fragment_line(const MemoryFragment& f) {
  return "[" + f.key + ", " + render_temporal(f.temporal) + "]: " + f.content;
}

bool fragment_chrono_less(const MemoryFragment& a, const MemoryFragment& b) {
  const int c = compare_temporal(a.temporal, b.temporal);
  if (c != 0) return c < 0;
  return a.fragment_id < b.fragment_id;
}

}  // namespace epimem
