#include "epimem/date.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <map>
#include <sstream>
#include <vector>

namespace epimem {

namespace {

namespace chr = std::chrono;

chr::year_month_day to_ymd(const Date& d) {
  return chr::year{d.year} / chr::month{static_cast<unsigned>(d.month)} /
         chr::day{static_cast<unsigned>(d.day)};
}

Date from_ymd(const chr::year_month_day& ymd) {
  return Date{int(ymd.year()), int(unsigned(ymd.month())), int(unsigned(ymd.day()))};
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isdigit(c) != 0;
  });
}

}  // namespace

std::optional<Date> Date::parse_iso(std::string_view text) {
  // Strict "YYYY-MM-DD".
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  auto y = text.substr(0, 4), m = text.substr(5, 2), d = text.substr(8, 2);
  if (!all_digits(y) || !all_digits(m) || !all_digits(d)) return std::nullopt;
  Date date;
  std::from_chars(y.data(), y.data() + y.size(), date.year);
  std::from_chars(m.data(), m.data() + m.size(), date.month);
  std::from_chars(d.data(), d.data() + d.size(), date.day);
  if (!date.valid()) return std::nullopt;
  return date;
}

bool Date::valid() const { return to_ymd(*this).ok(); }

std::string Date::to_iso() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
  return buf;
}

int Date::day_number() const {
  return chr::sys_days{to_ymd(*this)}.time_since_epoch().count();
}

Date Date::from_day_number(int days_since_epoch) {
  return from_ymd(chr::year_month_day{chr::sys_days{chr::days{days_since_epoch}}});
}

Date Date::add_days(int n) const { return from_day_number(day_number() + n); }

Date Date::add_months_clamped(int n) const {
  int total = (year * 12 + (month - 1)) + n;
  int y = total / 12, m = total % 12;
  if (m < 0) {
    m += 12;
    y -= 1;
  }
  auto target_month = chr::year{y} / chr::month{static_cast<unsigned>(m + 1)};
  unsigned last = unsigned((target_month / chr::last).day());
  unsigned d = std::min(static_cast<unsigned>(day), last);
  return Date{y, m + 1, static_cast<int>(d)};
}

std::string Date::weekday_name() const {
  static const char* names[] = {"Sunday", "Monday",   "Tuesday", "Wednesday",
                                "Thursday", "Friday", "Saturday"};
  chr::weekday wd{chr::sys_days{to_ymd(*this)}};
  return names[wd.c_encoding()];
}

namespace {

std::string normalize_expr(std::string_view expression) {
  std::string out;
  out.reserve(expression.size());
  bool last_space = true;
  for (unsigned char c : expression) {
    if (std::isspace(c)) {
      if (!last_space) out.push_back(' ');
      last_space = true;
    } else {
      out.push_back(static_cast<char>(std::tolower(c)));
      last_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::optional<int> parse_count_word(const std::string& word) {
  static const std::map<std::string, int> ones = {
      {"zero", 0},  {"one", 1},   {"two", 2},   {"three", 3},   {"four", 4},
      {"five", 5},  {"six", 6},   {"seven", 7}, {"eight", 8},   {"nine", 9},
      {"ten", 10},  {"eleven", 11}, {"twelve", 12}, {"thirteen", 13},
      {"fourteen", 14}, {"fifteen", 15}, {"sixteen", 16}, {"seventeen", 17},
      {"eighteen", 18}, {"nineteen", 19}};
  static const std::map<std::string, int> tens = {
      {"twenty", 20}, {"thirty", 30}, {"forty", 40},  {"fifty", 50},
      {"sixty", 60},  {"seventy", 70}, {"eighty", 80}, {"ninety", 90}};
  if (all_digits(word)) {
    int value = 0;
    std::from_chars(word.data(), word.data() + word.size(), value);
    return value;
  }
  if (word == "a" || word == "an") return 1;
  if (auto it = ones.find(word); it != ones.end()) return it->second;
  if (auto it = tens.find(word); it != tens.end()) return it->second;
  // "twenty-one" style compounds
  if (auto dash = word.find('-'); dash != std::string::npos) {
    auto hi = tens.find(word.substr(0, dash));
    auto lo = ones.find(word.substr(dash + 1));
    if (hi != tens.end() && lo != ones.end()) return hi->second + lo->second;
  }
  return std::nullopt;
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

}  // namespace

std::optional<Date> resolve_relative_date(std::string_view expression, Date message_date) {
  const std::string expr = normalize_expr(expression);
  if (expr.empty()) return std::nullopt;
  if (expr == "yesterday") return message_date.add_days(-1);
  if (expr == "tomorrow") return message_date.add_days(1);
  if (expr == "last week") return message_date.add_days(-7);
  if (expr == "last month") return message_date.add_months_clamped(-1);

  const auto words = split_words(expr);
  // "N days ago" / "N day ago"
  if (words.size() == 3 && (words[1] == "days" || words[1] == "day") && words[2] == "ago") {
    if (auto n = parse_count_word(words[0])) return message_date.add_days(-*n);
  }
  // "in N days"
  if (words.size() == 3 && words[0] == "in" && (words[2] == "days" || words[2] == "day")) {
    if (auto n = parse_count_word(words[1])) return message_date.add_days(*n);
  }
  return std::nullopt;
}

}  // namespace epimem
