#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace epimem {

// Calendar date (proleptic Gregorian). Canonical text form is ISO-8601
// "YYYY-MM-DD"; no time-of-day or timezone handling.
struct Date {
  int year = 1970;
  int month = 1;
  int day = 1;

  static std::optional<Date> parse_iso(std::string_view text);
  static Date from_day_number(int days_since_epoch);

  bool valid() const;
  std::string to_iso() const;
  std::string weekday_name() const;  // "Monday" .. "Sunday"
  int day_number() const;            // days since 1970-01-01

  Date add_days(int n) const;
  // Same day N months away, day-of-month clamped to the target month's end.
  Date add_months_clamped(int n) const;

  auto operator<=>(const Date&) const = default;
};

// Parses a relative-date expression ("yesterday", "three days ago",
// "last week", "last month", "tomorrow", "in 4 days") against the date of
// the message it appeared in. Unsupported expressions yield nullopt so the
// caller can fall back to a before/after variant.
std::optional<Date> resolve_relative_date(std::string_view expression, Date message_date);

}  // namespace epimem
