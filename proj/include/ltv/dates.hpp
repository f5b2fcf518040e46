#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace ltv {

// Civil date stored as days since 1970-01-01.
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::int32_t days_since_epoch) : days_(days_since_epoch) {}

  // Throws DataError for dates that do not exist in the Gregorian calendar.
  static Date from_ymd(int year, unsigned month, unsigned day);
  // "YYYY-MM-DD"
  static Date parse(std::string_view text);

  std::int32_t days_since_epoch() const noexcept { return days_; }
  std::string to_string() const;
  int year() const;
  // 0 = Monday ... 6 = Sunday
  int day_of_week() const;

  friend constexpr Date operator+(Date d, std::int32_t n) { return Date(d.days_ + n); }
  friend constexpr Date operator-(Date d, std::int32_t n) { return Date(d.days_ - n); }
  friend constexpr std::int32_t operator-(Date a, Date b) { return a.days_ - b.days_; }
  friend constexpr auto operator<=>(Date, Date) = default;

 private:
  std::int32_t days_ = 0;
};

struct IsoWeek {
  int year = 0;
  int week = 0;  // 1..53
};

IsoWeek iso_week(Date d);

}  // namespace ltv
