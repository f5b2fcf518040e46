#include "ltv/dates.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

#include "ltv/error.hpp"

namespace ltv {

namespace chr = std::chrono;

Date Date::from_ymd(int year, unsigned month, unsigned day) {
  const chr::year_month_day ymd{chr::year{year}, chr::month{month}, chr::day{day}};
  if (!ymd.ok()) {
    throw DataError("invalid date " + std::to_string(year) + "-" + std::to_string(month) + "-" +
                    std::to_string(day));
  }
  return Date(static_cast<std::int32_t>(chr::sys_days{ymd}.time_since_epoch().count()));
}

Date Date::parse(std::string_view text) {
  auto field = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    const auto res = std::from_chars(text.data() + pos, text.data() + pos + len, v);
    if (res.ec != std::errc{} || res.ptr != text.data() + pos + len) {
      throw DataError("malformed date '" + std::string(text) + "'");
    }
    return v;
  };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw DataError("malformed date '" + std::string(text) + "', expected YYYY-MM-DD");
  }
  return from_ymd(field(0, 4), static_cast<unsigned>(field(5, 2)),
                  static_cast<unsigned>(field(8, 2)));
}

std::string Date::to_string() const {
  const chr::year_month_day ymd{chr::sys_days{chr::days{days_}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

int Date::year() const {
  return static_cast<int>(chr::year_month_day{chr::sys_days{chr::days{days_}}}.year());
}

int Date::day_of_week() const {
  const chr::weekday wd{chr::sys_days{chr::days{days_}}};
  return static_cast<int>(wd.iso_encoding()) - 1;
}

IsoWeek iso_week(Date d) {
  // The ISO week-year is the year of this week's Thursday.
  const Date thursday = d + (3 - d.day_of_week());
  const int wy = thursday.year();
  const Date jan1 = Date::from_ymd(wy, 1, 1);
  return IsoWeek{wy, (thursday - jan1) / 7 + 1};
}

}  // namespace ltv
