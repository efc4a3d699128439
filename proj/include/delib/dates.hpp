#pragma once

#include <chrono>
#include <cstdio>
#include <string>

#include "delib/errors.hpp"

namespace delib {

// ISO-8601 calendar date <-> days since 1970-01-01. Only day differences
// matter downstream, so a plain int is enough once parsed.

inline int parse_date(const std::string& iso) {
  int y = 0, m = 0, d = 0;
  char tail = '\0';
  if (std::sscanf(iso.c_str(), "%4d-%2d-%2d%c", &y, &m, &d, &tail) != 3 ||
      iso.size() != 10) {
    throw ValidationError("malformed date '" + iso + "' (expected YYYY-MM-DD)");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y},
                                        std::chrono::month{unsigned(m)},
                                        std::chrono::day{unsigned(d)}};
  if (!ymd.ok()) throw ValidationError("invalid calendar date '" + iso + "'");
  return std::chrono::sys_days{ymd}.time_since_epoch().count();
}

inline std::string format_date(int day_number) {
  const std::chrono::year_month_day ymd{
      std::chrono::sys_days{std::chrono::days{day_number}}};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()));
  return buf;
}

// "YYYY-MM" label for calendar-month bins.
inline std::string month_label(int day_number) {
  const std::chrono::year_month_day ymd{
      std::chrono::sys_days{std::chrono::days{day_number}}};
  char buf[12];
  std::snprintf(buf, sizeof(buf), "%04d-%02d", int(ymd.year()),
                unsigned(ymd.month()));
  return buf;
}

// (year, month) pair for binning.
inline std::pair<int, int> year_month(int day_number) {
  const std::chrono::year_month_day ymd{
      std::chrono::sys_days{std::chrono::days{day_number}}};
  return {int(ymd.year()), int(unsigned(ymd.month()))};
}

}  // namespace delib
