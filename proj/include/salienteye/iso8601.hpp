#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "salienteye/error.hpp"

namespace salienteye {

// Timestamps are ISO-8601 with an explicit UTC offset ("Z" or +-HH:MM),
// second precision. Stored internally as seconds since the Unix epoch.
using UnixSeconds = std::int64_t;

namespace detail {

inline bool parse_fixed_uint(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  int v = 0;
  if (pos + len > s.size()) return false;
  for (std::size_t i = pos; i < pos + len; ++i) {
    const char c = s[i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

// Days from 1970-01-01 for a proleptic Gregorian civil date.
inline std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

inline bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

inline int days_in_month(int y, int m) {
  static const int d[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m == 2 && is_leap(y)) return 29;
  return d[m - 1];
}

}  // namespace detail

// Accepts "YYYY-MM-DDTHH:MM:SS" followed by "Z", "+HH:MM", "-HH:MM",
// "+HHMM" or "-HHMM". Anything else (including offset-free local times)
// is a ValidationError.
inline UnixSeconds parse_iso8601(std::string_view s) {
  using namespace detail;
  auto fail = [&]() -> UnixSeconds {
    throw ValidationError("unparseable timestamp: '" + std::string(s) +
                          "' (expected ISO-8601 with explicit UTC offset, e.g. 2018-03-04T16:20:00Z)");
  };
  int year, month, day, hour, minute, second;
  if (s.size() < 20) return fail();
  if (!parse_fixed_uint(s, 0, 4, year) || s[4] != '-' || !parse_fixed_uint(s, 5, 2, month) ||
      s[7] != '-' || !parse_fixed_uint(s, 8, 2, day) || (s[10] != 'T' && s[10] != 't') ||
      !parse_fixed_uint(s, 11, 2, hour) || s[13] != ':' || !parse_fixed_uint(s, 14, 2, minute) ||
      s[16] != ':' || !parse_fixed_uint(s, 17, 2, second))
    return fail();
  if (month < 1 || month > 12 || day < 1 || day > days_in_month(year, month)) return fail();
  if (hour > 23 || minute > 59 || second > 60) return fail();
  if (second == 60) second = 59;  // leap second, clamp

  std::size_t pos = 19;
  std::int64_t offset = 0;
  if (s[pos] == 'Z' || s[pos] == 'z') {
    ++pos;
  } else if (s[pos] == '+' || s[pos] == '-') {
    const int sign = s[pos] == '+' ? 1 : -1;
    int oh = 0, om = 0;
    ++pos;
    if (!parse_fixed_uint(s, pos, 2, oh)) return fail();
    pos += 2;
    if (pos < s.size() && s[pos] == ':') ++pos;
    if (!parse_fixed_uint(s, pos, 2, om)) return fail();
    pos += 2;
    if (oh > 23 || om > 59) return fail();
    offset = sign * (oh * 3600 + om * 60);
  } else {
    return fail();
  }
  if (pos != s.size()) return fail();

  const std::int64_t days = days_from_civil(year, month, day);
  return days * 86400 + hour * 3600 + minute * 60 + second - offset;
}

// Canonical "YYYY-MM-DDTHH:MM:SSZ".
inline std::string format_iso8601(UnixSeconds t) {
  std::int64_t days = t / 86400;
  std::int64_t rem = t % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  int y, m, d;
  detail::civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", y, m, d,
                static_cast<int>(rem / 3600), static_cast<int>(rem % 3600 / 60),
                static_cast<int>(rem % 60));
  return buf;
}

}  // namespace salienteye
