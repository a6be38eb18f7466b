#ifndef MOTORLANCE_TIME_FORMAT_HPP
#define MOTORLANCE_TIME_FORMAT_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "motorlance/error.hpp"

namespace motorlance {

// Days from civil date, proleptic Gregorian (H. Hinnant's algorithm).
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

/// Seconds since the Unix epoch to "YYYY-MM-DDTHH:MM:SS.mmmZ".
inline std::string format_iso8601(double epoch_seconds) {
  const auto total_ms = static_cast<std::int64_t>(std::floor(epoch_seconds * 1000.0 + 0.5));
  std::int64_t days = total_ms / 86'400'000;
  std::int64_t ms_of_day = total_ms % 86'400'000;
  if (ms_of_day < 0) {
    ms_of_day += 86'400'000;
    --days;
  }
  // civil_from_days
  const std::int64_t z = days + 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400 + (m <= 2);

  const auto hh = ms_of_day / 3'600'000;
  const auto mm = (ms_of_day / 60'000) % 60;
  const auto ss = (ms_of_day / 1000) % 60;
  const auto mss = ms_of_day % 1000;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lld.%03lldZ",
                static_cast<long long>(y), m, d, static_cast<long long>(hh),
                static_cast<long long>(mm), static_cast<long long>(ss),
                static_cast<long long>(mss));
  return buf;
}

/// Inverse of format_iso8601 (millisecond precision, UTC "Z" suffix only).
inline double parse_iso8601(std::string_view s) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0, ms = 0;
  const std::string str(s);
  if (std::sscanf(str.c_str(), "%d-%d-%dT%d:%d:%d.%dZ", &y, &mo, &d, &h, &mi, &sec, &ms) != 7) {
    fail(ErrorCode::Parse, "bad ISO-8601 timestamp: " + str);
  }
  const auto days = days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d));
  return static_cast<double>(days) * 86'400.0 + h * 3600.0 + mi * 60.0 + sec + ms / 1000.0;
}

inline double system_now() {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

}  // namespace motorlance

#endif
