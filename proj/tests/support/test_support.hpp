#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mislstm/types.hpp"

namespace mislstm::test {

struct TimedValue {
  int minute;
  std::string item;
  double value;
};

inline Date ymd(int y, unsigned m, unsigned d) {
  return Date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
}

/// Day record whose readings sit at the start of the given minutes.
inline DayRecord make_day(const std::string& subject, const Date& date, const std::vector<TimedValue>& values) {
  DayRecord record{subject, date, {}};
  const auto start = day_start_epoch(date);
  for (const auto& v : values) {
    record.readings.push_back({subject, start + 60LL * v.minute, v.item, v.value});
  }
  return record;
}

}  // namespace mislstm::test
