#pragma once

// Long-format CSV readers and writers for sensor readings and day labels.
//
//   sensor CSV: subject_id,timestamp,item,value
//   labels CSV: subject_id,date,Q1,Q2,Q3,S1,S2,S3

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "mislstm/types.hpp"

namespace mislstm {

struct DayKey {
  std::string subject_id;
  Date date{};

  auto operator<=>(const DayKey&) const = default;
};

using LabelMap = std::map<DayKey, LabelVector>;

struct LabeledDay {
  DayRecord record;
  LabelVector label;
  int subject = 0;  // index into Dataset::subject_index
};

struct Dataset {
  std::vector<LabeledDay> days;  // ordered by (subject_id, date)
  std::map<std::string, int> subject_index;
  std::size_t dropped_unlabeled = 0;

  int n_subjects() const { return static_cast<int>(subject_index.size()); }
};

inline constexpr const char* kSensorHeader = "subject_id,timestamp,item,value";
inline constexpr const char* kLabelsHeader = "subject_id,date,Q1,Q2,Q3,S1,S2,S3";

/// One DayRecord per (subject, date), ordered by key, readings sorted by time.
/// Throws ParseError for malformed rows or unknown items.
std::vector<DayRecord> parse_sensor_csv(std::istream& in);
std::vector<DayRecord> parse_sensor_file(const std::filesystem::path& path);

/// Throws ParseError on malformed rows, out-of-range classes and duplicate keys.
LabelMap parse_labels_csv(std::istream& in);
LabelMap parse_labels_file(const std::filesystem::path& path);

void write_sensor_csv(std::ostream& out, const std::vector<DayRecord>& records);
void write_sensor_rows(std::ostream& out, const DayRecord& record);
void write_labels_csv(std::ostream& out, const LabelMap& labels);

/// Groups loose readings into day records keyed by the UTC date of each
/// timestamp.
std::vector<DayRecord> group_readings(std::vector<SensorReading> readings);

/// Joins records with labels. Unlabeled days are dropped and counted;
/// subjects are indexed 0..S-1 in lexicographic order.
Dataset build_dataset(std::vector<DayRecord> records, const LabelMap& labels);

}  // namespace mislstm
