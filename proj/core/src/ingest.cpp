#include "mislstm/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>

namespace mislstm {

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::string_view trim_line(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  return line;
}

template <class Number>
Number parse_number(std::string_view text, std::string_view what, std::size_t line) {
  Number value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw ParseError(fmt::format("invalid {} '{}'", what, text), line);
  }
  return value;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("cannot open '{}'", path.string()));
  return in;
}

void expect_header(std::istream& in, std::string_view expected) {
  std::string header;
  if (!std::getline(in, header)) throw ParseError("missing header row", 1);
  std::string_view h = trim_line(header);
  if (h.size() >= 3 && static_cast<unsigned char>(h[0]) == 0xEF) h.remove_prefix(3);  // BOM
  if (h != expected) {
    throw ParseError(fmt::format("header '{}' does not match '{}'", h, expected), 1);
  }
}

}  // namespace

std::vector<DayRecord> group_readings(std::vector<SensorReading> readings) {
  std::stable_sort(readings.begin(), readings.end(), [](const auto& a, const auto& b) {
    if (a.subject_id != b.subject_id) return a.subject_id < b.subject_id;
    return a.timestamp < b.timestamp;
  });
  std::vector<DayRecord> records;
  for (auto& r : readings) {
    const Date date = date_of_epoch(r.timestamp);
    if (records.empty() || records.back().subject_id != r.subject_id ||
        records.back().date != date) {
      records.push_back(DayRecord{r.subject_id, date, {}});
    }
    records.back().readings.push_back(std::move(r));
  }
  return records;
}

std::vector<DayRecord> parse_sensor_csv(std::istream& in) {
  expect_header(in, kSensorHeader);
  std::vector<SensorReading> readings;
  std::string raw;
  std::size_t line = 1;
  while (std::getline(in, raw)) {
    ++line;
    const std::string_view text = trim_line(raw);
    if (text.empty()) continue;
    const auto fields = split_csv(text);
    if (fields.size() != 4) {
      throw ParseError(fmt::format("expected 4 fields, found {}", fields.size()), line);
    }
    if (fields[0].empty()) throw ParseError("empty subject_id", line);
    if (!is_known_item(fields[2])) {
      throw ParseError(fmt::format("unknown item '{}'", fields[2]), line);
    }
    SensorReading reading;
    reading.subject_id = std::string(fields[0]);
    reading.timestamp = parse_number<std::int64_t>(fields[1], "timestamp", line);
    reading.item = std::string(fields[2]);
    reading.value = parse_number<double>(fields[3], "value", line);
    readings.push_back(std::move(reading));
  }
  return group_readings(std::move(readings));
}

std::vector<DayRecord> parse_sensor_file(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return parse_sensor_csv(in);
}

LabelMap parse_labels_csv(std::istream& in) {
  expect_header(in, kLabelsHeader);
  LabelMap labels;
  std::string raw;
  std::size_t line = 1;
  while (std::getline(in, raw)) {
    ++line;
    const std::string_view text = trim_line(raw);
    if (text.empty()) continue;
    const auto fields = split_csv(text);
    if (fields.size() != 2 + kHeads) {
      throw ParseError(fmt::format("expected {} fields, found {}", 2 + kHeads, fields.size()),
                       line);
    }
    DayKey key{std::string(fields[0]), {}};
    try {
      key.date = parse_date(fields[1]);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line);
    }
    std::array<int, kHeads> classes{};
    for (int h = 0; h < kHeads; ++h) {
      classes[h] = parse_number<int>(fields[2 + h], kHeadNames[h], line);
      if (classes[h] < 0 || classes[h] >= kHeadClasses[h]) {
        throw ParseError(fmt::format("{} = {} out of range [0, {}]", kHeadNames[h],
                                     classes[h], kHeadClasses[h] - 1),
                         line);
      }
    }
    if (labels.contains(key)) {
      throw ParseError(fmt::format("duplicate label for ({}, {})", key.subject_id,
                                   format_date(key.date)),
                       line);
    }
    labels.emplace(std::move(key), LabelVector(classes));
  }
  return labels;
}

LabelMap parse_labels_file(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return parse_labels_csv(in);
}

void write_sensor_rows(std::ostream& out, const DayRecord& record) {
  fmt::memory_buffer buffer;
  for (const auto& r : record.readings) {
    fmt::format_to(std::back_inserter(buffer), "{},{},{},{}\n", r.subject_id, r.timestamp,
                   r.item, r.value);
  }
  out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
}

void write_sensor_csv(std::ostream& out, const std::vector<DayRecord>& records) {
  out << kSensorHeader << '\n';
  for (const auto& record : records) write_sensor_rows(out, record);
}

void write_labels_csv(std::ostream& out, const LabelMap& labels) {
  out << kLabelsHeader << '\n';
  for (const auto& [key, label] : labels) {
    out << fmt::format("{},{},{},{},{},{},{},{}\n", key.subject_id, format_date(key.date),
                       label[0], label[1], label[2], label[3], label[4], label[5]);
  }
}

Dataset build_dataset(std::vector<DayRecord> records, const LabelMap& labels) {
  std::sort(records.begin(), records.end(), [](const DayRecord& a, const DayRecord& b) {
    return DayKey{a.subject_id, a.date} < DayKey{b.subject_id, b.date};
  });
  Dataset dataset;
  for (auto& record : records) {
    const auto it = labels.find(DayKey{record.subject_id, record.date});
    if (it == labels.end()) {
      ++dataset.dropped_unlabeled;
      continue;
    }
    dataset.subject_index.emplace(record.subject_id, 0);
    dataset.days.push_back(LabeledDay{std::move(record), it->second, 0});
  }
  int next = 0;
  for (auto& [subject, index] : dataset.subject_index) index = next++;
  for (auto& day : dataset.days) day.subject = dataset.subject_index.at(day.record.subject_id);
  return dataset;
}

}  // namespace mislstm
