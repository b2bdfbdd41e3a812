#include "mislstm/types.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include <fmt/format.h>
#include <json.hpp>

namespace mislstm {

ParseError::ParseError(const std::string& what, std::size_t line)
    : Error(line > 0 ? fmt::format("line {}: {}", line, what) : what), line_(line) {}

const std::array<ContinuousChannelInfo, kContinuousChannels>& continuous_channels() {
  static const std::array<ContinuousChannelInfo, kContinuousChannels> channels{{
      {"mBle", "ble_rssi_max", MinuteReduce::Max, -120.0, 0.0},
      {"mGps", "gps_distance", MinuteReduce::Sum, 0.0, 2000.0},
      {"mUsageStats", "app_usage_time", MinuteReduce::Sum, 0.0, 3600.0},
      {"mWifiRssi", "wifi_rssi_max", MinuteReduce::Max, -120.0, 0.0},
      {"mWifiCount", "wifi_device_count", MinuteReduce::Max, 0.0, 200.0},
      {"wHr", "heart_rate_mean", MinuteReduce::Mean, 30.0, 220.0},
      {"wLight", "light_level", MinuteReduce::Mean, 0.0, 100000.0},
  }};
  return channels;
}

const std::array<std::string_view, kDiscreteFeatures>& discrete_feature_names() {
  static const std::array<std::string_view, kDiscreteFeatures> names{
      "activity_vehicle", "activity_bicycle", "activity_still",
      "activity_walking", "ambience_low",     "ambience_medium",
      "ambience_high",    "screen_on",        "charging"};
  return names;
}

const std::vector<std::string_view>& known_items() {
  static const std::vector<std::string_view> items = [] {
    std::vector<std::string_view> out;
    for (const auto& c : continuous_channels()) out.push_back(c.item);
    out.insert(out.end(), {kItemActivity, kItemAmbience, kItemScreen, kItemCharging});
    return out;
  }();
  return items;
}

bool is_known_item(std::string_view item) {
  const auto& items = known_items();
  return std::find(items.begin(), items.end(), item) != items.end();
}

std::optional<int> continuous_index(std::string_view item) {
  const auto& channels = continuous_channels();
  for (int k = 0; k < kContinuousChannels; ++k) {
    if (channels[k].item == item) return k;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

namespace {

int parse_fixed_int(std::string_view text, std::string_view whole) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ParseError(fmt::format("invalid date '{}'", whole));
  }
  return value;
}

}  // namespace

Date parse_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw ParseError(fmt::format("invalid date '{}' (expected YYYY-MM-DD)", text));
  }
  const Date date{std::chrono::year{parse_fixed_int(text.substr(0, 4), text)},
                  std::chrono::month{static_cast<unsigned>(parse_fixed_int(text.substr(5, 2), text))},
                  std::chrono::day{static_cast<unsigned>(parse_fixed_int(text.substr(8, 2), text))}};
  if (!date.ok()) throw ParseError(fmt::format("invalid calendar date '{}'", text));
  return date;
}

std::string format_date(const Date& date) {
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(date.year()),
                     static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
}

std::int64_t day_start_epoch(const Date& date) {
  const std::chrono::sys_days days{date};
  return static_cast<std::int64_t>(days.time_since_epoch().count()) * 86400;
}

Date date_of_epoch(std::int64_t epoch_seconds) {
  const auto day_index = static_cast<int>(
      epoch_seconds >= 0 ? epoch_seconds / 86400 : -((-epoch_seconds + 86399) / 86400));
  return Date{std::chrono::sys_days{std::chrono::days{day_index}}};
}

// ---------------------------------------------------------------------------

ValidationResult validate_day_record(const DayRecord& record) {
  ValidationResult result;
  if (!record.date.ok()) {
    result.violations.push_back("invalid date");
    return result;
  }
  const std::int64_t start = day_start_epoch(record.date);
  const std::int64_t end = start + 86400;
  for (std::size_t i = 0; i < record.readings.size(); ++i) {
    const auto& r = record.readings[i];
    if (r.subject_id != record.subject_id) {
      result.violations.push_back(
          fmt::format("reading {}: subject '{}' differs from record subject '{}'", i,
                      r.subject_id, record.subject_id));
    }
    if (!is_known_item(r.item)) {
      result.violations.push_back(fmt::format("reading {}: unknown channel '{}'", i, r.item));
    }
    if (r.timestamp < start || r.timestamp >= end) {
      result.violations.push_back(
          fmt::format("reading {}: timestamp outside day ({})", i, r.timestamp));
    }
    if (!std::isfinite(r.value)) {
      result.violations.push_back(fmt::format("reading {}: non-finite value", i));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

bool LabelVector::valid(const std::array<int, kHeads>& classes) {
  for (int h = 0; h < kHeads; ++h) {
    if (classes[h] < 0 || classes[h] >= kHeadClasses[h]) return false;
  }
  return true;
}

LabelVector::LabelVector(const std::array<int, kHeads>& classes) : classes_(classes) {
  for (int h = 0; h < kHeads; ++h) {
    if (classes[h] < 0 || classes[h] >= kHeadClasses[h]) {
      throw Error(fmt::format("{} class {} outside [0, {}]", kHeadNames[h], classes[h],
                              kHeadClasses[h] - 1));
    }
  }
}

HeadLogits::HeadLogits(const std::array<double, kTotalLogits>& flat) : values_(flat) {
  for (double v : values_) {
    if (!std::isfinite(v)) throw Error("non-finite logit");
  }
}

int argmax(std::span<const double> scores) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

LabelVector predict(const HeadLogits& logits) {
  std::array<int, kHeads> classes{};
  for (int h = 0; h < kHeads; ++h) classes[h] = argmax(logits.head(h));
  return LabelVector(classes);
}

std::string serialize(const HeadLogits& logits) {
  return nlohmann::json(logits.flat()).dump();
}

HeadLogits deserialize_head_logits(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(e.what());
  }
  if (!j.is_array() || j.size() != kTotalLogits) {
    throw ParseError(fmt::format("expected an array of {} logits", kTotalLogits));
  }
  std::array<double, kTotalLogits> flat{};
  for (int i = 0; i < kTotalLogits; ++i) flat[i] = j[i].get<double>();
  return HeadLogits(flat);
}

// ---------------------------------------------------------------------------

void DayFeatureGrid::check() const {
  if (continuous.rows() != kContinuousChannels || continuous.cols() != kMinutesPerDay) {
    throw ShapeError(fmt::format("continuous grid is {}x{}, expected {}x{}", continuous.rows(),
                                 continuous.cols(), kContinuousChannels, kMinutesPerDay));
  }
  if (discrete.rows() != kDiscreteFeatures || discrete.cols() != kWindowsPerDay) {
    throw ShapeError(fmt::format("discrete grid is {}x{}, expected {}x{}", discrete.rows(),
                                 discrete.cols(), kDiscreteFeatures, kWindowsPerDay));
  }
  if (observed.rows() != continuous.rows() || observed.cols() != continuous.cols()) {
    throw ShapeError("observation mask does not match the continuous grid");
  }
  if (!continuous.allFinite() || !discrete.allFinite()) {
    throw ShapeError("feature grid contains non-finite values");
  }
}

std::string_view to_string(Encoding encoding) {
  return encoding == Encoding::MultiChannel ? "multi_channel" : "stacked_vertical";
}

Encoding parse_encoding(std::string_view text) {
  if (text == "multi_channel") return Encoding::MultiChannel;
  if (text == "stacked_vertical") return Encoding::StackedVertical;
  throw ConfigError(fmt::format("unknown encoding '{}'", text));
}

void BlockConfig::validate() const {
  if (n_hours <= 0 || 24 % n_hours != 0) {
    throw ConfigError(fmt::format("n_hours = {} does not divide 24", n_hours));
  }
  if (raster_height < 2) throw ConfigError("raster_height must be at least 2");
  if (!(value_lo < value_hi)) throw ConfigError("value range requires lo < hi");
}

}  // namespace mislstm
