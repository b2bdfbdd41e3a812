#pragma once

// Shared data model: sensor vocabulary, day records, label vectors, feature
// grids and per-head logits.

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace mislstm {

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the 1-based line number when known.
class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line = 0);
  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class ShapeError : public Error {
public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Vocabulary

inline constexpr int kMinutesPerDay = 1440;
inline constexpr int kWindowsPerDay = 144;
inline constexpr int kMinutesPerWindow = 10;
inline constexpr int kContinuousChannels = 7;
inline constexpr int kDiscreteFeatures = 9;

/// Continuous feature rows, in the order they appear in every grid and image.
enum class Continuous : int {
  BleRssi = 0,
  GpsDistance,
  AppUsage,
  WifiRssi,
  WifiCount,
  HeartRate,
  Light,
};

/// Discrete feature rows of the 9 x 144 grid.
enum class Discrete : int {
  ActivityVehicle = 0,
  ActivityBicycle,
  ActivityStill,
  ActivityWalking,
  AmbienceLow,
  AmbienceMedium,
  AmbienceHigh,
  ScreenOn,
  Charging,
};

/// How readings falling into the same minute are combined.
enum class MinuteReduce { Mean, Max, Sum };

struct ContinuousChannelInfo {
  std::string_view item;     // raw stream identifier in the sensor CSV
  std::string_view feature;  // feature name used in reports
  MinuteReduce reduce;
  double clip_lo;
  double clip_hi;
};

/// Raw stream identifiers carrying discrete codes.
inline constexpr std::string_view kItemActivity = "mActivity";
inline constexpr std::string_view kItemAmbience = "mAmbience";
inline constexpr std::string_view kItemScreen = "mScreenStatus";
inline constexpr std::string_view kItemCharging = "mACStatus";

/// Activity codes that are counted, in discrete-row order (vehicle, bicycle,
/// still, walking).
inline constexpr std::array<int, 4> kCountedActivityCodes{0, 1, 3, 7};

const std::array<ContinuousChannelInfo, kContinuousChannels>& continuous_channels();
const std::array<std::string_view, kDiscreteFeatures>& discrete_feature_names();

/// All 11 raw item identifiers accepted in a sensor file (7 continuous and 4
/// discrete streams, which expand to the 16 model features).
const std::vector<std::string_view>& known_items();
bool is_known_item(std::string_view item);

/// Continuous row for a raw item, if the item is continuous.
std::optional<int> continuous_index(std::string_view item);

// ---------------------------------------------------------------------------
// Dates

using Date = std::chrono::year_month_day;

/// Parses `YYYY-MM-DD`. Throws ParseError.
Date parse_date(std::string_view text);
std::string format_date(const Date& date);
/// UTC epoch seconds of 00:00 on `date`.
std::int64_t day_start_epoch(const Date& date);
Date date_of_epoch(std::int64_t epoch_seconds);

// ---------------------------------------------------------------------------
// Records

struct SensorReading {
  std::string subject_id;
  std::int64_t timestamp = 0;  // UTC epoch seconds
  std::string item;
  double value = 0.0;

  bool operator==(const SensorReading&) const = default;
};

struct DayRecord {
  std::string subject_id;
  Date date{};
  std::vector<SensorReading> readings;

  bool operator==(const DayRecord&) const = default;
};

struct ValidationResult {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Reports every violated record invariant. Never throws.
ValidationResult validate_day_record(const DayRecord& record);

// ---------------------------------------------------------------------------
// Labels and heads

enum class Head : int { Q1 = 0, Q2, Q3, S1, S2, S3 };
inline constexpr int kHeads = 6;
inline constexpr std::array<int, kHeads> kHeadClasses{2, 2, 2, 3, 2, 2};
inline constexpr std::array<std::string_view, kHeads> kHeadNames{"Q1", "Q2", "Q3",
                                                                 "S1", "S2", "S3"};
inline constexpr int kTotalLogits = 13;

/// Offset of a head's scores in the flat logit layout.
constexpr int head_offset(int head) {
  int offset = 0;
  for (int h = 0; h < head; ++h) offset += kHeadClasses[h];
  return offset;
}

class LabelVector {
public:
  LabelVector() = default;
  /// Throws Error when any class index is out of range.
  explicit LabelVector(const std::array<int, kHeads>& classes);

  int operator[](int head) const { return classes_[head]; }
  int operator[](Head head) const { return classes_[static_cast<int>(head)]; }
  const std::array<int, kHeads>& classes() const { return classes_; }

  bool operator==(const LabelVector&) const = default;

  static bool valid(const std::array<int, kHeads>& classes);

private:
  std::array<int, kHeads> classes_{};
};

/// Raw per-head scores laid out flat as (2,2,2,3,2,2).
class HeadLogits {
public:
  HeadLogits() = default;
  /// Throws Error on non-finite values.
  explicit HeadLogits(const std::array<double, kTotalLogits>& flat);

  std::span<const double> head(int h) const {
    return {values_.data() + head_offset(h), static_cast<std::size_t>(kHeadClasses[h])};
  }
  std::span<double> head(int h) {
    return {values_.data() + head_offset(h), static_cast<std::size_t>(kHeadClasses[h])};
  }
  const std::array<double, kTotalLogits>& flat() const { return values_; }

  bool operator==(const HeadLogits&) const = default;

private:
  std::array<double, kTotalLogits> values_{};
};

/// Argmax with ties resolved toward the lower index.
int argmax(std::span<const double> scores);

/// Per-head argmax.
LabelVector predict(const HeadLogits& logits);

/// JSON array of the 13 scores; parsing it back yields identical doubles.
std::string serialize(const HeadLogits& logits);
/// Throws ParseError.
HeadLogits deserialize_head_logits(std::string_view text);

// ---------------------------------------------------------------------------
// Grids and configuration

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixU8 =
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Preprocessed day: 7 x 1440 continuous, 9 x 144 discrete, observation mask
/// aligned with `continuous`.
struct DayFeatureGrid {
  RowMatrixF continuous = RowMatrixF::Zero(kContinuousChannels, kMinutesPerDay);
  RowMatrixF discrete = RowMatrixF::Zero(kDiscreteFeatures, kWindowsPerDay);
  RowMatrixU8 observed = RowMatrixU8::Zero(kContinuousChannels, kMinutesPerDay);

  /// Throws ShapeError on wrong dimensions or non-finite entries.
  void check() const;
};

enum class Encoding { MultiChannel, StackedVertical };

std::string_view to_string(Encoding encoding);
Encoding parse_encoding(std::string_view text);

struct BlockConfig {
  int n_hours = 4;
  int raster_height = 64;
  double value_lo = -3.0;
  double value_hi = 3.0;
  Encoding encoding = Encoding::MultiChannel;
  /// Draw vertical strokes between consecutive minutes.
  bool line_fill = true;

  int blocks_per_day() const { return 24 / n_hours; }
  int block_minutes() const { return 60 * n_hours; }
  int block_windows() const { return 6 * n_hours; }

  /// Throws ConfigError.
  void validate() const;
};

struct ChannelStats {
  std::array<double, kContinuousChannels> mean{};
  std::array<double, kContinuousChannels> stddev{};
  std::array<double, kContinuousChannels> clip_lo{};
  std::array<double, kContinuousChannels> clip_hi{};
  /// Training maxima of the discrete counts (used for max-normalization).
  std::array<double, kDiscreteFeatures> discrete_max{};
  /// Training mean/std of discrete counts (used when z-scoring instead).
  std::array<double, kDiscreteFeatures> discrete_mean{};
  std::array<double, kDiscreteFeatures> discrete_stddev{};

  bool operator==(const ChannelStats&) const = default;
};

}  // namespace mislstm
