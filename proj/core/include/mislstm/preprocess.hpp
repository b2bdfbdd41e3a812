#pragma once

// Raw day records -> fixed-size feature grids: per-minute reduction, outlier
// clipping, linear interpolation onto 1440 minutes, ten-minute discrete
// counts, and standardization with training-split statistics.

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mislstm/types.hpp"

namespace mislstm {

enum class DiscreteNormalization { MaxScale, ZScore };

struct PreprocessConfig {
  std::array<double, kContinuousChannels> clip_lo{};
  std::array<double, kContinuousChannels> clip_hi{};
  DiscreteNormalization discrete = DiscreteNormalization::MaxScale;

  /// Physical ranges from the channel table.
  static PreprocessConfig defaults();
};

struct ResampledChannel {
  std::vector<float> values;          // 1440 entries
  std::vector<std::uint8_t> observed;  // 1 where a reading fell in the minute
};

/// One continuous channel on the one-minute grid. Readings within a minute
/// are reduced per the channel's rule; gaps are linearly interpolated; the
/// nearest observation is held before the first and after the last one; an
/// empty channel is all zeros with an all-false mask. When `clip` is given,
/// raw values are clipped to its bounds first.
ResampledChannel resample_continuous(const DayRecord& record, int channel,
                                     const PreprocessConfig* clip = nullptr);

/// 9 x 144 raw counts per ten-minute window.
RowMatrixF aggregate_discrete(const DayRecord& record);

/// Clipped and interpolated but not yet standardized.
struct RawDayGrid {
  RowMatrixF continuous = RowMatrixF::Zero(kContinuousChannels, kMinutesPerDay);
  RowMatrixU8 observed = RowMatrixU8::Zero(kContinuousChannels, kMinutesPerDay);
  RowMatrixF discrete_counts = RowMatrixF::Zero(kDiscreteFeatures, kWindowsPerDay);
};

RawDayGrid resample_day(const DayRecord& record, const PreprocessConfig& config);

/// Throws Error when `training` is empty.
ChannelStats fit_stats(std::span<const RawDayGrid> training, const PreprocessConfig& config);

DayFeatureGrid standardize(const RawDayGrid& raw, const ChannelStats& stats,
                           const PreprocessConfig& config);

DayFeatureGrid transform(const DayRecord& record, const ChannelStats& stats,
                         const PreprocessConfig& config);

// Grid cache. Little-endian layout:
//   "MISG" | u32 version | u32 matrix count (3)
//   per matrix: u32 rows | u32 cols | rows*cols f32 row-major
// Matrices: continuous, discrete, observed mask (0/1).
void write_grid(const std::filesystem::path& path, const DayFeatureGrid& grid);
DayFeatureGrid read_grid(const std::filesystem::path& path);

std::string stats_to_json(const ChannelStats& stats);
ChannelStats stats_from_json(const std::string& text);

}  // namespace mislstm
