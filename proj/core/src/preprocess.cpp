#include "mislstm/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "binary_io.hpp"

namespace mislstm {

PreprocessConfig PreprocessConfig::defaults() {
  PreprocessConfig config;
  const auto& channels = continuous_channels();
  for (int k = 0; k < kContinuousChannels; ++k) {
    config.clip_lo[k] = channels[k].clip_lo;
    config.clip_hi[k] = channels[k].clip_hi;
  }
  return config;
}

ResampledChannel resample_continuous(const DayRecord& record, int channel,
                                     const PreprocessConfig* clip) {
  const auto& info = continuous_channels().at(channel);
  const std::int64_t start = day_start_epoch(record.date);

  std::vector<double> acc(kMinutesPerDay, 0.0);
  std::vector<int> count(kMinutesPerDay, 0);
  for (const auto& r : record.readings) {
    if (r.item != info.item) continue;
    const std::int64_t offset = r.timestamp - start;
    if (offset < 0 || offset >= 86400 || !std::isfinite(r.value)) continue;
    const int minute = static_cast<int>(offset / 60);
    double v = r.value;
    if (clip != nullptr) v = std::clamp(v, clip->clip_lo[channel], clip->clip_hi[channel]);
    if (count[minute] == 0) {
      acc[minute] = v;
    } else if (info.reduce == MinuteReduce::Max) {
      acc[minute] = std::max(acc[minute], v);
    } else {
      acc[minute] += v;
    }
    ++count[minute];
  }

  ResampledChannel out;
  out.values.assign(kMinutesPerDay, 0.0f);
  out.observed.assign(kMinutesPerDay, 0);
  std::vector<int> observed_minutes;
  for (int m = 0; m < kMinutesPerDay; ++m) {
    if (count[m] == 0) continue;
    if (info.reduce == MinuteReduce::Mean) acc[m] /= count[m];
    out.observed[m] = 1;
    observed_minutes.push_back(m);
  }
  if (observed_minutes.empty()) return out;

  const int first = observed_minutes.front();
  const int last = observed_minutes.back();
  for (int m = 0; m <= first; ++m) out.values[m] = static_cast<float>(acc[first]);
  for (int m = last; m < kMinutesPerDay; ++m) out.values[m] = static_cast<float>(acc[last]);
  for (std::size_t i = 0; i + 1 < observed_minutes.size(); ++i) {
    const int a = observed_minutes[i];
    const int b = observed_minutes[i + 1];
    out.values[a] = static_cast<float>(acc[a]);
    for (int m = a + 1; m < b; ++m) {
      const double t = static_cast<double>(m - a) / (b - a);
      out.values[m] = static_cast<float>(acc[a] + t * (acc[b] - acc[a]));
    }
  }
  return out;
}

RowMatrixF aggregate_discrete(const DayRecord& record) {
  RowMatrixF counts = RowMatrixF::Zero(kDiscreteFeatures, kWindowsPerDay);
  const std::int64_t start = day_start_epoch(record.date);
  for (const auto& r : record.readings) {
    const std::int64_t offset = r.timestamp - start;
    if (offset < 0 || offset >= 86400 || !std::isfinite(r.value)) continue;
    const int window = static_cast<int>(offset / 60) / kMinutesPerWindow;
    const int code = static_cast<int>(std::lround(r.value));
    int row = -1;
    if (r.item == kItemActivity) {
      const auto it = std::find(kCountedActivityCodes.begin(), kCountedActivityCodes.end(), code);
      if (it != kCountedActivityCodes.end()) {
        row = static_cast<int>(Discrete::ActivityVehicle) +
              static_cast<int>(it - kCountedActivityCodes.begin());
      }
    } else if (r.item == kItemAmbience) {
      if (code >= 0 && code <= 2) row = static_cast<int>(Discrete::AmbienceLow) + code;
    } else if (r.item == kItemScreen) {
      if (code == 1) row = static_cast<int>(Discrete::ScreenOn);
    } else if (r.item == kItemCharging) {
      if (code == 1) row = static_cast<int>(Discrete::Charging);
    }
    if (row >= 0) counts(row, window) += 1.0f;
  }
  return counts;
}

RawDayGrid resample_day(const DayRecord& record, const PreprocessConfig& config) {
  RawDayGrid raw;
  for (int k = 0; k < kContinuousChannels; ++k) {
    const auto channel = resample_continuous(record, k, &config);
    for (int m = 0; m < kMinutesPerDay; ++m) {
      raw.continuous(k, m) = channel.values[m];
      raw.observed(k, m) = channel.observed[m];
    }
  }
  raw.discrete_counts = aggregate_discrete(record);
  return raw;
}

ChannelStats fit_stats(std::span<const RawDayGrid> training, const PreprocessConfig& config) {
  if (training.empty()) throw Error("fit_stats needs at least one training day");
  ChannelStats stats;
  stats.clip_lo = config.clip_lo;
  stats.clip_hi = config.clip_hi;

  // Population statistics in double, accumulated in day order.
  for (int k = 0; k < kContinuousChannels; ++k) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& day : training) {
      for (int m = 0; m < kMinutesPerDay; ++m) {
        if (day.observed(k, m)) {
          sum += day.continuous(k, m);
          ++n;
        }
      }
    }
    const double mean = n > 0 ? sum / static_cast<double>(n) : 0.0;
    double ss = 0.0;
    for (const auto& day : training) {
      for (int m = 0; m < kMinutesPerDay; ++m) {
        if (day.observed(k, m)) {
          const double d = day.continuous(k, m) - mean;
          ss += d * d;
        }
      }
    }
    const double sd = n > 0 ? std::sqrt(ss / static_cast<double>(n)) : 0.0;
    stats.mean[k] = mean;
    stats.stddev[k] = sd < 1e-6 ? 1.0 : sd;
  }

  for (int f = 0; f < kDiscreteFeatures; ++f) {
    double max = 0.0, sum = 0.0;
    const double n = static_cast<double>(training.size()) * kWindowsPerDay;
    for (const auto& day : training) {
      max = std::max(max, static_cast<double>(day.discrete_counts.row(f).maxCoeff()));
      sum += day.discrete_counts.row(f).cast<double>().sum();
    }
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& day : training) {
      ss += (day.discrete_counts.row(f).cast<double>().array() - mean).square().sum();
    }
    const double sd = std::sqrt(ss / n);
    stats.discrete_max[f] = max > 0.0 ? max : 1.0;
    stats.discrete_mean[f] = mean;
    stats.discrete_stddev[f] = sd < 1e-6 ? 1.0 : sd;
  }
  return stats;
}

DayFeatureGrid standardize(const RawDayGrid& raw, const ChannelStats& stats,
                           const PreprocessConfig& config) {
  DayFeatureGrid grid;
  grid.observed = raw.observed;
  for (int k = 0; k < kContinuousChannels; ++k) {
    if (raw.observed.row(k).maxCoeff() == 0) {
      grid.continuous.row(k).setZero();
      continue;
    }
    for (int m = 0; m < kMinutesPerDay; ++m) {
      grid.continuous(k, m) =
          static_cast<float>((raw.continuous(k, m) - stats.mean[k]) / stats.stddev[k]);
    }
  }
  for (int f = 0; f < kDiscreteFeatures; ++f) {
    for (int w = 0; w < kWindowsPerDay; ++w) {
      const double c = raw.discrete_counts(f, w);
      double v;
      if (config.discrete == DiscreteNormalization::MaxScale) {
        v = std::clamp(c / stats.discrete_max[f], 0.0, 1.0);
      } else {
        v = (c - stats.discrete_mean[f]) / stats.discrete_stddev[f];
      }
      grid.discrete(f, w) = static_cast<float>(v);
    }
  }
  grid.check();
  return grid;
}

DayFeatureGrid transform(const DayRecord& record, const ChannelStats& stats,
                         const PreprocessConfig& config) {
  return standardize(resample_day(record, config), stats, config);
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kGridMagic[4] = {'M', 'I', 'S', 'G'};
constexpr std::uint32_t kGridVersion = 1;

template <class Matrix>
void write_matrix(std::ostream& out, const Matrix& m) {
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) detail::write_le<float>(out, static_cast<float>(m(r, c)));
  }
}

RowMatrixF read_matrix(std::istream& in) {
  const auto rows = detail::read_le<std::uint32_t>(in);
  const auto cols = detail::read_le<std::uint32_t>(in);
  if (rows > 4096 || cols > 1u << 20) throw ParseError("implausible matrix dimensions in grid file");
  RowMatrixF m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = detail::read_le<float>(in);
  }
  return m;
}

}  // namespace

void write_grid(const std::filesystem::path& path, const DayFeatureGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out.write(kGridMagic, 4);
  detail::write_le<std::uint32_t>(out, kGridVersion);
  detail::write_le<std::uint32_t>(out, 3);
  write_matrix(out, grid.continuous);
  write_matrix(out, grid.discrete);
  write_matrix(out, grid.observed);
}

DayFeatureGrid read_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(fmt::format("cannot open '{}'", path.string()));
  char magic[4];
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, kGridMagic)) {
    throw ParseError(fmt::format("'{}' is not a grid file", path.string()));
  }
  if (detail::read_le<std::uint32_t>(in) != kGridVersion) throw ParseError("unsupported grid version");
  if (detail::read_le<std::uint32_t>(in) != 3) throw ParseError("unexpected matrix count");
  DayFeatureGrid grid;
  grid.continuous = read_matrix(in);
  grid.discrete = read_matrix(in);
  grid.observed = read_matrix(in).cast<std::uint8_t>();
  grid.check();
  return grid;
}

std::string stats_to_json(const ChannelStats& stats) {
  nlohmann::json j;
  const auto& channels = continuous_channels();
  for (int k = 0; k < kContinuousChannels; ++k) {
    j["continuous"].push_back({{"item", channels[k].item},
                               {"mean", stats.mean[k]},
                               {"std", stats.stddev[k]},
                               {"clip", {stats.clip_lo[k], stats.clip_hi[k]}}});
  }
  const auto& names = discrete_feature_names();
  for (int f = 0; f < kDiscreteFeatures; ++f) {
    j["discrete"].push_back({{"feature", names[f]},
                             {"max", stats.discrete_max[f]},
                             {"mean", stats.discrete_mean[f]},
                             {"std", stats.discrete_stddev[f]}});
  }
  return j.dump(2);
}

ChannelStats stats_from_json(const std::string& text) {
  ChannelStats stats;
  try {
    const auto j = nlohmann::json::parse(text);
    const auto& cont = j.at("continuous");
    const auto& disc = j.at("discrete");
    if (cont.size() != kContinuousChannels || disc.size() != kDiscreteFeatures) {
      throw ParseError("channel stats have the wrong number of channels");
    }
    for (int k = 0; k < kContinuousChannels; ++k) {
      stats.mean[k] = cont[k].at("mean").get<double>();
      stats.stddev[k] = cont[k].at("std").get<double>();
      stats.clip_lo[k] = cont[k].at("clip").at(0).get<double>();
      stats.clip_hi[k] = cont[k].at("clip").at(1).get<double>();
    }
    for (int f = 0; f < kDiscreteFeatures; ++f) {
      stats.discrete_max[f] = disc[f].at("max").get<double>();
      stats.discrete_mean[f] = disc[f].at("mean").get<double>();
      stats.discrete_stddev[f] = disc[f].at("std").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("invalid channel stats: {}", e.what()));
  }
  return stats;
}

}  // namespace mislstm
