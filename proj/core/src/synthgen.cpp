#include "mislstm/synthgen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "mislstm/random.hpp"

namespace mislstm {

namespace {

enum StreamTag : std::uint64_t {
  kTagProfile = 1,
  kTagLabels,
  kTagDay,
  kTagMissing,
};

double round2(double v) { return std::round(v * 100.0) / 100.0; }

bool in_window(int minute, int from_hour, int to_hour) {
  return minute >= from_hour * 60 && minute < to_hour * 60;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class Number>
Number parse_value(const std::string& key, const std::string& value) {
  Number out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ConfigError(fmt::format("invalid value '{}' for '{}'", value, key));
  }
  return out;
}

/// Exact class counts by largest remainder, so marginals match the priors.
std::vector<int> quota_counts(const std::vector<double>& prior, int total) {
  std::vector<int> counts(prior.size());
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (std::size_t c = 0; c < prior.size(); ++c) {
    const double exact = prior[c] * total;
    counts[c] = static_cast<int>(std::floor(exact));
    assigned += counts[c];
    remainders.emplace_back(exact - counts[c], static_cast<int>(c));
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int i = 0; assigned < total; ++i, ++assigned) ++counts[remainders[i].second];
  return counts;
}

/// Removes one contiguous window of readings per channel.
struct MissingWindow {
  int start = 0;
  int length = 0;
  bool covers(int minute) const { return minute >= start && minute < start + length; }
};

}  // namespace

void SynthConfig::validate() const {
  if (n_subjects < 2) throw ConfigError("n_subjects must be at least 2");
  if (days_per_subject < 2) throw ConfigError("days_per_subject must be at least 2");
  if (!(signal_strength >= 0.0 && signal_strength <= 1.0)) {
    throw ConfigError("signal_strength must lie in [0, 1]");
  }
  if (!(missing_fraction >= 0.0 && missing_fraction < 1.0)) {
    throw ConfigError("missing_fraction must lie in [0, 1)");
  }
  if (!start_date.ok()) throw ConfigError("invalid start_date");
  for (int h = 0; h < kHeads; ++h) {
    if (static_cast<int>(priors[h].size()) != kHeadClasses[h]) {
      throw ConfigError(fmt::format("prior_{} needs {} entries", kHeadNames[h], kHeadClasses[h]));
    }
    double sum = 0.0;
    for (double p : priors[h]) {
      if (!(p >= 0.0)) throw ConfigError(fmt::format("prior_{} has a negative entry", kHeadNames[h]));
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw ConfigError(fmt::format("prior_{} sums to {}, expected 1", kHeadNames[h], sum));
    }
  }
}

SynthConfig SynthConfig::parse(std::string_view text) {
  SynthConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("expected key=value: '{}'", stripped));
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key == "n_subjects") {
      config.n_subjects = parse_value<int>(key, value);
    } else if (key == "days_per_subject") {
      config.days_per_subject = parse_value<int>(key, value);
    } else if (key == "seed") {
      config.seed = parse_value<std::uint64_t>(key, value);
    } else if (key == "signal_strength") {
      config.signal_strength = parse_value<double>(key, value);
    } else if (key == "missing_fraction") {
      config.missing_fraction = parse_value<double>(key, value);
    } else if (key == "start_date") {
      config.start_date = parse_date(value);
    } else if (key.rfind("prior_", 0) == 0) {
      const std::string head = key.substr(6);
      const auto it = std::find(kHeadNames.begin(), kHeadNames.end(), head);
      if (it == kHeadNames.end()) throw ConfigError(fmt::format("unknown key '{}'", key));
      std::vector<double> prior;
      std::istringstream parts(value);
      std::string part;
      while (std::getline(parts, part, ',')) prior.push_back(parse_value<double>(key, trim(part)));
      config.priors[it - kHeadNames.begin()] = std::move(prior);
    } else {
      throw ConfigError(fmt::format("unknown key '{}'", key));
    }
  }
  config.validate();
  return config;
}

std::string SynthConfig::to_text() const {
  std::string out = fmt::format(
      "n_subjects={}\ndays_per_subject={}\nseed={}\nsignal_strength={}\nmissing_fraction={}\n"
      "start_date={}\n",
      n_subjects, days_per_subject, seed, signal_strength, missing_fraction,
      format_date(start_date));
  for (int h = 0; h < kHeads; ++h) {
    out += fmt::format("prior_{}={}\n", kHeadNames[h], fmt::join(priors[h], ","));
  }
  return out;
}

// ---------------------------------------------------------------------------

SyntheticGenerator::SyntheticGenerator(SynthConfig config) : config_(std::move(config)) {
  config_.validate();
  const int n = config_.n_subjects;
  const int days = config_.days_per_subject;

  profiles_.reserve(n);
  for (int s = 0; s < n; ++s) {
    Rng rng = substream({config_.seed, kTagProfile, static_cast<std::uint64_t>(s)});
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> uniform;
    Profile p{};
    p.hr_base = 68.0 + 5.0 * normal(rng);
    p.light_scale = 0.6 + 0.8 * uniform(rng);
    p.gps_scale = 0.7 + 0.6 * uniform(rng);
    p.usage_scale = 0.7 + 0.6 * uniform(rng);
    p.ble_base = -75.0 + 5.0 * normal(rng);
    p.wifi_base = -65.0 + 5.0 * normal(rng);
    p.wifi_count = 5.0 + 15.0 * uniform(rng);
    p.screen_rate = 0.2 + 0.2 * uniform(rng);
    p.walk_rate = 0.15 + 0.1 * uniform(rng);
    p.charge_start = 22.5 * 60 + 60.0 * uniform(rng);
    profiles_.push_back(p);
  }

  const int total = n * days;
  std::vector<std::array<int, kHeads>> classes(total);
  for (int h = 0; h < kHeads; ++h) {
    const auto counts = quota_counts(config_.priors[h], total);
    std::vector<int> assignment;
    assignment.reserve(total);
    for (int c = 0; c < static_cast<int>(counts.size()); ++c) {
      assignment.insert(assignment.end(), counts[c], c);
    }
    Rng rng = substream({config_.seed, kTagLabels, static_cast<std::uint64_t>(h)});
    std::shuffle(assignment.begin(), assignment.end(), rng);
    for (int i = 0; i < total; ++i) classes[i][h] = assignment[i];
  }
  day_labels_.reserve(total);
  for (int i = 0; i < total; ++i) day_labels_.emplace_back(classes[i]);

  const std::chrono::sys_days start{config_.start_date};
  for (int s = 0; s < n; ++s) {
    for (int d = 0; d < days; ++d) {
      labels_.emplace(DayKey{subject_id(s), Date{start + std::chrono::days{d}}},
                      day_labels_[s * days + d]);
    }
  }
}

std::string SyntheticGenerator::subject_id(int subject) const {
  const int width = std::max(2, static_cast<int>(std::to_string(config_.n_subjects).size()));
  return fmt::format("u{:0{}d}", subject + 1, width);
}

const LabelVector& SyntheticGenerator::label(int subject, int day) const {
  return day_labels_.at(subject * config_.days_per_subject + day);
}

DayRecord SyntheticGenerator::day(int subject, int day_index) const {
  const Profile& p = profiles_.at(subject);
  const LabelVector& y = label(subject, day_index);
  const double s = config_.signal_strength;
  const Date date{std::chrono::sys_days{config_.start_date} + std::chrono::days{day_index}};
  const std::int64_t t0 = day_start_epoch(date);
  const std::string sid = subject_id(subject);

  Rng rng = substream({config_.seed, kTagDay, static_cast<std::uint64_t>(subject),
                       static_cast<std::uint64_t>(day_index)});
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform;

  // Channel order for missing windows: 7 continuous items then 4 discrete.
  const auto& items = known_items();
  std::vector<MissingWindow> missing(items.size());
  {
    Rng miss = substream({config_.seed, kTagMissing, static_cast<std::uint64_t>(subject),
                          static_cast<std::uint64_t>(day_index)});
    const int length = static_cast<int>(std::lround(config_.missing_fraction * kMinutesPerDay));
    std::uniform_int_distribution<int> start_dist(0, kMinutesPerDay - std::max(length, 1));
    for (auto& window : missing) window = MissingWindow{start_dist(miss), length};
  }

  DayRecord record{sid, date, {}};
  record.readings.reserve(9000);
  auto emit = [&](std::size_t item, int minute, int second, double value) {
    if (missing[item].covers(minute)) return;
    record.readings.push_back(
        SensorReading{sid, t0 + 60LL * minute + second, std::string(items[item]), round2(value)});
  };
  auto item_index = [&](std::string_view name) {
    return static_cast<std::size_t>(std::find(items.begin(), items.end(), name) - items.begin());
  };
  const std::size_t kBle = 0, kGps = 1, kUsage = 2, kWifiRssi = 3, kWifiCount = 4, kHr = 5,
                    kLight = 6;
  const std::size_t kActivity = item_index(kItemActivity);
  const std::size_t kAmbience = item_index(kItemAmbience);
  const std::size_t kScreen = item_index(kItemScreen);
  const std::size_t kCharging = item_index(kItemCharging);

  const double day_hr_offset = 2.0 * normal(rng);
  const double day_light = 0.8 + 0.4 * uniform(rng);

  for (int m = 0; m < kMinutesPerDay; ++m) {
    const bool asleep = m < 7 * 60;
    const bool late = m >= 23 * 60;

    // Heart rate, every minute.
    double hr = p.hr_base + day_hr_offset + (asleep ? -8.0 : 4.0) + 4.0 * normal(rng);
    if (y[Head::Q3] == 0 && in_window(m, 18, 24)) hr += 15.0 * s;
    emit(kHr, m, 0, hr);

    // GPS distance, every minute.
    double gps = 0.0;
    if (!asleep && !late) {
      if (uniform(rng) < 0.15) gps = std::max(0.0, p.gps_scale * (60.0 + 30.0 * normal(rng)));
      if (y[Head::Q2] == 0 && in_window(m, 12, 18)) gps += 40.0 * s * (0.5 + uniform(rng));
    }
    emit(kGps, m, 5, gps);

    // Activity code, every minute.
    {
      double still = asleep ? 0.92 : 0.55;
      double walking = asleep ? 0.0 : p.walk_rate;
      if (asleep) {
        if (y[Head::S1] == 0) still -= 0.5 * s;
        if (y[Head::S1] == 1) still -= 0.25 * s;
      } else if (y[Head::Q2] == 0 && in_window(m, 12, 18)) {
        walking += 0.3 * s;
        still -= 0.3 * s;
      }
      const double vehicle = asleep ? 0.0 : 0.08;
      const double bicycle = asleep ? 0.0 : 0.02;
      const double u = uniform(rng);
      int code;
      if (u < still) {
        code = 3;
      } else if (u < still + walking) {
        code = 7;
      } else if (u < still + walking + vehicle) {
        code = 0;
      } else if (u < still + walking + vehicle + bicycle) {
        code = 1;
      } else {
        code = uniform(rng) < 0.5 ? 4 : 5;  // unknown / tilting are not counted
      }
      emit(kActivity, m, 10, code);
    }

    // Screen status, every minute.
    {
      double on = asleep ? 0.02 : p.screen_rate;
      if (y[Head::Q1] == 0 && (m >= 23 * 60 || m < 2 * 60)) on += 0.5 * s;
      emit(kScreen, m, 15, uniform(rng) < on ? 1.0 : 0.0);
    }

    // Charging, every minute.
    emit(kCharging, m, 20, (m >= p.charge_start || m < 7 * 60) ? 1.0 : 0.0);

    // Ambience level, every two minutes.
    if (m % 2 == 0) {
      double high = asleep ? 0.03 : 0.2;
      double medium = asleep ? 0.12 : 0.5;
      if (y[Head::S3] == 0 && in_window(m, 21, 24)) {
        high += 0.5 * s;
        medium = std::max(0.0, medium - 0.25 * s);
      }
      const double u = uniform(rng);
      emit(kAmbience, m, 25, u < high ? 2.0 : (u < high + medium ? 1.0 : 0.0));
    }

    // Ten-minute streams.
    if (m % 10 == 0) {
      double usage = 0.0;
      if (!asleep) {
        usage = p.usage_scale * 200.0 * uniform(rng);
      } else if (uniform(rng) < 0.1) {
        usage = 30.0 * uniform(rng);
      }
      if (y[Head::S2] == 0 && in_window(m, 1, 5)) usage += 250.0 * s * (0.6 + 0.8 * uniform(rng));
      emit(kUsage, m, 30, usage);

      emit(kBle, m, 35, p.ble_base + 6.0 * normal(rng));
      emit(kWifiRssi, m, 40, p.wifi_base + 5.0 * normal(rng));
      emit(kWifiCount, m, 45, std::max(0.0, std::round(p.wifi_count + 3.0 * normal(rng))));

      const double hour = m / 60.0;
      double light = 2.0 + std::abs(normal(rng));
      if (hour >= 6.0 && hour < 19.0) {
        const double phase = std::sin((hour - 6.0) / 13.0 * 3.14159265358979323846);
        light += p.light_scale * day_light * 400.0 * phase * std::exp(0.3 * normal(rng));
      }
      if (y[Head::Q1] == 0 && (m >= 23 * 60 || m < 3 * 60)) {
        light += 150.0 * s * (0.7 + 0.6 * uniform(rng));
      }
      emit(kLight, m, 50, light);
    }
  }
  return record;
}

SynthData generate(const SynthConfig& config) {
  SyntheticGenerator generator(config);
  SynthData data;
  data.labels = generator.labels();
  data.records.reserve(static_cast<std::size_t>(config.n_subjects) * config.days_per_subject);
  for (int s = 0; s < config.n_subjects; ++s) {
    for (int d = 0; d < config.days_per_subject; ++d) data.records.push_back(generator.day(s, d));
  }
  return data;
}

void write_synthetic(const SynthConfig& config, const std::filesystem::path& sensor_csv,
                     const std::filesystem::path& labels_csv) {
  SyntheticGenerator generator(config);
  std::ofstream sensors(sensor_csv, std::ios::binary);
  if (!sensors) throw Error(fmt::format("cannot write '{}'", sensor_csv.string()));
  sensors << kSensorHeader << '\n';
  for (int s = 0; s < config.n_subjects; ++s) {
    for (int d = 0; d < config.days_per_subject; ++d) write_sensor_rows(sensors, generator.day(s, d));
  }
  std::ofstream labels(labels_csv, std::ios::binary);
  if (!labels) throw Error(fmt::format("cannot write '{}'", labels_csv.string()));
  write_labels_csv(labels, generator.labels());
}

}  // namespace mislstm
