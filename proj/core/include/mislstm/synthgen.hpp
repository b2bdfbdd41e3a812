#pragma once

// Deterministic synthetic lifelog generator with planted, label-correlated
// structure.
//
// Generative rules (s = signal_strength, all windows in local minutes):
//   Q1 = 0  night light 23:00-03:00 raised by s*150 lx, screen-on probability
//           23:00-02:00 raised by s*0.5
//   Q2 = 0  afternoon (12:00-18:00) GPS distance raised by s*40 m/min and
//           walking probability raised by s*0.3
//   Q3 = 0  evening (18:00-24:00) heart rate raised by s*15 bpm
//   S1      night (00:00-07:00) still probability lowered by s*0.5 (class 0)
//           or s*0.25 (class 1)
//   S2 = 0  app usage 01:00-05:00 raised by s*250 s per 10-minute window
//   S3 = 0  high-ambience probability 21:00-24:00 raised by s*0.5
// Every channel independently loses one contiguous window covering
// `missing_fraction` of the day.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mislstm/ingest.hpp"

namespace mislstm {

struct SynthConfig {
  int n_subjects = 10;
  int days_per_subject = 60;
  std::uint64_t seed = 1;
  double signal_strength = 1.0;
  double missing_fraction = 0.05;
  Date start_date{std::chrono::year{2025}, std::chrono::January, std::chrono::day{1}};
  std::array<std::vector<double>, kHeads> priors{
      std::vector<double>{0.5, 0.5}, std::vector<double>{0.5, 0.5},
      std::vector<double>{0.5, 0.5}, std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3},
      std::vector<double>{0.5, 0.5}, std::vector<double>{0.5, 0.5}};

  /// Throws ConfigError.
  void validate() const;

  /// Flat `key=value` lines; unknown keys are errors. Priors use
  /// `prior_S1=0.3,0.3,0.4`.
  static SynthConfig parse(std::string_view text);
  std::string to_text() const;
};

struct SynthData {
  std::vector<DayRecord> records;
  LabelMap labels;
};

class SyntheticGenerator {
public:
  /// Throws ConfigError for invalid configurations.
  explicit SyntheticGenerator(SynthConfig config);

  const SynthConfig& config() const { return config_; }
  const LabelMap& labels() const { return labels_; }
  std::string subject_id(int subject) const;
  const LabelVector& label(int subject, int day) const;

  /// Sensor readings of one subject-day, sorted by timestamp. Independent of
  /// generation order.
  DayRecord day(int subject, int day) const;

private:
  struct Profile {
    double hr_base, light_scale, gps_scale, usage_scale, ble_base, wifi_base, wifi_count,
        screen_rate, walk_rate, charge_start;
  };

  SynthConfig config_;
  std::vector<Profile> profiles_;
  std::vector<LabelVector> day_labels_;  // subject-major
  LabelMap labels_;
};

SynthData generate(const SynthConfig& config);

/// Writes both CSVs, one day at a time.
void write_synthetic(const SynthConfig& config, const std::filesystem::path& sensor_csv,
                     const std::filesystem::path& labels_csv);

}  // namespace mislstm
