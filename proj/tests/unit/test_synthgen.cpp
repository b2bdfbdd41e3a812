#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "mislstm/synthgen.hpp"
#include "test_support.hpp"

using namespace mislstm;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("mislstm_synth_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Mean of the raw wHr readings between 18:00 and 24:00.
double evening_heart_rate(const DayRecord& record) {
  const auto start = day_start_epoch(record.date);
  double sum = 0.0;
  int n = 0;
  for (const auto& r : record.readings) {
    const auto minute = (r.timestamp - start) / 60;
    if (r.item == "wHr" && minute >= 18 * 60) {
      sum += r.value;
      ++n;
    }
  }
  return n ? sum / n : 0.0;
}

}  // namespace

TEST_SUITE("synthgen") {
  TEST_CASE("equal seeds give byte-identical files") {
    SynthConfig config;
    config.n_subjects = 2;
    config.days_per_subject = 3;
    config.seed = 7;
    const auto a = scratch("a");
    const auto b = scratch("b");
    write_synthetic(config, a / "sensor.csv", a / "labels.csv");
    write_synthetic(config, b / "sensor.csv", b / "labels.csv");
    CHECK(slurp(a / "sensor.csv") == slurp(b / "sensor.csv"));
    CHECK(slurp(a / "labels.csv") == slurp(b / "labels.csv"));

    config.seed = 8;
    const auto c = scratch("c");
    write_synthetic(config, c / "sensor.csv", c / "labels.csv");
    CHECK(slurp(a / "sensor.csv") != slurp(c / "sensor.csv"));

    // The streamed files equal the in-memory generation.
    config.seed = 7;
    const auto data = generate(config);
    std::ostringstream sensor;
    write_sensor_csv(sensor, data.records);
    CHECK(sensor.str() == slurp(a / "sensor.csv"));
  }

  TEST_CASE("output parses cleanly") {
    SynthConfig config;
    config.n_subjects = 3;
    config.days_per_subject = 4;
    const auto dir = scratch("parse");
    write_synthetic(config, dir / "sensor.csv", dir / "labels.csv");
    const auto records = parse_sensor_file(dir / "sensor.csv");
    const auto labels = parse_labels_file(dir / "labels.csv");
    CHECK(records.size() == 12);
    CHECK(labels.size() == 12);
    for (const auto& r : records) CHECK(validate_day_record(r).violations.empty());
    const auto dataset = build_dataset(records, labels);
    CHECK(dataset.days.size() == 12);
    CHECK(dataset.dropped_unlabeled == 0);
  }

  TEST_CASE("days are independent of generation order") {
    SynthConfig config;
    config.n_subjects = 3;
    config.days_per_subject = 5;
    const SyntheticGenerator forward(config);
    const SyntheticGenerator backward(config);
    const auto late = backward.day(2, 4);
    const auto early = backward.day(0, 0);
    CHECK(forward.day(0, 0) == early);
    CHECK(forward.day(2, 4) == late);
  }

  TEST_CASE("label marginals follow the priors") {
    SynthConfig config;
    config.n_subjects = 10;
    config.days_per_subject = 30;
    config.priors[1] = {0.3, 0.7};
    config.priors[3] = {0.2, 0.5, 0.3};
    const SyntheticGenerator gen(config);
    std::array<std::vector<double>, kHeads> freq;
    for (int h = 0; h < kHeads; ++h) freq[h].assign(kHeadClasses[h], 0.0);
    for (const auto& [key, label] : gen.labels()) {
      for (int h = 0; h < kHeads; ++h) freq[h][label[h]] += 1.0;
    }
    const double n = static_cast<double>(gen.labels().size());
    CHECK(n == 300);
    for (int h = 0; h < kHeads; ++h) {
      for (int c = 0; c < kHeadClasses[h]; ++c) {
        CHECK(std::abs(freq[h][c] / n - config.priors[h][c]) <= 0.05);
      }
    }
  }

  TEST_CASE("planted evening heart-rate effect is recoverable by a threshold") {
    SynthConfig config;  // 10 subjects x 60 days, seed 1, strength 1
    const auto data = generate(config);
    // Subject-centred evening mean; a raised evening rate marks Q3 = 0.
    std::map<std::string, std::pair<double, int>> subject_mean;
    std::vector<double> feature;
    for (const auto& r : data.records) {
      const double v = evening_heart_rate(r);
      feature.push_back(v);
      auto& [sum, n] = subject_mean[r.subject_id];
      sum += v;
      ++n;
    }
    int correct = 0;
    for (std::size_t i = 0; i < data.records.size(); ++i) {
      const auto& r = data.records[i];
      const auto [sum, n] = subject_mean[r.subject_id];
      const int predicted = feature[i] > sum / n ? 0 : 1;
      correct += predicted == data.labels.at(DayKey{r.subject_id, r.date})[Head::Q3];
    }
    const double accuracy = static_cast<double>(correct) / static_cast<double>(data.records.size());
    MESSAGE("threshold accuracy on Q3: " << accuracy);
    CHECK(accuracy > 0.8);
  }

  TEST_CASE("zero strength removes the label-conditional gap") {
    auto gap = [](double strength) {
      SynthConfig config;
      config.n_subjects = 10;
      config.days_per_subject = 40;
      config.signal_strength = strength;
      const auto data = generate(config);
      std::array<double, 2> sum{};
      std::array<int, 2> n{};
      for (const auto& r : data.records) {
        const int q3 = data.labels.at(DayKey{r.subject_id, r.date})[Head::Q3];
        sum[q3] += evening_heart_rate(r);
        ++n[q3];
      }
      return sum[0] / n[0] - sum[1] / n[1];
    };
    CHECK(gap(1.0) > 10.0);
    CHECK(std::abs(gap(0.0)) < 3.0);
  }

  TEST_CASE("config text") {
    const auto config = SynthConfig::parse("n_subjects = 4\n# comment\nseed=9\nprior_S1=0.2,0.3,0.5\n");
    CHECK(config.n_subjects == 4);
    CHECK(config.seed == 9);
    CHECK(config.priors[3] == std::vector<double>{0.2, 0.3, 0.5});
    const auto again = SynthConfig::parse(config.to_text());
    CHECK(again.to_text() == config.to_text());
    CHECK_THROWS_AS(SynthConfig::parse("colour=blue\n"), ConfigError);
    CHECK_THROWS_AS(SynthConfig::parse("signal_strength=2\n"), ConfigError);
    CHECK_THROWS_AS(SynthConfig::parse("prior_Q1=0.5,0.6\n"), ConfigError);
    CHECK_THROWS_AS(SynthConfig::parse("prior_S1=0.5,0.5\n"), ConfigError);
  }
}
