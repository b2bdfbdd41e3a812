#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "mislstm/preprocess.hpp"
#include "mislstm/synthgen.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace mislstm;
using test::make_day;
using test::ymd;

namespace {

constexpr int kHr = static_cast<int>(Continuous::HeartRate);
const Date kDate = ymd(2025, 1, 1);

std::vector<RawDayGrid> synthetic_raw(int subjects, int days, std::uint64_t seed) {
  SynthConfig config;
  config.n_subjects = subjects;
  config.days_per_subject = days;
  config.seed = seed;
  const auto data = generate(config);
  std::vector<RawDayGrid> raw;
  for (const auto& r : data.records) raw.push_back(resample_day(r, PreprocessConfig::defaults()));
  return raw;
}

}  // namespace

TEST_SUITE("preprocess") {
  TEST_CASE("interpolation examples") {
    const auto mid = resample_continuous(make_day("u", kDate, {{0, "wHr", 10.0}, {2, "wHr", 20.0}}), kHr);
    CHECK(mid.values[1] == 15.0f);
    CHECK(mid.observed[0] == 1);
    CHECK(mid.observed[1] == 0);
    CHECK(mid.values[1439] == 20.0f);

    const auto single = resample_continuous(make_day("u", kDate, {{100, "wHr", 5.0}}), kHr);
    for (float v : single.values) CHECK(v == 5.0f);

    const auto none = resample_continuous(make_day("u", kDate, {}), kHr);
    for (std::size_t m = 0; m < none.values.size(); ++m) {
      CHECK(none.values[m] == 0.0f);
      CHECK(none.observed[m] == 0);
    }
  }

  TEST_CASE("minute reductions") {
    auto day = make_day("u", kDate, {{5, "wHr", 60.0}, {5, "wHr", 80.0}, {5, "mGps", 3.0}, {5, "mGps", 4.0},
                                     {5, "mBle", -80.0}, {5, "mBle", -60.0}});
    day.readings[1].timestamp += 30;
    CHECK(resample_continuous(day, kHr).values[5] == 70.0f);
    CHECK(resample_continuous(day, static_cast<int>(Continuous::GpsDistance)).values[5] == 7.0f);
    CHECK(resample_continuous(day, static_cast<int>(Continuous::BleRssi)).values[5] == -60.0f);
  }

  TEST_CASE("clipping happens before interpolation") {
    const auto config = PreprocessConfig::defaults();
    CHECK(config.clip_lo[kHr] == 30.0);
    CHECK(config.clip_hi[kHr] == 220.0);
    const auto day = make_day("u", kDate, {{0, "wHr", 500.0}, {2, "wHr", 100.0}});
    const auto clipped = resample_continuous(day, kHr, &config);
    CHECK(clipped.values[0] == 220.0f);
    CHECK(clipped.values[1] == 160.0f);
    CHECK(resample_continuous(day, kHr).values[0] == 500.0f);
  }

  TEST_CASE("interpolation matches the two-pointer oracle") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
      std::map<int, double> obs;
      const int n = static_cast<int>(rng() % 40);
      std::vector<test::TimedValue> values;
      for (int i = 0; i < n; ++i) {
        const int minute = static_cast<int>(rng() % kMinutesPerDay);
        const double value = std::uniform_real_distribution<double>(30.0, 200.0)(rng);
        if (obs.count(minute)) continue;
        obs[minute] = value;
        values.push_back({minute, "wHr", value});
      }
      const auto got = resample_continuous(make_day("u", kDate, values), kHr);
      const auto want = oracle::interpolate(obs);
      for (int m = 0; m < kMinutesPerDay; ++m) REQUIRE(got.values[m] == want[m]);
    }
  }

  TEST_CASE("monotone observations stay monotone") {
    std::vector<test::TimedValue> values;
    double v = 40.0;
    for (int m = 3; m < kMinutesPerDay; m += 37) values.push_back({m, "wHr", v += 1.5 + (m % 5)});
    const auto out = resample_continuous(make_day("u", kDate, values), kHr);
    for (int m = 1; m < kMinutesPerDay; ++m) CHECK(out.values[m] >= out.values[m - 1]);
  }

  TEST_CASE("discrete window counts") {
    const auto activity = make_day("u", kDate, {{0, "mActivity", 7}, {1, "mActivity", 7}, {2, "mActivity", 3},
                                                {3, "mActivity", 3}, {4, "mActivity", 3}});
    const auto counts = aggregate_discrete(activity);
    CHECK(counts(static_cast<int>(Discrete::ActivityWalking), 0) == 2);
    CHECK(counts(static_cast<int>(Discrete::ActivityStill), 0) == 3);
    CHECK(counts(static_cast<int>(Discrete::ActivityVehicle), 0) == 0);
    CHECK(counts(static_cast<int>(Discrete::ActivityBicycle), 0) == 0);

    const auto screen = make_day("u", kDate, {{20, "mScreenStatus", 1}, {21, "mScreenStatus", 1},
                                              {22, "mScreenStatus", 0}, {23, "mScreenStatus", 1}});
    CHECK(aggregate_discrete(screen)(static_cast<int>(Discrete::ScreenOn), 2) == 3);

    const auto ambience = make_day("u", kDate, {{1439, "mAmbience", 2}, {15, "mACStatus", 1}});
    const auto a = aggregate_discrete(ambience);
    CHECK(a(static_cast<int>(Discrete::AmbienceHigh), 143) == 1);
    CHECK(a(static_cast<int>(Discrete::Charging), 1) == 1);

    const auto empty = aggregate_discrete(make_day("u", kDate, {}));
    CHECK(empty.rows() == 9);
    CHECK(empty.cols() == 144);
    CHECK(empty.isZero());
  }

  TEST_CASE("statistics") {
    RawDayGrid a, b;
    a.continuous(kHr, 10) = 4.0f;
    a.observed(kHr, 10) = 1;
    b.continuous(kHr, 20) = 6.0f;
    b.observed(kHr, 20) = 1;
    b.continuous(kHr, 21) = 1000.0f;  // unobserved, ignored
    const std::vector<RawDayGrid> days{a, b};
    const auto config = PreprocessConfig::defaults();
    const auto stats = fit_stats(days, config);
    CHECK(stats.mean[kHr] == 5.0);
    CHECK(stats.stddev[kHr] == 1.0);
    CHECK(stats.stddev[0] == 1.0);  // no observations: fallback

    RawDayGrid constant;
    for (int m = 0; m < kMinutesPerDay; ++m) {
      constant.continuous(kHr, m) = 72.0f;
      constant.observed(kHr, m) = 1;
    }
    const std::vector<RawDayGrid> flat{constant};
    const auto flat_stats = fit_stats(flat, config);
    CHECK(flat_stats.stddev[kHr] == 1.0);
    const auto grid = standardize(constant, flat_stats, config);
    CHECK(grid.continuous.row(kHr).isZero());

    ChannelStats manual = flat_stats;
    manual.mean[kHr] = 5.0;
    manual.stddev[kHr] = 2.0;
    RawDayGrid seven;
    seven.continuous(kHr, 0) = 7.0f;
    seven.observed(kHr, 0) = 1;
    CHECK(standardize(seven, manual, config).continuous(kHr, 0) == 1.0f);

    CHECK_THROWS_AS(fit_stats(std::span<const RawDayGrid>{}, config), Error);
  }

  TEST_CASE("standardized training channels have zero mean and unit deviation") {
    const auto raw = synthetic_raw(3, 5, 3);
    const auto config = PreprocessConfig::defaults();
    const auto stats = fit_stats(raw, config);
    std::vector<RawDayGrid> restandardized;
    for (int k = 0; k < kContinuousChannels; ++k) {
      double sum = 0.0, ss = 0.0;
      std::size_t n = 0;
      for (const auto& day : raw) {
        const auto grid = standardize(day, stats, config);
        for (int m = 0; m < kMinutesPerDay; ++m) {
          if (!day.observed(k, m)) continue;
          sum += grid.continuous(k, m);
          ss += static_cast<double>(grid.continuous(k, m)) * grid.continuous(k, m);
          ++n;
        }
      }
      REQUIRE(n > 0);
      const double mean = sum / n;
      CHECK(std::abs(mean) < 1e-6);
      CHECK(std::abs(std::sqrt(ss / n - mean * mean) - 1.0) < 1e-6);
    }

    // Re-fitting on standardized data yields (approximately) the identity.
    for (const auto& day : raw) {
      RawDayGrid again = day;
      again.continuous = standardize(day, stats, config).continuous;
      restandardized.push_back(again);
    }
    const auto second = fit_stats(restandardized, config);
    for (int k = 0; k < kContinuousChannels; ++k) {
      CHECK(std::abs(second.mean[k]) < 1e-5);
      CHECK(std::abs(second.stddev[k] - 1.0) < 1e-5);
    }
  }

  TEST_CASE("validation days do not influence the statistics") {
    const auto raw = synthetic_raw(2, 4, 9);
    const std::span<const RawDayGrid> all(raw);
    const auto config = PreprocessConfig::defaults();
    const auto train_only = fit_stats(all.first(6), config);
    // Stats depend only on what is passed in; callers pass training days.
    CHECK(fit_stats(all.first(6), config) == train_only);
    CHECK_FALSE(fit_stats(all, config) == train_only);
  }

  TEST_CASE("full pipeline yields finite grids") {
    SynthConfig config;
    config.n_subjects = 2;
    config.days_per_subject = 3;
    const auto data = generate(config);
    std::vector<RawDayGrid> raw;
    for (const auto& r : data.records) raw.push_back(resample_day(r, PreprocessConfig::defaults()));
    const auto stats = fit_stats(raw, PreprocessConfig::defaults());
    for (const auto& r : data.records) {
      const auto grid = transform(r, stats, PreprocessConfig::defaults());
      CHECK(grid.continuous.rows() == 7);
      CHECK(grid.continuous.cols() == 1440);
      CHECK(grid.discrete.rows() == 9);
      CHECK(grid.discrete.cols() == 144);
      CHECK(grid.continuous.allFinite());
      CHECK(grid.discrete.allFinite());
      CHECK(grid.discrete.minCoeff() >= 0.0f);
      CHECK(grid.discrete.maxCoeff() <= 1.0f);
      CHECK_NOTHROW(grid.check());
    }
  }

  TEST_CASE("grid cache and stats round trip") {
    const auto raw = synthetic_raw(2, 2, 4);
    const auto stats = fit_stats(raw, PreprocessConfig::defaults());
    const auto grid = standardize(raw[1], stats, PreprocessConfig::defaults());
    const auto path = std::filesystem::temp_directory_path() / "mislstm_grid_roundtrip.bin";
    write_grid(path, grid);
    const auto back = read_grid(path);
    CHECK(back.continuous == grid.continuous);
    CHECK(back.discrete == grid.discrete);
    CHECK(back.observed == grid.observed);
    CHECK(stats_from_json(stats_to_json(stats)) == stats);
  }
}
