#include <doctest.h>

#include <bit>
#include <cmath>
#include <limits>
#include <random>

#include "mislstm/types.hpp"
#include "test_support.hpp"

using namespace mislstm;
using test::make_day;
using test::ymd;

TEST_SUITE("types") {
  TEST_CASE("record validation") {
    const auto date = ymd(2025, 1, 1);
    CHECK(validate_day_record(make_day("u01", date, {{720, "wHr", 72.0}})).ok());

    const auto unknown = validate_day_record(make_day("u01", date, {{720, "wFoo", 1.0}}));
    REQUIRE(unknown.violations.size() == 1);
    CHECK(unknown.violations[0].find("unknown channel") != std::string::npos);

    const auto late = validate_day_record(make_day("u01", date, {{1440 + 5, "wHr", 60.0}}));
    REQUIRE(late.violations.size() == 1);
    CHECK(late.violations[0].find("timestamp outside day") != std::string::npos);

    auto nan = make_day("u01", date, {{10, "wHr", std::nan("")}});
    CHECK_FALSE(validate_day_record(nan).ok());
  }

  TEST_CASE("feature vocabulary") {
    CHECK(continuous_channels().size() == 7);
    CHECK(discrete_feature_names().size() == 9);
    CHECK(known_items().size() == 11);
    CHECK(kContinuousChannels + kDiscreteFeatures == 16);
    for (auto item : known_items()) CHECK(is_known_item(item));
    CHECK_FALSE(is_known_item("wFoo"));
    CHECK(continuous_index("wHr") == static_cast<int>(Continuous::HeartRate));
    CHECK_FALSE(continuous_index(kItemActivity).has_value());
  }

  TEST_CASE("label vector ranges") {
    for (int s1 = 0; s1 < 3; ++s1) CHECK_NOTHROW(LabelVector({1, 0, 1, s1, 1, 0}));
    CHECK_THROWS_AS(LabelVector({1, 0, 1, 3, 1, 0}), Error);
    CHECK_THROWS_AS(LabelVector({2, 0, 1, 0, 1, 0}), Error);
    CHECK_THROWS_AS(LabelVector({0, 0, 0, -1, 0, 0}), Error);
    const LabelVector v({1, 0, 1, 2, 1, 0});
    CHECK(v[Head::S1] == 2);
    CHECK(v[Head::S3] == 0);
  }

  TEST_CASE("head logits serialization round-trips bit-exactly") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    for (int trial = 0; trial < 200; ++trial) {
      std::array<double, kTotalLogits> flat{};
      for (auto& x : flat) x = u(rng) * std::pow(10.0, static_cast<int>(rng() % 7) - 3);
      flat[0] = 0.1;
      flat[1] = std::numeric_limits<double>::denorm_min();
      flat[2] = -0.0;
      const HeadLogits logits(flat);
      const auto back = deserialize_head_logits(serialize(logits));
      for (int i = 0; i < kTotalLogits; ++i) {
        CHECK(std::bit_cast<std::uint64_t>(back.flat()[i]) == std::bit_cast<std::uint64_t>(flat[i]));
      }
    }
    CHECK_THROWS_AS(deserialize_head_logits("[1,2,3]"), ParseError);
    CHECK_THROWS_AS(deserialize_head_logits("not json"), ParseError);
    std::array<double, kTotalLogits> bad{};
    bad[4] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(HeadLogits{bad}, Error);
  }

  TEST_CASE("argmax and predict") {
    const std::array<double, 3> s1{0.1, 0.9, 0.3};
    CHECK(argmax(s1) == 1);
    const std::array<double, 2> tie{0.5, 0.5};
    CHECK(argmax(tie) == 0);

    std::array<double, kTotalLogits> flat{};
    for (int h = 0; h < kHeads; ++h) flat[head_offset(h) + (kHeadClasses[h] - 1)] = 1.0;
    const auto label = predict(HeadLogits(flat));
    CHECK(LabelVector::valid(label.classes()));
    CHECK(label.classes() == std::array<int, kHeads>{1, 1, 1, 2, 1, 1});
    CHECK(head_offset(3) == 6);
    CHECK(head_offset(kHeads) == kTotalLogits);
  }

  TEST_CASE("dates") {
    const auto d = parse_date("2025-01-01");
    CHECK(d == ymd(2025, 1, 1));
    CHECK(format_date(d) == "2025-01-01");
    CHECK(day_start_epoch(d) == 1735689600);
    CHECK(date_of_epoch(1735689600 + 86399) == d);
    CHECK(date_of_epoch(1735689600 - 1) == ymd(2024, 12, 31));
    CHECK_THROWS_AS(parse_date("2025-13-01"), ParseError);
    CHECK_THROWS_AS(parse_date("2025/01/01"), ParseError);
  }

  TEST_CASE("block config") {
    BlockConfig c;
    CHECK(c.blocks_per_day() == 6);
    CHECK(c.block_minutes() == 240);
    CHECK(c.block_windows() == 24);
    c.n_hours = 5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(parse_encoding("stacked_vertical") == Encoding::StackedVertical);
    CHECK_THROWS_AS(parse_encoding("diagonal"), ConfigError);
  }
}
