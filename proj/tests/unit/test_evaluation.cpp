#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "mislstm/evaluation.hpp"
#include "oracles.hpp"

using namespace mislstm;

namespace {

std::vector<int> subjects_with(const std::vector<int>& days_per_subject) {
  std::vector<int> subjects;
  for (int s = 0; s < static_cast<int>(days_per_subject.size()); ++s) {
    subjects.insert(subjects.end(), days_per_subject[s], s);
  }
  return subjects;
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("subject-stratified split sizes") {
    const auto subjects = subjects_with(std::vector<int>(10, 50));
    const auto split = stratified_subject_split(subjects, 0.8, 0);
    CHECK(split.train.size() == 400);
    CHECK(split.val.size() == 100);
    for (int s = 0; s < 10; ++s) {
      CHECK(std::count_if(split.train.begin(), split.train.end(), [&](auto i) { return subjects[i] == s; }) == 40);
    }

    const auto five = stratified_subject_split(subjects_with({5}), 0.8, 3);
    CHECK(five.train.size() == 4);
    CHECK(five.val.size() == 1);

    // Clamping keeps both sides non-empty.
    const auto tiny = stratified_subject_split(subjects_with({2, 3}), 0.99, 1);
    CHECK(tiny.val.size() == 2);
    CHECK_THROWS_AS(stratified_subject_split(subjects_with({1, 4}), 0.8, 0), Error);
  }

  TEST_CASE("split is a deterministic partition") {
    const auto subjects = subjects_with({7, 12, 9, 30});
    const auto a = stratified_subject_split(subjects, 0.7, 42);
    const auto b = stratified_subject_split(subjects, 0.7, 42);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    const auto c = stratified_subject_split(subjects, 0.7, 43);
    CHECK_FALSE(a.train == c.train);

    CHECK(std::is_sorted(a.train.begin(), a.train.end()));
    CHECK(std::is_sorted(a.val.begin(), a.val.end()));
    std::vector<std::size_t> all(a.train);
    all.insert(all.end(), a.val.begin(), a.val.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expected(subjects.size());
    std::iota(expected.begin(), expected.end(), 0);
    CHECK(all == expected);
    std::set<int> train_subjects, val_subjects;
    for (auto i : a.train) train_subjects.insert(subjects[i]);
    for (auto i : a.val) val_subjects.insert(subjects[i]);
    CHECK(train_subjects.size() == 4);
    CHECK(val_subjects.size() == 4);
  }

  TEST_CASE("macro-F1 examples") {
    const std::vector<int> labels{0, 1, 0, 1};
    CHECK(macro_f1(labels, labels, 2) == 1.0);
    const std::vector<int> zeros{0, 0, 0, 0};
    CHECK(macro_f1(zeros, labels, 2) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    const std::vector<int> ternary{0, 1, 0, 1, 1};
    CHECK(macro_f1(ternary, ternary, 3) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK_THROWS_AS(macro_f1(std::vector<int>{}, std::vector<int>{}, 2), Error);
    CHECK_THROWS_AS(macro_f1(std::vector<int>{0}, std::vector<int>{0, 1}, 2), Error);

    const auto cm = confusion_matrix(std::vector<int>{1, 1, 0}, std::vector<int>{0, 1, 1}, 2);
    CHECK(cm[0][1] == 1);  // label 0 predicted as 1
    CHECK(cm[1][0] == 1);
    CHECK(cm[1][1] == 1);
  }

  TEST_CASE("macro-F1 equals the counting oracle and ignores joint permutation") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 300; ++trial) {
      const int k = 2 + trial % 2;
      const int n = 1 + static_cast<int>(rng() % 60);
      std::vector<int> p(n), l(n);
      for (int i = 0; i < n; ++i) {
        p[i] = static_cast<int>(rng() % k);
        l[i] = static_cast<int>(rng() % k);
      }
      const double got = macro_f1(p, l, k);
      CHECK(got == oracle::macro_f1(p, l, k));
      std::vector<int> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<int> pp(n), ll(n);
      for (int i = 0; i < n; ++i) {
        pp[i] = p[order[i]];
        ll[i] = l[order[i]];
      }
      CHECK(macro_f1(pp, ll, k) == doctest::Approx(got).epsilon(1e-15));
    }
  }

  TEST_CASE("reports and rounding") {
    std::vector<LabelVector> labels{LabelVector({0, 1, 0, 2, 1, 0}), LabelVector({1, 0, 1, 1, 0, 1})};
    // S1 class 0 never occurs, so that head scores 2/3 even when every
    // prediction is right.
    CHECK(evaluate(std::span<const LabelVector>(labels), labels).average ==
          doctest::Approx((5.0 + 2.0 / 3.0) / 6.0).epsilon(1e-15));

    const auto five_sixths = report_from_scores({1, 1, 1, 1, 1, 0});
    CHECK(five_sixths.average == doctest::Approx(5.0 / 6.0).epsilon(1e-15));

    const auto row = report_from_scores({0.625, 0.626, 0.618, 0.486, 0.650, 0.682});
    CHECK(format3(row.average) == "0.615");
    CHECK(round3(row.average) == 0.615);
    CHECK(round3(0.6145) == 0.615);
    CHECK(round3(0.5915) == 0.592);
    CHECK(round3(0.1234) == 0.123);
    CHECK(format3(1.0) == "1.000");

    const std::vector<NamedReport> rows{{"MIS-LSTM", row}};
    const auto table = format_table(rows);
    CHECK(table.find("0.615") != std::string::npos);
    CHECK(table.find("0.486") != std::string::npos);
    CHECK(table.find("Avg") != std::string::npos);
  }

  TEST_CASE("report json round trip") {
    std::vector<LabelVector> labels{LabelVector({0, 1, 0, 2, 1, 0}), LabelVector({1, 0, 1, 1, 0, 1}),
                                    LabelVector({1, 1, 0, 0, 0, 1})};
    std::vector<LabelVector> predictions{labels[1], labels[0], labels[2]};
    const auto report = evaluate(std::span<const LabelVector>(predictions), labels);
    const auto back = MetricReport::from_json(report.to_json());
    CHECK(back.f1 == report.f1);
    CHECK(back.average == report.average);
    CHECK(back.confusion == report.confusion);
  }
}
