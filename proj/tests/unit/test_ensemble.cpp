#include <doctest.h>

#include <limits>
#include <random>
#include <sstream>

#include "mislstm/ensemble.hpp"
#include "oracles.hpp"

using namespace mislstm;

namespace {

HeadLogits random_logits(std::mt19937_64& rng, double scale = 1.5) {
  std::normal_distribution<double> n(0.0, scale);
  std::array<double, kTotalLogits> flat{};
  for (auto& x : flat) x = n(rng);
  return HeadLogits(flat);
}

// Every head gets `scores` padded with zeros (or truncated) to its arity.
HeadLogits uniform_heads(std::vector<double> binary, std::vector<double> ternary) {
  std::array<double, kTotalLogits> flat{};
  for (int h = 0; h < kHeads; ++h) {
    const auto& src = kHeadClasses[h] == 3 ? ternary : binary;
    for (int c = 0; c < kHeadClasses[h]; ++c) flat[head_offset(h) + c] = src[c];
  }
  return HeadLogits(flat);
}

std::vector<std::vector<HeadLogits>> random_pool(std::mt19937_64& rng, int models, int days) {
  std::vector<std::vector<HeadLogits>> logits(models);
  for (auto& m : logits) {
    for (int d = 0; d < days; ++d) m.push_back(random_logits(rng));
  }
  return logits;
}

EnsemblePool make_pool(std::vector<std::vector<HeadLogits>> logits, int best) {
  EnsemblePool pool;
  for (std::size_t m = 0; m < logits.size(); ++m) pool.model_ids.push_back("m" + std::to_string(m));
  pool.logits = std::move(logits);
  pool.best_index = best;
  return pool;
}

std::vector<std::array<int, kHeads>> classes_of(const std::vector<LabelVector>& labels) {
  std::vector<std::array<int, kHeads>> out;
  for (const auto& l : labels) out.push_back(l.classes());
  return out;
}

}  // namespace

TEST_SUITE("ensemble") {
  TEST_CASE("logit margins") {
    CHECK(logit_margin(std::vector<double>{2.0, 0.5}) == 1.5);
    CHECK(logit_margin(std::vector<double>{1.0, 1.0, 1.0}) == 0.0);
    CHECK(logit_margin(std::vector<double>{0.2, 3.1, 2.9}) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(logit_margin(std::vector<double>{0.2, 3.1, 2.9}, MarginKind::TopThree) ==
          doctest::Approx(2.9).epsilon(1e-12));
    CHECK(logit_margin(std::vector<double>{2.0, 0.5}, MarginKind::TopThree) == 1.5);
    CHECK_THROWS_AS(logit_margin(std::vector<double>{1.0}), Error);
  }

  TEST_CASE("quantile") {
    const std::vector<double> v{4.0, 1.0, 3.0, 2.0};
    CHECK(quantile(v, 0.5) == 2.5);
    CHECK(quantile(v, 0.0) == 1.0);
    CHECK(quantile(v, 1.0) == 4.0);
    CHECK(quantile({7.0}, 0.3) == 7.0);
    CHECK_THROWS_AS(quantile({}, 0.5), Error);
    CHECK_THROWS_AS(quantile(v, 1.5), Error);
    CHECK_THROWS_AS(quantile(v, -0.1), Error);
  }

  TEST_CASE("soft voting") {
    std::mt19937_64 rng(1);
    const auto single = random_pool(rng, 1, 20);
    const auto soft = soft_vote(make_pool(single, 0));
    for (int d = 0; d < 20; ++d) CHECK(soft[d] == predict(single[0][d]));

    // Opposite logits cancel and the tie goes to class 0.
    const auto up = uniform_heads({1.0, -1.0}, {1.0, -1.0, 0.0});
    const auto down = uniform_heads({-1.0, 1.0}, {-1.0, 1.0, 0.0});
    CHECK(soft_vote(make_pool({{up}, {down}}, 0))[0] == LabelVector({0, 0, 0, 0, 0, 0}));

    // One confident model outweighs two mild ones.
    const auto strong = uniform_heads({3.0, 0.0}, {3.0, 0.0, 0.0});
    const auto mild = uniform_heads({0.0, 1.0}, {0.0, 1.0, 0.0});
    CHECK(soft_vote(make_pool({{strong}, {mild}, {mild}}, 1))[0] == LabelVector({0, 0, 0, 0, 0, 0}));
  }

  TEST_CASE("hard voting") {
    const auto zero = uniform_heads({1.0, 0.0}, {1.0, 0.0, 0.0});
    const auto one = uniform_heads({0.0, 1.0}, {0.0, 1.0, 0.0});
    const auto two = uniform_heads({0.0, 1.0}, {0.0, 0.0, 1.0});
    CHECK(hard_vote(make_pool({{zero}, {one}, {one}}, 0))[0] == LabelVector({1, 1, 1, 1, 1, 1}));
    // Tie between 0 and 1 resolved toward the best model's vote.
    CHECK(hard_vote(make_pool({{zero}, {one}}, 1))[0] == LabelVector({1, 1, 1, 1, 1, 1}));
    CHECK(hard_vote(make_pool({{zero}, {one}}, 0))[0] == LabelVector({0, 0, 0, 0, 0, 0}));
    // Three-way tie on Q3; the best model's vote wins there too.
    CHECK(hard_vote(make_pool({{zero}, {one}, {two}}, 2))[0][3] == 2);

    const std::vector<int> votes{2, 0, 2, 0};
    CHECK(modal_vote(votes, 3, 1) == 0);
    CHECK(modal_vote(votes, 3, 2) == 2);
  }

  TEST_CASE("UALRE examples") {
    const auto confident_zero = uniform_heads({2.0, 0.0}, {2.0, 0.0, 0.0});
    const auto unsure_zero = uniform_heads({0.1, 0.0}, {0.1, 0.0, 0.0});
    const auto confident_one = uniform_heads({0.0, 2.0}, {0.0, 2.0, 0.0});
    const Thresholds tau(3, std::array<double, kHeads>{1, 1, 1, 1, 1, 1});

    auto pool = make_pool({{confident_zero}, {confident_one}, {confident_one}}, 0);
    pool.thresholds = tau;
    CHECK(ualre(pool)[0] == LabelVector({0, 0, 0, 0, 0, 0}));

    pool = make_pool({{unsure_zero}, {confident_one}, {confident_one}}, 0);
    pool.thresholds = tau;
    CHECK(ualre(pool)[0] == LabelVector({1, 1, 1, 1, 1, 1}));

    pool = make_pool({{unsure_zero}, {unsure_zero}, {unsure_zero}}, 0);
    pool.thresholds = tau;
    CHECK(ualre(pool)[0] == LabelVector({0, 0, 0, 0, 0, 0}));

    pool.thresholds.reset();
    CHECK_THROWS_AS(ualre(pool), Error);
  }

  TEST_CASE("UALRE degenerate pools") {
    std::mt19937_64 rng(2);
    const auto logits = random_pool(rng, 4, 30);
    auto single = make_pool({logits[1]}, 0);
    single.thresholds = fit_thresholds(single.logits, 0.5);
    const auto alone = ualre(single);
    for (int d = 0; d < 30; ++d) CHECK(alone[d] == predict(logits[1][d]));

    auto pool = make_pool(logits, 2);
    pool.thresholds = Thresholds(4, std::array<double, kHeads>{});
    for (auto& row : *pool.thresholds) row.fill(-std::numeric_limits<double>::infinity());
    const auto trusting = ualre(pool);
    for (int d = 0; d < 30; ++d) CHECK(trusting[d] == predict(logits[2][d]));
  }

  TEST_CASE("UALRE equals the straight-line oracle") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 300; ++trial) {
      const int models = 1 + trial % 5;
      const int days = 2 + static_cast<int>(rng() % 12);
      const bool three = trial % 3 == 0;
      auto pool = make_pool(random_pool(rng, models, days), static_cast<int>(rng() % models));
      pool.margin = three ? MarginKind::TopThree : MarginKind::TopTwo;
      pool.thresholds = fit_thresholds(random_pool(rng, models, 6), 0.1 * (trial % 11), pool.margin);
      CHECK(classes_of(ualre(pool)) == oracle::ualre(pool.logits, pool.best_index, *pool.thresholds, three));
    }
  }

  TEST_CASE("UALRE ignores a per-head constant shift") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 5.0);
    auto pool = make_pool(random_pool(rng, 3, 25), 1);
    pool.thresholds = fit_thresholds(pool.logits, 0.5);
    const auto base = ualre(pool);
    for (auto& model : pool.logits) {
      for (auto& day : model) {
        for (int h = 0; h < kHeads; ++h) {
          const double shift = n(rng);
          for (double& x : day.head(h)) x += shift;
        }
      }
    }
    CHECK(ualre(pool) == base);
  }

  TEST_CASE("threshold fitting") {
    const std::vector<std::vector<HeadLogits>> validation{
        {uniform_heads({1.0, 0.0}, {3.0, 1.0, 0.0}), uniform_heads({0.0, 3.0}, {0.0, 0.0, 0.5}),
         uniform_heads({2.0, 0.0}, {0.0, 2.0, 0.0}), uniform_heads({0.0, 4.0}, {1.0, 1.0, 1.0})}};
    const auto tau = fit_thresholds(validation, 0.5);
    REQUIRE(tau.size() == 1);
    CHECK(tau[0][0] == 2.5);  // margins 1, 3, 2, 4
    CHECK(tau[0][3] == 1.25);  // margins 2, 0.5, 2, 0
    const auto three = fit_thresholds(validation, 0.0, MarginKind::TopThree);
    CHECK(three[0][3] == 0.0);
    CHECK_THROWS_AS(fit_thresholds({{validation[0][0]}}, 0.5), Error);

    const std::vector<std::string> ids{"alpha"};
    CHECK(thresholds_from_json(thresholds_to_json(ids, tau), ids) == tau);
    const std::vector<std::string> other{"beta"};
    CHECK_THROWS_AS(thresholds_from_json(thresholds_to_json(ids, tau), other), ParseError);
  }

  TEST_CASE("pool validation and logit records") {
    std::mt19937_64 rng(5);
    auto pool = make_pool(random_pool(rng, 2, 3), 0);
    pool.logits[1].pop_back();
    CHECK_THROWS_AS(soft_vote(pool), Error);
    CHECK_THROWS_AS(soft_vote(make_pool({}, 0)), Error);
    CHECK_THROWS_AS(hard_vote(make_pool(random_pool(rng, 2, 3), 2)), Error);
    CHECK(select_best(std::vector<double>{0.5, 0.7, 0.7}) == 1);

    std::stringstream stream;
    std::vector<LogitRecord> records;
    for (int d = 0; d < 4; ++d) records.push_back({"s1/2024-01-0" + std::to_string(d + 1), "mis", random_logits(rng)});
    for (const auto& r : records) write_logit_record(stream, r);
    const auto back = read_logit_records(stream);
    REQUIRE(back.size() == records.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back[i].day_id == records[i].day_id);
      CHECK(back[i].model_id == "mis");
      CHECK(back[i].logits == records[i].logits);
    }
    std::istringstream bad("{\"day_id\": \"x\", \"model_id\": \"m\", \"q1\": [1]}\n");
    CHECK_THROWS_AS(read_logit_records(bad), ParseError);
  }
}
