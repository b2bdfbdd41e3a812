#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "mislstm/pipeline.hpp"
#include "mislstm/training.hpp"

using namespace mislstm;

namespace {

DayFeatureGrid noise_grid(std::mt19937_64& rng) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  DayFeatureGrid grid;
  for (int k = 0; k < kContinuousChannels; ++k) {
    float level = n(rng);
    for (int m = 0; m < kMinutesPerDay; ++m) {
      level = 0.97f * level + 0.25f * n(rng);
      grid.continuous(k, m) = level;
      grid.observed(k, m) = 1;
    }
  }
  for (int f = 0; f < kDiscreteFeatures; ++f) {
    for (int w = 0; w < kWindowsPerDay; ++w) grid.discrete(f, w) = u(rng) < 0.3f ? u(rng) : 0.0f;
  }
  return grid;
}

std::vector<LabeledInput> toy_days(int count, ModelKind kind, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledInput> days;
  for (int i = 0; i < count; ++i) {
    std::array<int, kHeads> classes{};
    for (int h = 0; h < kHeads; ++h) classes[h] = static_cast<int>(rng() % kHeadClasses[h]);
    days.push_back({make_day_input(noise_grid(rng), i % 2, kind, BlockConfig{}, true, DiscreteNormalization::MaxScale),
                    LabelVector(classes), "toy/" + std::to_string(i)});
  }
  return days;
}

ModelConfig toy_model() {
  auto config = ModelConfig::desk();
  config.n_subjects = 2;
  return config;
}

double ce(std::initializer_list<double> logits, int target) {
  const std::vector<double> v(logits);
  double sum = 0.0;
  for (double x : v) sum += std::exp(x);
  return -(v[target] - std::log(sum));
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("focal loss examples") {
    const std::array<double, 2> confident{10.0, -10.0};
    CHECK(focal_loss(confident, 0, 0.0, 1.0) == doctest::Approx(2.061153622e-9).epsilon(1e-6));
    CHECK(focal_loss(confident, 0, 0.0, 1.0) == doctest::Approx(ce({10.0, -10.0}, 0)).epsilon(1e-9));

    const std::array<double, 2> even{0.3, 0.3};
    CHECK(focal_loss(even, 1, 2.0, 1.0) == doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-12));
    CHECK(0.25 * std::log(2.0) == doctest::Approx(0.1733).epsilon(1e-3));

    double previous = std::numeric_limits<double>::infinity();
    for (double gap = -4.0; gap <= 12.0; gap += 0.5) {
      const std::array<double, 2> logits{gap, 0.0};
      const double loss = focal_loss(logits, 0, 2.0, 1.0);
      CHECK(loss >= 0.0);
      CHECK(loss < previous);
      previous = loss;
    }
    CHECK(previous < 1e-12);
  }

  TEST_CASE("focal gradient matches finite differences") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
      const int classes = 2 + trial % 2;
      std::vector<double> logits(classes), grad(classes);
      for (auto& x : logits) x = n(rng);
      const int target = trial % classes;
      const double gamma = 0.5 * (trial % 5);
      const double alpha = 0.5 + 0.1 * (trial % 7);
      focal_loss(logits, target, gamma, alpha, grad);
      for (int i = 0; i < classes; ++i) {
        auto up = logits, down = logits;
        up[i] += 1e-6;
        down[i] -= 1e-6;
        const double numeric =
            (focal_loss(up, target, gamma, alpha) - focal_loss(down, target, gamma, alpha)) / 2e-6;
        CHECK(grad[i] == doctest::Approx(numeric).epsilon(1e-5).scale(1e-8));
      }
    }
  }

  TEST_CASE("total loss") {
    const std::array<double, kTotalLogits> uniform{};
    const LabelVector label({0, 1, 0, 2, 1, 0});
    CHECK(total_loss(uniform, label, 0.0, unit_alpha()) ==
          doctest::Approx(5.0 * std::log(2.0) + std::log(3.0)).epsilon(1e-12));

    std::array<double, kTotalLogits> perfect{};
    for (int h = 0; h < kHeads; ++h) perfect[head_offset(h) + label[h]] = 30.0;
    CHECK(total_loss(perfect, label, 2.0, unit_alpha()) < 1e-6);

    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    std::array<double, kTotalLogits> logits{};
    for (auto& x : logits) x = n(rng);
    const auto base = unit_alpha();
    auto doubled = base;
    for (auto& a : doubled[3]) a *= 2.0;
    const double head3 = focal_loss(std::span<const double>(logits).subspan(head_offset(3), 3), label[3], 2.0, 1.0);
    CHECK(total_loss(logits, label, 2.0, doubled) - total_loss(logits, label, 2.0, base) ==
          doctest::Approx(head3).epsilon(1e-12));
  }

  TEST_CASE("balanced alpha") {
    std::vector<LabelVector> labels(4, LabelVector({0, 0, 0, 0, 0, 0}));
    labels.push_back(LabelVector({1, 0, 0, 1, 0, 0}));
    const auto alpha = balanced_alpha(labels);
    // Q1 counts (4, 1): weights proportional to (1/4, 1), mean 1.
    CHECK(alpha[0][0] == doctest::Approx(0.4));
    CHECK(alpha[0][1] == doctest::Approx(1.6));
    // Q2 has an unseen class, counted once.
    CHECK(alpha[1][0] == doctest::Approx(2.0 * 0.2 / 1.2));
    CHECK(alpha[1][1] == doctest::Approx(2.0 * 1.0 / 1.2));
    for (int h = 0; h < kHeads; ++h) {
      CHECK(std::accumulate(alpha[h].begin(), alpha[h].end(), 0.0) / kHeadClasses[h] == doctest::Approx(1.0));
    }
  }

  TEST_CASE("best epoch is the earliest maximum") {
    const std::vector<double> history{0.3, 0.7, 0.5};
    CHECK(best_epoch(history) == 1);  // the second epoch
    const std::vector<double> ties{0.2, 0.6, 0.6, 0.1};
    CHECK(best_epoch(ties) == 1);
    CHECK(best_epoch(std::vector<double>{}) == -1);
  }

  TEST_CASE("decoupled weight decay update") {
    nn::Parameter<double> p;
    p.resize(1, 1);
    p.value(0, 0) = 2.0;
    nn::AdamW<double> opt({&p}, nn::AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.5});
    p.grad(0, 0) = 4.0;
    opt.step(0.5);
    // g = 2; m = 0.2, v = 0.004; bias-corrected step is lr * sign(g).
    const double decayed = 2.0 * (1.0 - 0.1 * 0.5);
    const double m_hat = 0.2 / 0.1, v_hat = 0.004 / 0.001;
    CHECK(p.value(0, 0) == doctest::Approx(decayed - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8)).epsilon(1e-12));
    CHECK(opt.steps() == 1);
  }

  TEST_CASE("overfits a toy dataset") {
    const auto days = toy_days(8, ModelKind::MisLstm, 5);
    auto config = TrainConfig::desk();
    config.epochs = 200;
    config.batch_size = 8;
    auto model_config = toy_model();
    model_config.dropout = 0.0;
    const auto result = train(ModelKind::MisLstm, model_config, BlockConfig{}, config, days, days);
    const auto logits = predict_logits(*result.model, days);
    for (std::size_t i = 0; i < days.size(); ++i) CHECK(predict(logits[i]) == days[i].label);
    CHECK(result.bundle.history.back().train_loss < result.bundle.history.front().train_loss);
  }

  TEST_CASE("same seed, same history; checkpoint reproduces its metrics") {
    const auto train_days = toy_days(12, ModelKind::MisLstm, 6);
    const auto val_days = toy_days(6, ModelKind::MisLstm, 7);
    auto config = TrainConfig::desk();
    config.epochs = 4;
    config.batch_size = 4;
    config.seed = 7;
    std::vector<std::string> log_a, log_b;
    const auto a = train(ModelKind::MisLstm, toy_model(), BlockConfig{}, config, train_days, val_days,
                         [&](const std::string& line) { log_a.push_back(line); });
    const auto b = train(ModelKind::MisLstm, toy_model(), BlockConfig{}, config, train_days, val_days,
                         [&](const std::string& line) { log_b.push_back(line); });
    CHECK(a.bundle.history == b.bundle.history);
    CHECK(log_a == log_b);
    CHECK(log_a.size() == 6);  // start, 4 epochs, done
    CHECK(history_from_json(history_to_json(a.bundle.history)) == a.bundle.history);

    config.seed = 8;
    const auto c = train(ModelKind::MisLstm, toy_model(), BlockConfig{}, config, train_days, val_days);
    CHECK_FALSE(c.bundle.history == a.bundle.history);

    std::vector<LabelVector> val_labels;
    for (const auto& d : val_days) val_labels.push_back(d.label);
    const auto report = evaluate(std::span<const HeadLogits>(predict_logits(*a.model, val_days)), val_labels);
    CHECK(report.average == a.bundle.val_average);
    CHECK(report.f1 == a.bundle.val_f1);
    CHECK(a.bundle.history[a.bundle.epoch].val_average == a.bundle.val_average);

    // Persisted parameters restore into a fresh model with identical output.
    const auto path = std::filesystem::temp_directory_path() / "mislstm_params.bin";
    write_parameters(path, a.bundle.parameters);
    auto fresh = make_model<float>(ModelKind::MisLstm, toy_model(), BlockConfig{}, 99);
    restore(*fresh, read_parameters(path));
    for (const auto& d : val_days) CHECK(forward_day(*fresh, d.input) == forward_day(*a.model, d.input));

    auto wrong = toy_model();
    wrong.lstm_hidden = 32;
    auto mismatched = make_model<float>(ModelKind::MisLstm, wrong, BlockConfig{}, 1);
    CHECK_THROWS_AS(restore(*mismatched, a.bundle.parameters), Error);
  }

  TEST_CASE("training preconditions") {
    const auto days = toy_days(2, ModelKind::Cnn1dBaseline, 8);
    auto config = TrainConfig::desk();
    config.epochs = 1;
    CHECK_THROWS_AS(train(ModelKind::Cnn1dBaseline, toy_model(), BlockConfig{}, config, {}, days), Error);
    CHECK_THROWS_AS(train(ModelKind::Cnn1dBaseline, toy_model(), BlockConfig{}, config, days, {}), Error);
    config.batch_size = 0;
    CHECK_THROWS_AS(config.validate(), ConfigError);
  }
}
