#include <benchmark/benchmark.h>

#include <random>

#include "mislstm/encoders.hpp"
#include "mislstm/ensemble.hpp"
#include "mislstm/imaging.hpp"
#include "mislstm/pipeline.hpp"

using namespace mislstm;

namespace {

DayFeatureGrid random_grid() {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> n(0.0f, 1.0f);
  DayFeatureGrid grid;
  for (Eigen::Index i = 0; i < grid.continuous.size(); ++i) grid.continuous.data()[i] = n(rng);
  for (Eigen::Index i = 0; i < grid.discrete.size(); ++i) grid.discrete.data()[i] = std::abs(n(rng)) * 0.2f;
  grid.observed.setOnes();
  return grid;
}

ModelConfig bench_model() {
  auto config = ModelConfig::desk();
  config.n_subjects = 4;
  return config;
}

}  // namespace

static void BM_RasterizeDay(benchmark::State& state) {
  const auto grid = random_grid();
  BlockConfig blocks;
  blocks.n_hours = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(make_day_input(grid, 0, ModelKind::MisLstm, blocks, true, DiscreteNormalization::MaxScale));
  }
}
BENCHMARK(BM_RasterizeDay)->Arg(2)->Arg(4)->Arg(6);

static void BM_EncodeBlock(benchmark::State& state) {
  Rng rng(2);
  const auto config = state.range(0) ? ContinuousEncoderConfig::defaults() : ContinuousEncoderConfig::desk();
  ContinuousEncoder<float> encoder("enc", config, rng);
  const auto input = make_day_input(random_grid(), 0, ModelKind::MisLstm, BlockConfig{}, true,
                                    DiscreteNormalization::MaxScale);
  const auto image = to_dense(input.images[0], Encoding::MultiChannel);
  for (auto _ : state) benchmark::DoNotOptimize(encode_continuous(encoder, image).embedding);
}
BENCHMARK(BM_EncodeBlock)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_ForwardDay(benchmark::State& state) {
  const BlockConfig blocks;
  const auto kind = static_cast<ModelKind>(state.range(0));
  const auto model = make_model<float>(kind, bench_model(), blocks, 3);
  const auto input = make_day_input(random_grid(), 1, kind, blocks, true, DiscreteNormalization::MaxScale);
  for (auto _ : state) benchmark::DoNotOptimize(forward_day(*model, input));
}
BENCHMARK(BM_ForwardDay)
    ->Arg(static_cast<int>(ModelKind::MisLstm))
    ->Arg(static_cast<int>(ModelKind::LstmBaseline))
    ->Arg(static_cast<int>(ModelKind::Cnn1dBaseline))
    ->Unit(benchmark::kMillisecond);

static void BM_ForwardBackwardDay(benchmark::State& state) {
  const BlockConfig blocks;
  auto model = make_model<float>(ModelKind::MisLstm, bench_model(), blocks, 4);
  const auto input = make_day_input(random_grid(), 1, ModelKind::MisLstm, blocks, true,
                                    DiscreteNormalization::MaxScale);
  const LabelVector label({0, 1, 0, 2, 1, 0});
  const auto alpha = unit_alpha();
  std::vector<double> dlogits(kTotalLogits);
  Rng rng(5);
  for (auto _ : state) {
    const auto out = model->forward(input, &rng);
    std::array<double, kTotalLogits> logits{};
    for (int i = 0; i < kTotalLogits; ++i) logits[i] = out.logits(i);
    total_loss(logits, label, 2.0, alpha, dlogits);
    nn::Vector<float> grad(kTotalLogits);
    for (int i = 0; i < kTotalLogits; ++i) grad(i) = static_cast<float>(dlogits[i]);
    model->backward(*out.trace, grad);
  }
}
BENCHMARK(BM_ForwardBackwardDay)->Unit(benchmark::kMillisecond);

static void BM_Ualre(benchmark::State& state) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  const int models = static_cast<int>(state.range(0));
  EnsemblePool pool;
  pool.logits.resize(models);
  for (auto& m : pool.logits) {
    for (int d = 0; d < 1000; ++d) {
      std::array<double, kTotalLogits> flat{};
      for (auto& x : flat) x = n(rng);
      m.emplace_back(flat);
    }
  }
  pool.thresholds = fit_thresholds(pool.logits, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(ualre(pool));
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_Ualre)->Arg(3)->Arg(5);
BENCHMARK_MAIN();
