#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "mislstm/encoders.hpp"
#include "mislstm/imaging.hpp"

using namespace mislstm;

namespace {

BlockImage random_image(int channels, int height, int width, double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution lit(density);
  BlockImage image{channels, height, width, Encoding::MultiChannel, {}};
  image.pixels.resize(static_cast<std::size_t>(channels) * height * width);
  for (auto& p : image.pixels) p = lit(rng) ? 1.0f : 0.0f;
  return image;
}

RowMatrixF random_block(int rows, int length, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  RowMatrixF block(rows, length);
  for (int r = 0; r < rows; ++r) {
    for (int t = 0; t < length; ++t) block(r, t) = u(rng);
  }
  return block;
}

nn::Parameter<float>* find(nn::ParameterRefs<float>& refs, const std::string& name) {
  for (auto* p : refs) {
    if (p->name == name) return p;
  }
  return nullptr;
}

}  // namespace

TEST_SUITE("encoders") {
  TEST_CASE("continuous embedding length and global pooling") {
    Rng rng(1);
    ContinuousEncoder<float> encoder("enc", ContinuousEncoderConfig::defaults(), rng);
    const auto four = encode_continuous(encoder, random_image(7, 64, 240, 0.05, 2));
    CHECK(four.embedding.size() == 256);
    CHECK(four.feature_map.channels() == encoder.map_channels());
    const auto eight = encode_continuous(encoder, random_image(7, 64, 480, 0.05, 3));
    CHECK(eight.embedding.size() == 256);
    CHECK(eight.feature_map.w > four.feature_map.w);

    CHECK_THROWS_AS(encode_continuous(encoder, random_image(3, 64, 240, 0.05, 4)), ShapeError);
  }

  TEST_CASE("zero images are deterministic and finite") {
    Rng rng(5);
    ContinuousEncoder<float> encoder("enc", ContinuousEncoderConfig::desk(), rng);
    const auto a = encode_continuous(encoder, random_image(7, 64, 240, 0.0, 0));
    const auto b = encode_continuous(encoder, random_image(7, 64, 240, 0.0, 1));
    CHECK(a.embedding == b.embedding);
    for (double density : {0.0, 1.0, 0.1}) {
      const auto e = encode_continuous(encoder, random_image(7, 64, 240, density, 6));
      CHECK(std::isfinite(e.embedding.norm()));
    }
  }

  TEST_CASE("default continuous encoder stays under five million parameters") {
    Rng rng(7);
    ContinuousEncoder<float> encoder("enc", ContinuousEncoderConfig::defaults(), rng);
    nn::ParameterRefs<float> refs;
    encoder.collect(refs);
    const auto count = nn::parameter_count(refs);
    MESSAGE("default continuous encoder parameters: " << count);
    CHECK(count < 5'000'000u);
  }

  TEST_CASE("discrete embedding size and kernel precondition") {
    DiscreteEncoderConfig config;
    CHECK(config.output_size() == 64);
    CHECK_NOTHROW(config.validate(BlockConfig{}.block_windows()));
    CHECK_THROWS_AS(config.validate(5), ConfigError);
    Rng rng(8);
    DiscreteEncoder<float> encoder("disc", kDiscreteFeatures, config, rng);
    CHECK(encode_discrete(encoder, random_block(9, 24, 9)).size() == 64);
  }

  TEST_CASE("discrete encoder equals a sliding-window brute force") {
    DiscreteEncoderConfig config;
    Rng rng(10);
    DiscreteEncoder<float> encoder("disc", kDiscreteFeatures, config, rng);
    nn::ParameterRefs<float> refs;
    encoder.collect(refs);
    for (int trial = 0; trial < 20; ++trial) {
      const auto block = random_block(9, 12 + trial, 100 + trial);
      const auto got = encode_discrete(encoder, block);
      int unit = 0;
      for (int k : config.kernel_sizes) {
        const auto* w = find(refs, "disc.k" + std::to_string(k) + ".weight");
        const auto* b = find(refs, "disc.k" + std::to_string(k) + ".bias");
        REQUIRE(w != nullptr);
        REQUIRE(b != nullptr);
        for (int f = 0; f < config.filters_per_size; ++f, ++unit) {
          double best = -std::numeric_limits<double>::infinity();
          for (int t = 0; t + k <= block.cols(); ++t) {
            double s = 0.0;
            for (int o = 0; o < k; ++o) {
              for (int c = 0; c < 9; ++c) s += static_cast<double>(w->value(f, o * 9 + c)) * block(c, t + o);
            }
            best = std::max(best, s);
          }
          const double expected = std::max(0.0, best + b->value(f, 0));
          CHECK(std::abs(got(unit) - expected) < 1e-5);
        }
      }
    }
  }

  TEST_CASE("max over time only moves when the peak crosses a window") {
    DiscreteEncoderConfig config;
    config.kernel_sizes = {3};
    config.filters_per_size = 4;
    Rng rng(11);
    DiscreteEncoder<float> encoder("disc", 9, config, rng);
    RowMatrixF block = RowMatrixF::Zero(9, 24);
    block(2, 10) = 1.0f;
    RowMatrixF shifted = RowMatrixF::Zero(9, 24);
    shifted(2, 11) = 1.0f;
    // An interior event is seen by the same set of window offsets after a
    // one-step shift, so the pooled response is unchanged.
    const auto a = encode_discrete(encoder, block);
    const auto b = encode_discrete(encoder, shifted);
    for (int i = 0; i < a.size(); ++i) CHECK(a(i) == doctest::Approx(b(i)).epsilon(1e-6));
  }

  TEST_CASE("image channel count") {
    CHECK(image_channels(Encoding::MultiChannel, 7) == 7);
    CHECK(image_channels(Encoding::StackedVertical, 7) == 1);
    CHECK(image_channels(Encoding::MultiChannel, 16) == 16);
  }
}
