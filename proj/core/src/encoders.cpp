#include "mislstm/encoders.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace mislstm {

ContinuousEncoderConfig ContinuousEncoderConfig::desk() {
  ContinuousEncoderConfig c;
  c.stem_kernel = 8;
  c.stem_stride = 8;
  c.stem_width = 16;
  c.stages = {{32, 2}, {64, 2}};
  c.se_reduction = 8;
  c.embed_dim = 64;
  return c;
}

void ContinuousEncoderConfig::validate() const {
  if (input_channels < 1) throw ConfigError("encoder needs at least one input channel");
  if (stem_kernel < 1 || stem_stride < 1 || stem_width < 1) throw ConfigError("invalid stem");
  for (const auto& stage : stages) {
    if (stage.width < 1 || stage.stride < 1) throw ConfigError("invalid encoder stage");
  }
  if (embed_dim < 8) throw ConfigError(fmt::format("embed_dim {} is below 8", embed_dim));
}

void DiscreteEncoderConfig::validate(int block_length) const {
  if (kernel_sizes.empty() || filters_per_size < 1) throw ConfigError("empty discrete encoder");
  for (int k : kernel_sizes) {
    if (k < 1) throw ConfigError("kernel sizes must be positive");
    if (k > block_length) {
      throw ConfigError(fmt::format("kernel size {} exceeds block length {}", k, block_length));
    }
  }
}

int image_channels(Encoding encoding, int rasters) {
  return encoding == Encoding::MultiChannel ? rasters : 1;
}

nn::SparseInput as_input(const SparseImage& image) {
  return {image.channels, image.height, image.width, image.lit, {}};
}

// ---------------------------------------------------------------------------

template <class T>
ContinuousEncoder<T>::ContinuousEncoder(std::string name, const ContinuousEncoderConfig& config,
                                        Rng& rng)
    : config_(config) {
  config.validate();
  const int k = config.stem_kernel;
  const int pad = (k - config.stem_stride) / 2 > 0 ? (k - config.stem_stride) / 2 : 0;
  stem_ = nn::SparseConv2d<T>(
      name + ".stem",
      nn::Conv2dShape{config.input_channels, config.stem_width, k, k, config.stem_stride,
                      config.stem_stride, pad, pad},
      rng);
  int width = config.stem_width;
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const auto& stage = config.stages[s];
    blocks_.emplace_back(fmt::format("{}.stage{}", name, s), width, stage.width, stage.stride,
                         config.use_squeeze_excitation, config.se_reduction, rng);
    width = stage.width;
  }
  projection_ = nn::Linear<T>(name + ".projection", width, config.embed_dim, rng);
}

template <class T>
int ContinuousEncoder<T>::map_channels() const {
  return config_.stages.empty() ? config_.stem_width : config_.stages.back().width;
}

template <class T>
nn::FeatureMap<T> ContinuousEncoder<T>::features(std::span<const nn::SparseInput> images,
                                                  Cache& cache) const {
  for (const auto& image : images) {
    if (image.channels != config_.input_channels) {
      throw ShapeError(fmt::format("image has {} channels, encoder expects {}", image.channels,
                                   config_.input_channels));
    }
  }
  cache.images.assign(images.begin(), images.end());
  nn::FeatureMap<T> x = stem_.forward(images);
  x.data = nn::relu<T>(x.data);
  cache.stem = x;
  cache.blocks.resize(blocks_.size());
  for (std::size_t b = 0; b < blocks_.size(); ++b) x = blocks_[b].forward(x, cache.blocks[b]);
  return x;
}

template <class T>
nn::Matrix<T> ContinuousEncoder<T>::embed(const nn::FeatureMap<T>& map, PoolCache& cache) const {
  const int p = map.positions();
  cache.positions = p;
  cache.pooled.resize(map.channels(), map.n);
  for (int i = 0; i < map.n; ++i) cache.pooled.col(i) = map.data.middleCols(i * p, p).rowwise().mean();
  return projection_.forward(cache.pooled);
}

template <class T>
nn::Matrix<T> ContinuousEncoder<T>::embed_backward(const PoolCache& cache,
                                                   const nn::Matrix<T>& dembedding) {
  const nn::Matrix<T> dpooled = projection_.backward(cache.pooled, dembedding);
  const int p = cache.positions;
  nn::Matrix<T> dmap(dpooled.rows(), dpooled.cols() * p);
  for (Eigen::Index i = 0; i < dpooled.cols(); ++i) {
    dmap.middleCols(i * p, p).colwise() = dpooled.col(i) / static_cast<T>(p);
  }
  return dmap;
}

template <class T>
void ContinuousEncoder<T>::features_backward(const Cache& cache, nn::Matrix<T> dmap) {
  for (int b = static_cast<int>(blocks_.size()) - 1; b >= 0; --b) {
    dmap = blocks_[b].backward(cache.blocks[b], dmap);
  }
  nn::FeatureMap<T> dstem = cache.stem;
  dstem.data = nn::relu_backward<T>(cache.stem.data, dmap);
  stem_.backward(cache.images, dstem);
}

template <class T>
void ContinuousEncoder<T>::collect(nn::ParameterRefs<T>& out) {
  stem_.collect(out);
  for (auto& block : blocks_) block.collect(out);
  projection_.collect(out);
}

// ---------------------------------------------------------------------------

template <class T>
DiscreteEncoder<T>::DiscreteEncoder(std::string name, int rows, const DiscreteEncoderConfig& config,
                                    Rng& rng)
    : config_(config), bank_(std::move(name), rows, config.kernel_sizes, config.filters_per_size, rng) {}

template <class T>
nn::Vector<T> DiscreteEncoder<T>::forward(const RowMatrixF& block, Cache& cache) const {
  config_.validate(static_cast<int>(block.cols()));
  return bank_.forward(block.cast<T>(), cache);
}

template <class T>
void DiscreteEncoder<T>::backward(const Cache& cache, const nn::Vector<T>& dy) {
  bank_.backward(cache, dy);
}

template <class T>
void DiscreteEncoder<T>::collect(nn::ParameterRefs<T>& out) {
  bank_.collect(out);
}

template class ContinuousEncoder<float>;
template class ContinuousEncoder<double>;
template class DiscreteEncoder<float>;
template class DiscreteEncoder<double>;

// ---------------------------------------------------------------------------

ContinuousEncoding encode_continuous(const ContinuousEncoder<float>& encoder, const BlockImage& image) {
  std::vector<std::uint32_t> indices;
  std::vector<float> values;
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    if (image.pixels[i] != 0.0f) {
      indices.push_back(static_cast<std::uint32_t>(i));
      values.push_back(image.pixels[i]);
    }
  }
  const nn::SparseInput input{image.channels, image.height, image.width, indices, values};
  ContinuousEncoder<float>::Cache cache;
  ContinuousEncoder<float>::PoolCache pool;
  ContinuousEncoding out;
  out.feature_map = encoder.features(std::span(&input, 1), cache);
  out.embedding = encoder.embed(out.feature_map, pool).col(0);
  return out;
}

nn::Vector<float> encode_discrete(const DiscreteEncoder<float>& encoder, const RowMatrixF& block) {
  DiscreteEncoder<float>::Cache cache;
  return encoder.forward(block, cache);
}

}  // namespace mislstm
