#pragma once

// Block encoders: a small residual (squeeze-excitation) CNN for block images
// and a multi-kernel 1-D CNN for discrete blocks.

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mislstm/imaging.hpp"
#include "mislstm/nn.hpp"

namespace mislstm {

struct EncoderStage {
  int width = 32;
  int stride = 1;
};

struct ContinuousEncoderConfig {
  int input_channels = kContinuousChannels;
  // Stem: one strided convolution applied straight to the sparse image.
  int stem_kernel = 4;
  int stem_stride = 4;
  int stem_width = 32;
  std::vector<EncoderStage> stages{{32, 1}, {64, 2}, {128, 2}, {256, 2}};
  bool use_squeeze_excitation = true;
  int se_reduction = 8;
  int embed_dim = 256;

  static ContinuousEncoderConfig defaults() { return {}; }
  /// Smaller encoder used for the CPU benchmarks and acceptance runs.
  static ContinuousEncoderConfig desk();

  /// Throws ConfigError.
  void validate() const;
};

struct DiscreteEncoderConfig {
  std::vector<int> kernel_sizes{3, 4, 5, 6};
  int filters_per_size = 16;

  int output_size() const { return static_cast<int>(kernel_sizes.size()) * filters_per_size; }
  /// Throws ConfigError when a kernel is longer than the block.
  void validate(int block_length) const;
};

/// Input channels implied by the image layout.
int image_channels(Encoding encoding, int rasters);

/// Views a sparse image as a layer input (all lit pixels equal 1).
nn::SparseInput as_input(const SparseImage& image);

template <class T>
class ContinuousEncoder {
public:
  struct Cache {
    std::vector<nn::SparseInput> images;
    nn::FeatureMap<T> stem;  // post-ReLU
    std::vector<typename nn::ResidualBlock<T>::Cache> blocks;
  };
  struct PoolCache {
    nn::Matrix<T> pooled;  // C' x n
    int positions = 0;
  };

  ContinuousEncoder() = default;
  ContinuousEncoder(std::string name, const ContinuousEncoderConfig& config, Rng& rng);

  const ContinuousEncoderConfig& config() const { return config_; }
  int map_channels() const;

  /// Pre-pool feature map for a batch of images.
  nn::FeatureMap<T> features(std::span<const nn::SparseInput> images, Cache& cache) const;
  /// Global average pooling and linear projection: E_c x n.
  nn::Matrix<T> embed(const nn::FeatureMap<T>& map, PoolCache& cache) const;

  nn::Matrix<T> embed_backward(const PoolCache& cache, const nn::Matrix<T>& dembedding);
  void features_backward(const Cache& cache, nn::Matrix<T> dmap);

  void collect(nn::ParameterRefs<T>& out);

private:
  ContinuousEncoderConfig config_;
  nn::SparseConv2d<T> stem_;
  std::vector<nn::ResidualBlock<T>> blocks_;
  nn::Linear<T> projection_;
};

template <class T>
class DiscreteEncoder {
public:
  using Cache = typename nn::Conv1dBank<T>::Cache;

  DiscreteEncoder() = default;
  DiscreteEncoder(std::string name, int rows, const DiscreteEncoderConfig& config, Rng& rng);

  int output_size() const { return bank_.output_size(); }
  /// block: rows x length.
  nn::Vector<T> forward(const RowMatrixF& block, Cache& cache) const;
  void backward(const Cache& cache, const nn::Vector<T>& dy);
  void collect(nn::ParameterRefs<T>& out);

private:
  DiscreteEncoderConfig config_;
  nn::Conv1dBank<T> bank_;
};

struct ContinuousEncoding {
  nn::Vector<float> embedding;
  nn::FeatureMap<float> feature_map;
};

/// Encodes one block image. Throws ShapeError on a channel mismatch.
ContinuousEncoding encode_continuous(const ContinuousEncoder<float>& encoder, const BlockImage& image);
nn::Vector<float> encode_discrete(const DiscreteEncoder<float>& encoder, const RowMatrixF& block);

}  // namespace mislstm
