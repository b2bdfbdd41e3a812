#pragma once

// Minimal layer library with explicit forward caches and backward passes.
//
// Every layer is a value type owning its Parameters. forward() is const and
// returns whatever the matching backward() needs, so several forward passes
// may run against shared parameters. backward() accumulates into
// Parameter::grad and returns the gradient with respect to its input.
//
// Layers are templated on the scalar type; training uses float and the
// gradient check instantiates double.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mislstm/random.hpp"

namespace mislstm::nn {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <class T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;

  void resize(Eigen::Index rows, Eigen::Index cols) {
    value = Matrix<T>::Zero(rows, cols);
    grad = Matrix<T>::Zero(rows, cols);
  }
  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

template <class T>
using ParameterRefs = std::vector<Parameter<T>*>;

/// Samples N(0, 2 / fan_in).
template <class T>
void he_normal(Parameter<T>& p, int fan_in, Rng& rng);
/// Samples U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <class T>
void uniform_fan_in(Parameter<T>& p, int fan_in, Rng& rng);

template <class T>
T sigmoid(T x);

/// A batch of n feature maps of h x w positions: channels x (n*h*w), column
/// index (image * h + y) * w + x.
template <class T>
struct FeatureMap {
  int n = 0;
  int h = 0;
  int w = 0;
  Matrix<T> data;

  int channels() const { return static_cast<int>(data.rows()); }
  int positions() const { return h * w; }
};

/// Binary or real-valued sparse input image: flat indices (c * H + y) * W + x.
/// Empty `values` means every listed pixel equals 1.
struct SparseInput {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::span<const std::uint32_t> indices;
  std::span<const float> values;
};

// ---------------------------------------------------------------------------

template <class T>
class Linear {
public:
  Linear() = default;
  Linear(std::string name, int in, int out, Rng& rng);

  int in() const { return static_cast<int>(weight.value.cols()); }
  int out() const { return static_cast<int>(weight.value.rows()); }

  /// x: in x batch.
  Matrix<T> forward(const Matrix<T>& x) const;
  Matrix<T> backward(const Matrix<T>& x, const Matrix<T>& dy);

  void collect(ParameterRefs<T>& out);

  Parameter<T> weight;
  Parameter<T> bias;
};

struct Conv2dShape {
  int in = 1;
  int out = 1;
  int kernel_h = 3;
  int kernel_w = 3;
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 1;
  int pad_w = 1;

  int out_h(int h) const { return (h + 2 * pad_h - kernel_h) / stride_h + 1; }
  int out_w(int w) const { return (w + 2 * pad_w - kernel_w) / stride_w + 1; }
};

template <class T>
class Conv2d {
public:
  struct Cache {
    Matrix<T> columns;  // (in * kh * kw) x (n * out_h * out_w)
    int in_h = 0;
    int in_w = 0;
    int n = 0;
  };

  Conv2d() = default;
  Conv2d(std::string name, const Conv2dShape& shape, Rng& rng);

  const Conv2dShape& shape() const { return shape_; }
  FeatureMap<T> forward(const FeatureMap<T>& x, Cache& cache) const;
  /// Returns dL/dx when `need_input_grad`, otherwise an empty map.
  FeatureMap<T> backward(const Cache& cache, const Matrix<T>& dy, bool need_input_grad = true);

  void collect(ParameterRefs<T>& out);

  Parameter<T> weight;  // out x (in * kh * kw)
  Parameter<T> bias;    // out x 1

private:
  Conv2dShape shape_;
};

/// First convolution of an image encoder, evaluated directly from sparse
/// pixels. Produces no input gradient.
template <class T>
class SparseConv2d {
public:
  SparseConv2d() = default;
  SparseConv2d(std::string name, const Conv2dShape& shape, Rng& rng);

  const Conv2dShape& shape() const { return shape_; }
  FeatureMap<T> forward(std::span<const SparseInput> images) const;
  void backward(std::span<const SparseInput> images, const FeatureMap<T>& dy);

  void collect(ParameterRefs<T>& out);

  Parameter<T> weight;  // out x (in * kh * kw)
  Parameter<T> bias;

private:
  template <class Visit>
  void for_each_tap(const SparseInput& image, int image_index, int out_h, int out_w,
                    Visit&& visit) const;

  Conv2dShape shape_;
};

template <class T>
struct ReluCache {
  Matrix<T> output;
};

template <class T>
Matrix<T> relu(const Matrix<T>& x);
/// Gradient through a ReLU given its output.
template <class T>
Matrix<T> relu_backward(const Matrix<T>& output, const Matrix<T>& dy);

/// Channel gating from globally pooled descriptors.
template <class T>
class SqueezeExcite {
public:
  struct Cache {
    Matrix<T> input;
    Matrix<T> pooled;  // C x n
    Matrix<T> hidden;  // r x n (post-ReLU)
    Matrix<T> gate;    // C x n
    int n = 0, positions = 0;
  };

  SqueezeExcite() = default;
  SqueezeExcite(std::string name, int channels, int reduction, Rng& rng);

  FeatureMap<T> forward(const FeatureMap<T>& x, Cache& cache) const;
  Matrix<T> backward(const Cache& cache, const Matrix<T>& dy);
  void collect(ParameterRefs<T>& out);

private:
  Linear<T> squeeze_;
  Linear<T> excite_;
};

/// conv3x3(stride) -> ReLU -> conv3x3 -> [SE] -> + shortcut -> ReLU.
template <class T>
class ResidualBlock {
public:
  struct Cache {
    typename Conv2d<T>::Cache conv1, conv2, shortcut;
    Matrix<T> hidden;  // post-ReLU conv1 output
    typename SqueezeExcite<T>::Cache se;
    Matrix<T> output;  // post-ReLU block output
    int in_h = 0, in_w = 0, n = 0;
  };

  ResidualBlock() = default;
  ResidualBlock(std::string name, int in, int out, int stride, bool squeeze_excitation,
                int se_reduction, Rng& rng);

  FeatureMap<T> forward(const FeatureMap<T>& x, Cache& cache) const;
  Matrix<T> backward(const Cache& cache, const Matrix<T>& dy);
  void collect(ParameterRefs<T>& out);

private:
  Conv2d<T> conv1_;
  Conv2d<T> conv2_;
  bool has_projection_ = false;
  Conv2d<T> projection_;
  bool has_se_ = false;
  SqueezeExcite<T> se_;
};

/// Multi-kernel 1-D convolution along time with max-over-time pooling.
/// Input rows are feature channels, columns are time steps; each filter spans
/// all rows. Output: ReLU(max_t conv + bias), concatenated over kernel sizes.
template <class T>
class Conv1dBank {
public:
  struct Cache {
    Matrix<T> input;
    std::vector<int> argmax;  // per output unit, window start of the maximum
    Vector<T> output;
  };

  Conv1dBank() = default;
  Conv1dBank(std::string name, int channels, std::vector<int> kernel_sizes, int filters,
             Rng& rng);

  int output_size() const { return static_cast<int>(kernels_.size()) * filters_; }
  int channels() const { return channels_; }
  const std::vector<int>& kernel_sizes() const { return kernels_; }

  /// x: channels x length.
  Vector<T> forward(const Matrix<T>& x, Cache& cache) const;
  Matrix<T> backward(const Cache& cache, const Vector<T>& dy);
  void collect(ParameterRefs<T>& out);

  std::vector<Parameter<T>> weights;  // per kernel: filters x (channels * k)
  std::vector<Parameter<T>> biases;

private:
  int channels_ = 0;
  int filters_ = 0;
  std::vector<int> kernels_;
};

/// Stacked LSTM over the columns of its input; gate order i, f, g, o.
template <class T>
class Lstm {
public:
  struct LayerCache {
    Matrix<T> input;  // in x steps
    Matrix<T> gates;  // 4H x steps, post-activation
    Matrix<T> cell;   // H x steps
    Matrix<T> hidden; // H x steps
  };
  struct Cache {
    std::vector<LayerCache> layers;
  };

  Lstm() = default;
  Lstm(std::string name, int input_size, int hidden_size, int layers, Rng& rng);

  int hidden_size() const { return hidden_; }
  /// Returns the last layer's hidden state at the final step.
  Vector<T> forward(const Matrix<T>& x, Cache& cache) const;
  /// dh: gradient w.r.t. the final hidden state. Returns dL/dx.
  Matrix<T> backward(const Cache& cache, const Vector<T>& dh);
  void collect(ParameterRefs<T>& out);

private:
  struct Layer {
    Parameter<T> input_weight;   // 4H x in
    Parameter<T> hidden_weight;  // 4H x H
    Parameter<T> bias;           // 4H
  };
  int hidden_ = 0;
  std::vector<Layer> layers_;
};

/// Channel attention (shared bottleneck over average- and max-pooled
/// descriptors) followed by spatial attention (convolution over the
/// channel-wise average and max maps). Gates are sigmoids.
template <class T>
class Cbam {
public:
  struct Cache {
    FeatureMap<T> input;
    Matrix<T> avg, max;                   // C x n
    std::vector<int> max_index;           // argmax column per (channel, image)
    Matrix<T> hidden_avg, hidden_max;     // r x n (post-ReLU)
    Matrix<T> channel_gate;               // C x n
    Matrix<T> refined;                    // after channel gating
    FeatureMap<T> pooled;                 // 2 x positions
    std::vector<int> spatial_max_index;   // per position
    typename Conv2d<T>::Cache spatial_conv;
    Matrix<T> spatial_gate;               // 1 x positions
  };

  Cbam() = default;
  /// kernel_h x kernel_w spatial kernel with "same" padding.
  Cbam(std::string name, int channels, int reduction, int kernel_h, int kernel_w, Rng& rng);

  FeatureMap<T> forward(const FeatureMap<T>& x, Cache& cache) const;
  Matrix<T> backward(const Cache& cache, const Matrix<T>& dy);
  void collect(ParameterRefs<T>& out);

private:
  Linear<T> reduce_;
  Linear<T> expand_;
  Conv2d<T> spatial_;
};

template <class T>
class Embedding {
public:
  Embedding() = default;
  Embedding(std::string name, int count, int dim, Rng& rng);

  int dim() const { return static_cast<int>(table.value.cols()); }
  int count() const { return static_cast<int>(table.value.rows()); }
  /// Negative index yields the zero vector.
  Vector<T> forward(int index) const;
  void backward(int index, const Vector<T>& dy);
  void collect(ParameterRefs<T>& out);

  Parameter<T> table;  // count x dim
};

/// Inverted dropout mask; all ones when p == 0 or no rng is given.
template <class T>
Vector<T> dropout_mask(Eigen::Index size, double p, Rng* rng);

// ---------------------------------------------------------------------------

struct AdamWConfig {
  double learning_rate = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-2;
};

/// Adam with decoupled weight decay.
template <class T>
class AdamW {
public:
  AdamW(ParameterRefs<T> parameters, AdamWConfig config);

  /// Applies one update using the accumulated gradients scaled by `scale`.
  void step(T scale = T(1));
  void zero_grad();
  long steps() const { return step_; }

private:
  ParameterRefs<T> params_;
  AdamWConfig config_;
  std::vector<Matrix<T>> m_, v_;
  long step_ = 0;
};

std::size_t parameter_count(const auto& refs) {
  std::size_t n = 0;
  for (const auto* p : refs) n += static_cast<std::size_t>(p->size());
  return n;
}

}  // namespace mislstm::nn
