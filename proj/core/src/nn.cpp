#include "mislstm/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "mislstm/types.hpp"

namespace mislstm::nn {

template <class T>
void he_normal(Parameter<T>& p, int fan_in, Rng& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / std::max(fan_in, 1)));
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<T>(normal(rng));
}

template <class T>
void uniform_fan_in(Parameter<T>& p, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<T>(uniform(rng));
}

template <class T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <class T>
Matrix<T> relu(const Matrix<T>& x) {
  return x.cwiseMax(T(0));
}

template <class T>
Matrix<T> relu_backward(const Matrix<T>& output, const Matrix<T>& dy) {
  return (output.array() > T(0)).select(dy, T(0));
}

namespace {

template <class T>
Matrix<T> sigmoid_of(const Matrix<T>& x) {
  return x.unaryExpr([](T v) { return sigmoid(v); });
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear

template <class T>
Linear<T>::Linear(std::string name, int in, int out, Rng& rng) {
  weight.name = name + ".weight";
  bias.name = name + ".bias";
  weight.resize(out, in);
  bias.resize(out, 1);
  uniform_fan_in(weight, in, rng);
  uniform_fan_in(bias, in, rng);
}

template <class T>
Matrix<T> Linear<T>::forward(const Matrix<T>& x) const {
  if (x.rows() != weight.value.cols()) {
    throw ShapeError(fmt::format("{}: input has {} rows, expected {}", weight.name, x.rows(),
                                 weight.value.cols()));
  }
  Matrix<T> y = weight.value * x;
  y.colwise() += bias.value.col(0);
  return y;
}

template <class T>
Matrix<T> Linear<T>::backward(const Matrix<T>& x, const Matrix<T>& dy) {
  weight.grad.noalias() += dy * x.transpose();
  bias.grad.col(0) += dy.rowwise().sum();
  return weight.value.transpose() * dy;
}

template <class T>
void Linear<T>::collect(ParameterRefs<T>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ---------------------------------------------------------------------------
// Conv2d

template <class T>
Conv2d<T>::Conv2d(std::string name, const Conv2dShape& shape, Rng& rng) : shape_(shape) {
  const int fan_in = shape.in * shape.kernel_h * shape.kernel_w;
  weight.name = name + ".weight";
  bias.name = name + ".bias";
  weight.resize(shape.out, fan_in);
  bias.resize(shape.out, 1);
  he_normal(weight, fan_in, rng);
  uniform_fan_in(bias, fan_in, rng);
}

template <class T>
FeatureMap<T> Conv2d<T>::forward(const FeatureMap<T>& x, Cache& cache) const {
  const auto& s = shape_;
  if (x.channels() != s.in) {
    throw ShapeError(fmt::format("{}: input has {} channels, expected {}", weight.name,
                                 x.channels(), s.in));
  }
  const int oh = s.out_h(x.h);
  const int ow = s.out_w(x.w);
  if (oh <= 0 || ow <= 0) throw ShapeError(fmt::format("{}: input too small", weight.name));
  const Eigen::Index k = static_cast<Eigen::Index>(s.in) * s.kernel_h * s.kernel_w;
  const Eigen::Index positions = static_cast<Eigen::Index>(x.n) * oh * ow;

  cache.in_h = x.h;
  cache.in_w = x.w;
  cache.n = x.n;
  cache.columns.resize(k, positions);
  const T* src = x.data.data();
  const int cin = s.in;
  for (int i = 0; i < x.n; ++i) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        T* dst = cache.columns.data() + (static_cast<Eigen::Index>(i * oh + oy) * ow + ox) * k;
        for (int ky = 0; ky < s.kernel_h; ++ky) {
          const int iy = oy * s.stride_h - s.pad_h + ky;
          for (int kx = 0; kx < s.kernel_w; ++kx) {
            const int ix = ox * s.stride_w - s.pad_w + kx;
            const int tap = ky * s.kernel_w + kx;
            const int taps = s.kernel_h * s.kernel_w;
            if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) {
              for (int c = 0; c < cin; ++c) dst[c * taps + tap] = T(0);
            } else {
              const T* col = src + (static_cast<Eigen::Index>(i * x.h + iy) * x.w + ix) * cin;
              for (int c = 0; c < cin; ++c) dst[c * taps + tap] = col[c];
            }
          }
        }
      }
    }
  }

  FeatureMap<T> y;
  y.n = x.n;
  y.h = oh;
  y.w = ow;
  y.data.noalias() = weight.value * cache.columns;
  y.data.colwise() += bias.value.col(0);
  return y;
}

template <class T>
FeatureMap<T> Conv2d<T>::backward(const Cache& cache, const Matrix<T>& dy, bool need_input_grad) {
  weight.grad.noalias() += dy * cache.columns.transpose();
  bias.grad.col(0) += dy.rowwise().sum();
  FeatureMap<T> dx;
  if (!need_input_grad) return dx;

  const auto& s = shape_;
  const int oh = s.out_h(cache.in_h);
  const int ow = s.out_w(cache.in_w);
  const Eigen::Index k = cache.columns.rows();
  const Matrix<T> dcols = weight.value.transpose() * dy;
  dx.n = cache.n;
  dx.h = cache.in_h;
  dx.w = cache.in_w;
  dx.data = Matrix<T>::Zero(s.in, static_cast<Eigen::Index>(cache.n) * cache.in_h * cache.in_w);
  const int taps = s.kernel_h * s.kernel_w;
  for (int i = 0; i < cache.n; ++i) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const T* g = dcols.data() + (static_cast<Eigen::Index>(i * oh + oy) * ow + ox) * k;
        for (int ky = 0; ky < s.kernel_h; ++ky) {
          const int iy = oy * s.stride_h - s.pad_h + ky;
          if (iy < 0 || iy >= cache.in_h) continue;
          for (int kx = 0; kx < s.kernel_w; ++kx) {
            const int ix = ox * s.stride_w - s.pad_w + kx;
            if (ix < 0 || ix >= cache.in_w) continue;
            const int tap = ky * s.kernel_w + kx;
            T* col = dx.data.data() +
                     (static_cast<Eigen::Index>(i * cache.in_h + iy) * cache.in_w + ix) * s.in;
            for (int c = 0; c < s.in; ++c) col[c] += g[c * taps + tap];
          }
        }
      }
    }
  }
  return dx;
}

template <class T>
void Conv2d<T>::collect(ParameterRefs<T>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ---------------------------------------------------------------------------
// SparseConv2d

template <class T>
SparseConv2d<T>::SparseConv2d(std::string name, const Conv2dShape& shape, Rng& rng)
    : shape_(shape) {
  const int fan_in = shape.in * shape.kernel_h * shape.kernel_w;
  weight.name = name + ".weight";
  bias.name = name + ".bias";
  weight.resize(shape.out, fan_in);
  bias.resize(shape.out, 1);
  he_normal(weight, fan_in, rng);
  uniform_fan_in(bias, fan_in, rng);
}

template <class T>
template <class Visit>
void SparseConv2d<T>::for_each_tap(const SparseInput& image, int image_index, int out_h,
                                   int out_w, Visit&& visit) const {
  const auto& s = shape_;
  const std::uint32_t plane = static_cast<std::uint32_t>(image.height) * image.width;
  const bool binary = image.values.empty();
  for (std::size_t p = 0; p < image.indices.size(); ++p) {
    const std::uint32_t index = image.indices[p];
    const int c = static_cast<int>(index / plane);
    const std::uint32_t rem = index % plane;
    const int y = static_cast<int>(rem / image.width);
    const int x = static_cast<int>(rem % image.width);
    const T value = binary ? T(1) : static_cast<T>(image.values[p]);
    for (int ky = 0; ky < s.kernel_h; ++ky) {
      const int ny = y + s.pad_h - ky;
      if (ny < 0 || ny % s.stride_h != 0) continue;
      const int oy = ny / s.stride_h;
      if (oy >= out_h) continue;
      for (int kx = 0; kx < s.kernel_w; ++kx) {
        const int nx = x + s.pad_w - kx;
        if (nx < 0 || nx % s.stride_w != 0) continue;
        const int ox = nx / s.stride_w;
        if (ox >= out_w) continue;
        const Eigen::Index column = (static_cast<Eigen::Index>(image_index) * out_h + oy) * out_w + ox;
        const Eigen::Index tap = (static_cast<Eigen::Index>(c) * s.kernel_h + ky) * s.kernel_w + kx;
        visit(column, tap, value);
      }
    }
  }
}

template <class T>
FeatureMap<T> SparseConv2d<T>::forward(std::span<const SparseInput> images) const {
  if (images.empty()) throw ShapeError(weight.name + ": no input images");
  const auto& first = images.front();
  for (const auto& image : images) {
    if (image.channels != shape_.in) {
      throw ShapeError(fmt::format("{}: image has {} channels, expected {}", weight.name,
                                   image.channels, shape_.in));
    }
    if (image.height != first.height || image.width != first.width) {
      throw ShapeError(weight.name + ": images in a batch must share a size");
    }
  }
  FeatureMap<T> y;
  y.n = static_cast<int>(images.size());
  y.h = shape_.out_h(first.height);
  y.w = shape_.out_w(first.width);
  if (y.h <= 0 || y.w <= 0) throw ShapeError(weight.name + ": input too small");
  y.data.resize(shape_.out, static_cast<Eigen::Index>(y.n) * y.h * y.w);
  y.data.colwise() = bias.value.col(0);
  for (int i = 0; i < y.n; ++i) {
    for_each_tap(images[i], i, y.h, y.w, [&](Eigen::Index column, Eigen::Index tap, T value) {
      y.data.col(column) += value * weight.value.col(tap);
    });
  }
  return y;
}

template <class T>
void SparseConv2d<T>::backward(std::span<const SparseInput> images, const FeatureMap<T>& dy) {
  bias.grad.col(0) += dy.data.rowwise().sum();
  for (int i = 0; i < static_cast<int>(images.size()); ++i) {
    for_each_tap(images[i], i, dy.h, dy.w, [&](Eigen::Index column, Eigen::Index tap, T value) {
      weight.grad.col(tap) += value * dy.data.col(column);
    });
  }
}

template <class T>
void SparseConv2d<T>::collect(ParameterRefs<T>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ---------------------------------------------------------------------------
// SqueezeExcite

template <class T>
SqueezeExcite<T>::SqueezeExcite(std::string name, int channels, int reduction, Rng& rng)
    : squeeze_(name + ".squeeze", channels, std::max(1, channels / std::max(reduction, 1)), rng),
      excite_(name + ".excite", std::max(1, channels / std::max(reduction, 1)), channels, rng) {}

template <class T>
FeatureMap<T> SqueezeExcite<T>::forward(const FeatureMap<T>& x, Cache& cache) const {
  const int p = x.positions();
  cache.n = x.n;
  cache.positions = p;
  cache.input = x.data;
  cache.pooled.resize(x.channels(), x.n);
  for (int i = 0; i < x.n; ++i) cache.pooled.col(i) = x.data.middleCols(i * p, p).rowwise().mean();
  cache.hidden = relu<T>(squeeze_.forward(cache.pooled));
  cache.gate = sigmoid_of<T>(excite_.forward(cache.hidden));
  FeatureMap<T> y = x;
  for (int i = 0; i < x.n; ++i) {
    y.data.middleCols(i * p, p).array().colwise() *= cache.gate.col(i).array();
  }
  return y;
}

template <class T>
Matrix<T> SqueezeExcite<T>::backward(const Cache& cache, const Matrix<T>& dy) {
  const int p = cache.positions;
  Matrix<T> dx = dy;
  Matrix<T> dgate(cache.gate.rows(), cache.n);
  for (int i = 0; i < cache.n; ++i) {
    dx.middleCols(i * p, p).array().colwise() *= cache.gate.col(i).array();
    dgate.col(i) = (dy.middleCols(i * p, p).array() * cache.input.middleCols(i * p, p).array())
                       .rowwise()
                       .sum()
                       .matrix();
  }
  const Matrix<T> dpre = (dgate.array() * cache.gate.array() * (T(1) - cache.gate.array())).matrix();
  const Matrix<T> dhidden = excite_.backward(cache.hidden, dpre);
  const Matrix<T> dpooled = squeeze_.backward(cache.pooled, relu_backward<T>(cache.hidden, dhidden));
  for (int i = 0; i < cache.n; ++i) {
    dx.middleCols(i * p, p).colwise() += dpooled.col(i) / static_cast<T>(p);
  }
  return dx;
}

template <class T>
void SqueezeExcite<T>::collect(ParameterRefs<T>& out) {
  squeeze_.collect(out);
  excite_.collect(out);
}

// ---------------------------------------------------------------------------
// ResidualBlock

template <class T>
ResidualBlock<T>::ResidualBlock(std::string name, int in, int out, int stride,
                                bool squeeze_excitation, int se_reduction, Rng& rng)
    : conv1_(name + ".conv1", Conv2dShape{in, out, 3, 3, stride, stride, 1, 1}, rng),
      conv2_(name + ".conv2", Conv2dShape{out, out, 3, 3, 1, 1, 1, 1}, rng),
      has_projection_(in != out || stride != 1),
      has_se_(squeeze_excitation) {
  if (has_projection_) {
    projection_ = Conv2d<T>(name + ".projection", Conv2dShape{in, out, 1, 1, stride, stride, 0, 0}, rng);
  }
  if (has_se_) se_ = SqueezeExcite<T>(name + ".se", out, se_reduction, rng);
}

template <class T>
FeatureMap<T> ResidualBlock<T>::forward(const FeatureMap<T>& x, Cache& cache) const {
  cache.in_h = x.h;
  cache.in_w = x.w;
  cache.n = x.n;
  FeatureMap<T> h = conv1_.forward(x, cache.conv1);
  h.data = relu<T>(h.data);
  cache.hidden = h.data;
  FeatureMap<T> y = conv2_.forward(h, cache.conv2);
  if (has_se_) y = se_.forward(y, cache.se);
  if (has_projection_) {
    y.data += projection_.forward(x, cache.shortcut).data;
  } else {
    y.data += x.data;
  }
  y.data = relu<T>(y.data);
  cache.output = y.data;
  return y;
}

template <class T>
Matrix<T> ResidualBlock<T>::backward(const Cache& cache, const Matrix<T>& dy) {
  const Matrix<T> dsum = relu_backward<T>(cache.output, dy);
  Matrix<T> dbranch = has_se_ ? se_.backward(cache.se, dsum) : dsum;
  const FeatureMap<T> dhidden = conv2_.backward(cache.conv2, dbranch);
  const Matrix<T> dpre = relu_backward<T>(cache.hidden, dhidden.data);
  Matrix<T> dx = conv1_.backward(cache.conv1, dpre).data;
  if (has_projection_) {
    dx += projection_.backward(cache.shortcut, dsum).data;
  } else {
    dx += dsum;
  }
  return dx;
}

template <class T>
void ResidualBlock<T>::collect(ParameterRefs<T>& out) {
  conv1_.collect(out);
  conv2_.collect(out);
  if (has_se_) se_.collect(out);
  if (has_projection_) projection_.collect(out);
}

// ---------------------------------------------------------------------------
// Conv1dBank

template <class T>
Conv1dBank<T>::Conv1dBank(std::string name, int channels, std::vector<int> kernel_sizes,
                          int filters, Rng& rng)
    : channels_(channels), filters_(filters), kernels_(std::move(kernel_sizes)) {
  for (int k : kernels_) {
    Parameter<T> w;
    w.name = fmt::format("{}.k{}.weight", name, k);
    w.resize(filters, channels * k);
    he_normal(w, channels * k, rng);
    Parameter<T> b;
    b.name = fmt::format("{}.k{}.bias", name, k);
    b.resize(filters, 1);
    uniform_fan_in(b, channels * k, rng);
    weights.push_back(std::move(w));
    biases.push_back(std::move(b));
  }
}

template <class T>
Vector<T> Conv1dBank<T>::forward(const Matrix<T>& x, Cache& cache) const {
  if (x.rows() != channels_) {
    throw ShapeError(fmt::format("conv1d bank: input has {} rows, expected {}", x.rows(), channels_));
  }
  const int length = static_cast<int>(x.cols());
  cache.input = x;
  cache.argmax.assign(output_size(), 0);
  cache.output.resize(output_size());
  for (std::size_t j = 0; j < kernels_.size(); ++j) {
    const int k = kernels_[j];
    const int windows = length - k + 1;
    if (windows < 1) {
      throw ConfigError(fmt::format("kernel size {} exceeds block length {}", k, length));
    }
    Matrix<T> patches(static_cast<Eigen::Index>(channels_) * k, windows);
    for (int t = 0; t < windows; ++t) {
      patches.col(t) = Eigen::Map<const Vector<T>>(x.data() + static_cast<Eigen::Index>(t) * channels_,
                                                   static_cast<Eigen::Index>(channels_) * k);
    }
    const Matrix<T> response = weights[j].value * patches;
    for (int f = 0; f < filters_; ++f) {
      Eigen::Index best = 0;
      const T peak = response.row(f).maxCoeff(&best);
      const int unit = static_cast<int>(j) * filters_ + f;
      cache.argmax[unit] = static_cast<int>(best);
      cache.output(unit) = std::max(T(0), peak + biases[j].value(f, 0));
    }
  }
  return cache.output;
}

template <class T>
Matrix<T> Conv1dBank<T>::backward(const Cache& cache, const Vector<T>& dy) {
  Matrix<T> dx = Matrix<T>::Zero(cache.input.rows(), cache.input.cols());
  for (std::size_t j = 0; j < kernels_.size(); ++j) {
    const Eigen::Index span = static_cast<Eigen::Index>(channels_) * kernels_[j];
    for (int f = 0; f < filters_; ++f) {
      const int unit = static_cast<int>(j) * filters_ + f;
      if (cache.output(unit) <= T(0)) continue;
      const T g = dy(unit);
      const Eigen::Index offset = static_cast<Eigen::Index>(cache.argmax[unit]) * channels_;
      Eigen::Map<const Vector<T>> patch(cache.input.data() + offset, span);
      weights[j].grad.row(f) += g * patch.transpose();
      biases[j].grad(f, 0) += g;
      Eigen::Map<Vector<T>>(dx.data() + offset, span) += g * weights[j].value.row(f).transpose();
    }
  }
  return dx;
}

template <class T>
void Conv1dBank<T>::collect(ParameterRefs<T>& out) {
  for (std::size_t j = 0; j < kernels_.size(); ++j) {
    out.push_back(&weights[j]);
    out.push_back(&biases[j]);
  }
}

// ---------------------------------------------------------------------------
// Lstm

template <class T>
Lstm<T>::Lstm(std::string name, int input_size, int hidden_size, int layers, Rng& rng)
    : hidden_(hidden_size) {
  if (layers < 1) throw ConfigError("an LSTM needs at least one layer");
  for (int l = 0; l < layers; ++l) {
    Layer layer;
    const int in = l == 0 ? input_size : hidden_size;
    layer.input_weight.name = fmt::format("{}.l{}.input_weight", name, l);
    layer.hidden_weight.name = fmt::format("{}.l{}.hidden_weight", name, l);
    layer.bias.name = fmt::format("{}.l{}.bias", name, l);
    layer.input_weight.resize(4 * hidden_size, in);
    layer.hidden_weight.resize(4 * hidden_size, hidden_size);
    layer.bias.resize(4 * hidden_size, 1);
    uniform_fan_in(layer.input_weight, hidden_size, rng);
    uniform_fan_in(layer.hidden_weight, hidden_size, rng);
    layer.bias.value.block(hidden_size, 0, hidden_size, 1).setOnes();  // forget gate
    layers_.push_back(std::move(layer));
  }
}

template <class T>
Vector<T> Lstm<T>::forward(const Matrix<T>& x, Cache& cache) const {
  const int hsize = hidden_;
  const Eigen::Index steps = x.cols();
  if (steps < 1) throw ShapeError("LSTM input has no steps");
  cache.layers.assign(layers_.size(), {});
  Matrix<T> input = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    if (input.rows() != layer.input_weight.value.cols()) {
      throw ShapeError(fmt::format("LSTM layer {} input has {} rows, expected {}", l, input.rows(),
                                   layer.input_weight.value.cols()));
    }
    LayerCache& lc = cache.layers[l];
    Matrix<T> pre = layer.input_weight.value * input;
    pre.colwise() += layer.bias.value.col(0);
    lc.gates.resize(4 * hsize, steps);
    lc.cell.resize(hsize, steps);
    lc.hidden.resize(hsize, steps);
    Vector<T> h = Vector<T>::Zero(hsize);
    Vector<T> c = Vector<T>::Zero(hsize);
    for (Eigen::Index t = 0; t < steps; ++t) {
      Vector<T> z = pre.col(t) + layer.hidden_weight.value * h;
      for (int u = 0; u < hsize; ++u) {
        const T i = sigmoid(z(u));
        const T f = sigmoid(z(hsize + u));
        const T g = std::tanh(z(2 * hsize + u));
        const T o = sigmoid(z(3 * hsize + u));
        z(u) = i;
        z(hsize + u) = f;
        z(2 * hsize + u) = g;
        z(3 * hsize + u) = o;
        c(u) = f * c(u) + i * g;
        h(u) = o * std::tanh(c(u));
      }
      lc.gates.col(t) = z;
      lc.cell.col(t) = c;
      lc.hidden.col(t) = h;
    }
    lc.input = std::move(input);
    input = lc.hidden;
  }
  return cache.layers.back().hidden.col(steps - 1);
}

template <class T>
Matrix<T> Lstm<T>::backward(const Cache& cache, const Vector<T>& dh_final) {
  const int hsize = hidden_;
  const Eigen::Index steps = cache.layers.front().hidden.cols();
  // Gradient arriving at each step's hidden output from the layer above.
  Matrix<T> upstream = Matrix<T>::Zero(hsize, steps);
  upstream.col(steps - 1) = dh_final;
  Matrix<T> dinput;
  for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
    Layer& layer = layers_[l];
    const LayerCache& lc = cache.layers[l];
    Matrix<T> dz(4 * hsize, steps);
    Vector<T> dh_next = Vector<T>::Zero(hsize);
    Vector<T> dc_next = Vector<T>::Zero(hsize);
    for (Eigen::Index t = steps - 1; t >= 0; --t) {
      const Vector<T> dh = upstream.col(t) + dh_next;
      for (int u = 0; u < hsize; ++u) {
        const T i = lc.gates(u, t);
        const T f = lc.gates(hsize + u, t);
        const T g = lc.gates(2 * hsize + u, t);
        const T o = lc.gates(3 * hsize + u, t);
        const T c = lc.cell(u, t);
        const T c_prev = t > 0 ? lc.cell(u, t - 1) : T(0);
        const T tc = std::tanh(c);
        const T dc = dc_next(u) + dh(u) * o * (T(1) - tc * tc);
        dz(u, t) = dc * g * i * (T(1) - i);
        dz(hsize + u, t) = dc * c_prev * f * (T(1) - f);
        dz(2 * hsize + u, t) = dc * i * (T(1) - g * g);
        dz(3 * hsize + u, t) = dh(u) * tc * o * (T(1) - o);
        dc_next(u) = dc * f;
      }
      dh_next = layer.hidden_weight.value.transpose() * dz.col(t);
      if (t > 0) layer.hidden_weight.grad.noalias() += dz.col(t) * lc.hidden.col(t - 1).transpose();
    }
    layer.input_weight.grad.noalias() += dz * lc.input.transpose();
    layer.bias.grad.col(0) += dz.rowwise().sum();
    dinput = layer.input_weight.value.transpose() * dz;
    if (l > 0) upstream = dinput;
  }
  return dinput;
}

template <class T>
void Lstm<T>::collect(ParameterRefs<T>& out) {
  for (auto& layer : layers_) {
    out.push_back(&layer.input_weight);
    out.push_back(&layer.hidden_weight);
    out.push_back(&layer.bias);
  }
}

// ---------------------------------------------------------------------------
// Cbam

template <class T>
Cbam<T>::Cbam(std::string name, int channels, int reduction, int kernel_h, int kernel_w, Rng& rng)
    : reduce_(name + ".reduce", channels, std::max(1, channels / std::max(reduction, 1)), rng),
      expand_(name + ".expand", std::max(1, channels / std::max(reduction, 1)), channels, rng),
      spatial_(name + ".spatial",
               Conv2dShape{2, 1, kernel_h, kernel_w, 1, 1, kernel_h / 2, kernel_w / 2}, rng) {
  if (kernel_h % 2 == 0 || kernel_w % 2 == 0) throw ConfigError("CBAM kernel sizes must be odd");
}

template <class T>
FeatureMap<T> Cbam<T>::forward(const FeatureMap<T>& x, Cache& cache) const {
  const int channels = x.channels();
  const int p = x.positions();
  cache.input = x;
  cache.avg.resize(channels, x.n);
  cache.max.resize(channels, x.n);
  cache.max_index.assign(static_cast<std::size_t>(channels) * x.n, 0);
  for (int i = 0; i < x.n; ++i) {
    const auto block = x.data.middleCols(i * p, p);
    cache.avg.col(i) = block.rowwise().mean();
    for (int c = 0; c < channels; ++c) {
      Eigen::Index best = 0;
      cache.max(c, i) = block.row(c).maxCoeff(&best);
      cache.max_index[static_cast<std::size_t>(i) * channels + c] = i * p + static_cast<int>(best);
    }
  }
  cache.hidden_avg = relu<T>(reduce_.forward(cache.avg));
  cache.hidden_max = relu<T>(reduce_.forward(cache.max));
  cache.channel_gate =
      sigmoid_of<T>(Matrix<T>(expand_.forward(cache.hidden_avg) + expand_.forward(cache.hidden_max)));

  cache.refined = x.data;
  for (int i = 0; i < x.n; ++i) {
    cache.refined.middleCols(i * p, p).array().colwise() *= cache.channel_gate.col(i).array();
  }

  cache.pooled.n = x.n;
  cache.pooled.h = x.h;
  cache.pooled.w = x.w;
  cache.pooled.data.resize(2, cache.refined.cols());
  cache.spatial_max_index.assign(cache.refined.cols(), 0);
  for (Eigen::Index col = 0; col < cache.refined.cols(); ++col) {
    Eigen::Index best = 0;
    cache.pooled.data(0, col) = cache.refined.col(col).mean();
    cache.pooled.data(1, col) = cache.refined.col(col).maxCoeff(&best);
    cache.spatial_max_index[col] = static_cast<int>(best);
  }
  const FeatureMap<T> logits = spatial_.forward(cache.pooled, cache.spatial_conv);
  cache.spatial_gate = sigmoid_of<T>(logits.data);

  FeatureMap<T> y;
  y.n = x.n;
  y.h = x.h;
  y.w = x.w;
  y.data = cache.refined;
  y.data.array().rowwise() *= cache.spatial_gate.row(0).array();
  return y;
}

template <class T>
Matrix<T> Cbam<T>::backward(const Cache& cache, const Matrix<T>& dy) {
  const int channels = static_cast<int>(cache.refined.rows());
  const int p = cache.input.positions();
  const int n = cache.input.n;

  Matrix<T> drefined = dy;
  drefined.array().rowwise() *= cache.spatial_gate.row(0).array();
  const Matrix<T> dgate = (dy.array() * cache.refined.array()).colwise().sum().matrix();
  const Matrix<T> dlogits =
      (dgate.array() * cache.spatial_gate.array() * (T(1) - cache.spatial_gate.array())).matrix();
  const FeatureMap<T> dpooled = spatial_.backward(cache.spatial_conv, dlogits);
  for (Eigen::Index col = 0; col < drefined.cols(); ++col) {
    drefined.col(col).array() += dpooled.data(0, col) / static_cast<T>(channels);
    drefined(cache.spatial_max_index[col], col) += dpooled.data(1, col);
  }

  Matrix<T> dx = drefined;
  Matrix<T> dchannel(channels, n);
  for (int i = 0; i < n; ++i) {
    dx.middleCols(i * p, p).array().colwise() *= cache.channel_gate.col(i).array();
    dchannel.col(i) = (drefined.middleCols(i * p, p).array() *
                       cache.input.data.middleCols(i * p, p).array())
                          .rowwise()
                          .sum()
                          .matrix();
  }
  const Matrix<T> dz = (dchannel.array() * cache.channel_gate.array() *
                        (T(1) - cache.channel_gate.array()))
                           .matrix();
  const Matrix<T> dhidden_avg = expand_.backward(cache.hidden_avg, dz);
  const Matrix<T> dhidden_max = expand_.backward(cache.hidden_max, dz);
  const Matrix<T> davg = reduce_.backward(cache.avg, relu_backward<T>(cache.hidden_avg, dhidden_avg));
  const Matrix<T> dmax = reduce_.backward(cache.max, relu_backward<T>(cache.hidden_max, dhidden_max));
  for (int i = 0; i < n; ++i) {
    dx.middleCols(i * p, p).colwise() += davg.col(i) / static_cast<T>(p);
    for (int c = 0; c < channels; ++c) {
      dx(c, cache.max_index[static_cast<std::size_t>(i) * channels + c]) += dmax(c, i);
    }
  }
  return dx;
}

template <class T>
void Cbam<T>::collect(ParameterRefs<T>& out) {
  reduce_.collect(out);
  expand_.collect(out);
  spatial_.collect(out);
}

// ---------------------------------------------------------------------------
// Embedding

template <class T>
Embedding<T>::Embedding(std::string name, int count, int dim, Rng& rng) {
  table.name = name + ".table";
  table.resize(count, dim);
  std::normal_distribution<double> normal(0.0, 0.1);
  for (Eigen::Index i = 0; i < table.value.size(); ++i) table.value.data()[i] = static_cast<T>(normal(rng));
}

template <class T>
Vector<T> Embedding<T>::forward(int index) const {
  if (index < 0) return Vector<T>::Zero(dim());
  if (index >= count()) throw Error(fmt::format("embedding index {} out of range", index));
  return table.value.row(index).transpose();
}

template <class T>
void Embedding<T>::backward(int index, const Vector<T>& dy) {
  if (index < 0) return;
  table.grad.row(index) += dy.transpose();
}

template <class T>
void Embedding<T>::collect(ParameterRefs<T>& out) {
  out.push_back(&table);
}

template <class T>
Vector<T> dropout_mask(Eigen::Index size, double p, Rng* rng) {
  Vector<T> mask = Vector<T>::Ones(size);
  if (rng == nullptr || p <= 0.0) return mask;
  std::bernoulli_distribution keep(1.0 - p);
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < size; ++i) mask(i) = keep(*rng) ? scale : T(0);
  return mask;
}

// ---------------------------------------------------------------------------
// AdamW

template <class T>
AdamW<T>::AdamW(ParameterRefs<T> parameters, AdamWConfig config)
    : params_(std::move(parameters)), config_(config) {
  for (const auto* p : params_) {
    m_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
  }
}

template <class T>
void AdamW<T>::step(T scale) {
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  const T b1 = static_cast<T>(config_.beta1);
  const T b2 = static_cast<T>(config_.beta2);
  const T eps = static_cast<T>(config_.epsilon);
  const T decay = static_cast<T>(1.0 - config_.learning_rate * config_.weight_decay);
  const T step_size = static_cast<T>(config_.learning_rate / c1);
  const T root_c2 = static_cast<T>(std::sqrt(c2));
  for (std::size_t j = 0; j < params_.size(); ++j) {
    auto& p = *params_[j];
    const auto g = (p.grad.array() * scale).eval();
    m_[j].array() = b1 * m_[j].array() + (T(1) - b1) * g;
    v_[j].array() = b2 * v_[j].array() + (T(1) - b2) * g * g;
    p.value.array() *= decay;
    p.value.array() -= step_size * m_[j].array() / (v_[j].array().sqrt() / root_c2 + eps);
  }
}

template <class T>
void AdamW<T>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

// ---------------------------------------------------------------------------

#define MISLSTM_INSTANTIATE_NN(T)                                             \
  template void he_normal<T>(Parameter<T>&, int, Rng&);                      \
  template void uniform_fan_in<T>(Parameter<T>&, int, Rng&);                 \
  template T sigmoid<T>(T);                                                  \
  template Matrix<T> relu<T>(const Matrix<T>&);                              \
  template Matrix<T> relu_backward<T>(const Matrix<T>&, const Matrix<T>&);   \
  template Vector<T> dropout_mask<T>(Eigen::Index, double, Rng*);            \
  template class Linear<T>;                                                  \
  template class Conv2d<T>;                                                  \
  template class SparseConv2d<T>;                                            \
  template class SqueezeExcite<T>;                                           \
  template class ResidualBlock<T>;                                           \
  template class Conv1dBank<T>;                                              \
  template class Lstm<T>;                                                    \
  template class Cbam<T>;                                                    \
  template class Embedding<T>;                                               \
  template class AdamW<T>;

MISLSTM_INSTANTIATE_NN(float)
MISLSTM_INSTANTIATE_NN(double)

#undef MISLSTM_INSTANTIATE_NN

}  // namespace mislstm::nn
