#include <fmt/format.h>

#include "model_parts.hpp"

namespace mislstm::detail {

namespace {

/// Shared shape check for the 16 x 144 day sequence.
const RowMatrixF& day_sequence(const DayInput& input) {
  if (input.sequences.size() != 1) {
    throw ShapeError(fmt::format("baseline expects one day sequence, got {}", input.sequences.size()));
  }
  return input.sequences.front();
}

template <class T>
class LstmBaseline final : public DayModel<T> {
public:
  using typename DayModel<T>::Trace;
  using typename DayModel<T>::Output;

  LstmBaseline(const ModelConfig& config, Rng& rng)
      : lstm_("lstm", kContinuousChannels + kDiscreteFeatures, config.lstm_hidden, config.lstm_layers, rng),
        heads_(config.lstm_hidden, config, rng) {}

  ModelKind kind() const override { return ModelKind::LstmBaseline; }

  Output forward(const DayInput& input, Rng* dropout_rng) const override {
    auto trace = std::make_unique<LstmTrace>();
    const nn::Vector<T> hidden = lstm_.forward(day_sequence(input).cast<T>(), trace->lstm);
    Output out;
    out.logits = heads_.forward(hidden, input.subject, dropout_rng, trace->heads);
    out.trace = std::move(trace);
    return out;
  }

  void backward(const Trace& base, const nn::Vector<T>& dlogits) override {
    const auto& trace = static_cast<const LstmTrace&>(base);
    lstm_.backward(trace.lstm, heads_.backward(trace.heads, dlogits));
  }

  void collect(nn::ParameterRefs<T>& out) override {
    lstm_.collect(out);
    heads_.collect(out);
  }

private:
  struct LstmTrace final : Trace {
    typename nn::Lstm<T>::Cache lstm;
    typename HeadBlock<T>::Cache heads;
  };

  nn::Lstm<T> lstm_;
  HeadBlock<T> heads_;
};

template <class T>
class Cnn1dBaseline final : public DayModel<T> {
public:
  using typename DayModel<T>::Trace;
  using typename DayModel<T>::Output;

  Cnn1dBaseline(const ModelConfig& config, Rng& rng)
      : encoder_("cnn1d", kContinuousChannels + kDiscreteFeatures, config.discrete, rng),
        heads_(encoder_.output_size(), config, rng) {}

  ModelKind kind() const override { return ModelKind::Cnn1dBaseline; }

  Output forward(const DayInput& input, Rng* dropout_rng) const override {
    auto trace = std::make_unique<Cnn1dTrace>();
    const nn::Vector<T> pooled = encoder_.forward(day_sequence(input), trace->encoder);
    Output out;
    out.logits = heads_.forward(pooled, input.subject, dropout_rng, trace->heads);
    out.trace = std::move(trace);
    return out;
  }

  void backward(const Trace& base, const nn::Vector<T>& dlogits) override {
    const auto& trace = static_cast<const Cnn1dTrace&>(base);
    encoder_.backward(trace.encoder, heads_.backward(trace.heads, dlogits));
  }

  void collect(nn::ParameterRefs<T>& out) override {
    encoder_.collect(out);
    heads_.collect(out);
  }

private:
  struct Cnn1dTrace final : Trace {
    typename DiscreteEncoder<T>::Cache encoder;
    typename HeadBlock<T>::Cache heads;
  };

  DiscreteEncoder<T> encoder_;
  HeadBlock<T> heads_;
};

template <class T>
class Cnn2dBaseline final : public DayModel<T> {
public:
  using typename DayModel<T>::Trace;
  using typename DayModel<T>::Output;

  Cnn2dBaseline(const ModelConfig& config, Rng& rng)
      : encoder_("cnn2d", config.continuous, rng), heads_(config.continuous.embed_dim, config, rng) {}

  ModelKind kind() const override { return ModelKind::Cnn2dBaseline; }

  Output forward(const DayInput& input, Rng* dropout_rng) const override {
    if (input.images.size() != 1) {
      throw ShapeError(fmt::format("2-D CNN baseline expects one day image, got {}", input.images.size()));
    }
    auto trace = std::make_unique<Cnn2dTrace>();
    const nn::SparseInput image = as_input(input.images.front());
    const nn::FeatureMap<T> map = encoder_.features(std::span(&image, 1), trace->encoder);
    const nn::Vector<T> embedded = encoder_.embed(map, trace->pool).col(0);
    Output out;
    out.logits = heads_.forward(embedded, input.subject, dropout_rng, trace->heads);
    out.trace = std::move(trace);
    return out;
  }

  void backward(const Trace& base, const nn::Vector<T>& dlogits) override {
    const auto& trace = static_cast<const Cnn2dTrace&>(base);
    const nn::Matrix<T> dembedded = heads_.backward(trace.heads, dlogits);
    encoder_.features_backward(trace.encoder, encoder_.embed_backward(trace.pool, dembedded));
  }

  void collect(nn::ParameterRefs<T>& out) override {
    encoder_.collect(out);
    heads_.collect(out);
  }

private:
  struct Cnn2dTrace final : Trace {
    typename ContinuousEncoder<T>::Cache encoder;
    typename ContinuousEncoder<T>::PoolCache pool;
    typename HeadBlock<T>::Cache heads;
  };

  ContinuousEncoder<T> encoder_;
  HeadBlock<T> heads_;
};

}  // namespace

template <class T>
std::unique_ptr<DayModel<T>> make_lstm_baseline(const ModelConfig& config, Rng& rng) {
  return std::make_unique<LstmBaseline<T>>(config, rng);
}

template <class T>
std::unique_ptr<DayModel<T>> make_cnn1d_baseline(const ModelConfig& config, Rng& rng) {
  return std::make_unique<Cnn1dBaseline<T>>(config, rng);
}

template <class T>
std::unique_ptr<DayModel<T>> make_cnn2d_baseline(const ModelConfig& config, Rng& rng) {
  return std::make_unique<Cnn2dBaseline<T>>(config, rng);
}

template std::unique_ptr<DayModel<float>> make_lstm_baseline<float>(const ModelConfig&, Rng&);
template std::unique_ptr<DayModel<double>> make_lstm_baseline<double>(const ModelConfig&, Rng&);
template std::unique_ptr<DayModel<float>> make_cnn1d_baseline<float>(const ModelConfig&, Rng&);
template std::unique_ptr<DayModel<double>> make_cnn1d_baseline<double>(const ModelConfig&, Rng&);
template std::unique_ptr<DayModel<float>> make_cnn2d_baseline<float>(const ModelConfig&, Rng&);
template std::unique_ptr<DayModel<double>> make_cnn2d_baseline<double>(const ModelConfig&, Rng&);

}  // namespace mislstm::detail
