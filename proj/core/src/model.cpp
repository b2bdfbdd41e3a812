#include "mislstm/model.hpp"

#include <fmt/format.h>

#include "model_parts.hpp"

namespace mislstm {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::MisLstm: return "mis_lstm";
    case ModelKind::LstmBaseline: return "lstm";
    case ModelKind::Cnn1dBaseline: return "cnn1d";
    case ModelKind::Cnn2dBaseline: return "cnn2d";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "mis_lstm") return ModelKind::MisLstm;
  if (text == "lstm" || text == "lstm_baseline") return ModelKind::LstmBaseline;
  if (text == "cnn1d" || text == "cnn1d_baseline") return ModelKind::Cnn1dBaseline;
  if (text == "cnn2d" || text == "cnn2d_baseline") return ModelKind::Cnn2dBaseline;
  throw ConfigError(fmt::format("unknown model '{}'", text));
}

std::string_view to_string(CbamPlacement placement) {
  return placement == CbamPlacement::BlockSequence ? "block_sequence" : "encoder_map";
}

CbamPlacement parse_cbam_placement(std::string_view text) {
  if (text == "block_sequence") return CbamPlacement::BlockSequence;
  if (text == "encoder_map") return CbamPlacement::EncoderMap;
  throw ConfigError(fmt::format("unknown CBAM placement '{}'", text));
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.lstm_hidden = 64;
  c.continuous = ContinuousEncoderConfig::desk();
  return c;
}

void ModelConfig::validate() const {
  if (lstm_hidden < 1) throw ConfigError("lstm_hidden must be positive");
  if (lstm_layers < 1) throw ConfigError("lstm_layers must be at least 1");
  if (subject_embed_dim < 0) throw ConfigError("subject_embed_dim must be non-negative");
  if (n_subjects < 0) throw ConfigError("n_subjects must be non-negative");
  if (cbam_reduction < 1) throw ConfigError("cbam_reduction must be positive");
  if (cbam_kernel < 1 || cbam_kernel % 2 == 0) throw ConfigError("cbam_kernel must be odd");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  continuous.validate();
}

int block_rasters(const ModelConfig& config) {
  return config.discrete_branch ? kContinuousChannels : kContinuousChannels + kDiscreteFeatures;
}

// ---------------------------------------------------------------------------

template <class T>
HeadBlock<T>::HeadBlock(int hidden, const ModelConfig& config, Rng& rng)
    : n_subjects_(config.n_subjects),
      embed_dim_(config.n_subjects > 0 ? config.subject_embed_dim : 0),
      dropout_(config.dropout) {
  if (embed_dim_ > 0) subjects_ = nn::Embedding<T>("subject", n_subjects_, embed_dim_, rng);
  heads_ = nn::Linear<T>("heads", hidden + embed_dim_, kTotalLogits, rng);
}

template <class T>
nn::Vector<T> HeadBlock<T>::forward(const nn::Vector<T>& hidden, int subject, Rng* dropout_rng,
                                    Cache& cache) const {
  if (subject < kUnknownSubject || subject >= n_subjects_) {
    throw Error(fmt::format("invalid subject id {} (model knows {})", subject, n_subjects_));
  }
  cache.subject = subject;
  cache.hidden = static_cast<int>(hidden.size());
  nn::Vector<T> features(hidden.size() + embed_dim_);
  features.head(hidden.size()) = hidden;
  if (embed_dim_ > 0) features.tail(embed_dim_) = subjects_.forward(subject);
  cache.mask = nn::dropout_mask<T>(features.size(), dropout_, dropout_rng);
  cache.features = features.cwiseProduct(cache.mask);
  return heads_.forward(cache.features).col(0);
}

template <class T>
nn::Vector<T> HeadBlock<T>::backward(const Cache& cache, const nn::Vector<T>& dlogits) {
  const nn::Vector<T> dfeatures =
      heads_.backward(cache.features, dlogits).col(0).cwiseProduct(cache.mask);
  if (embed_dim_ > 0) subjects_.backward(cache.subject, dfeatures.tail(embed_dim_));
  return dfeatures.head(cache.hidden);
}

template <class T>
void HeadBlock<T>::collect(nn::ParameterRefs<T>& out) {
  if (embed_dim_ > 0) subjects_.collect(out);
  heads_.collect(out);
}

template class HeadBlock<float>;
template class HeadBlock<double>;

template <class T>
nn::Matrix<T> cbam_refine(const nn::Cbam<T>& cbam, const nn::Matrix<T>& sequence,
                          typename nn::Cbam<T>::Cache& cache) {
  nn::FeatureMap<T> map;
  map.n = 1;
  map.h = 1;
  map.w = static_cast<int>(sequence.cols());
  map.data = sequence;
  return cbam.forward(map, cache).data;
}

template nn::Matrix<float> cbam_refine<float>(const nn::Cbam<float>&, const nn::Matrix<float>&,
                                              nn::Cbam<float>::Cache&);
template nn::Matrix<double> cbam_refine<double>(const nn::Cbam<double>&, const nn::Matrix<double>&,
                                                nn::Cbam<double>::Cache&);

// ---------------------------------------------------------------------------

namespace {

template <class T>
class MisLstm final : public DayModel<T> {
public:
  using typename DayModel<T>::Trace;
  using typename DayModel<T>::Output;

  MisLstm(const ModelConfig& config, Rng& rng) : config_(config) {
    encoder_ = ContinuousEncoder<T>("continuous", config.continuous, rng);
    int width = config.continuous.embed_dim;
    if (config.discrete_branch) {
      discrete_ = DiscreteEncoder<T>("discrete", kDiscreteFeatures, config.discrete, rng);
      width += discrete_.output_size();
    }
    if (config.cbam_placement == CbamPlacement::EncoderMap) {
      cbam_ = nn::Cbam<T>("cbam", encoder_.map_channels(), config.cbam_reduction, config.cbam_kernel,
                          config.cbam_kernel, rng);
    } else {
      cbam_ = nn::Cbam<T>("cbam", width, config.cbam_reduction, 1, config.cbam_kernel, rng);
    }
    lstm_ = nn::Lstm<T>("lstm", width, config.lstm_hidden, config.lstm_layers, rng);
    heads_ = HeadBlock<T>(config.lstm_hidden, config, rng);
  }

  ModelKind kind() const override { return ModelKind::MisLstm; }

  Output forward(const DayInput& input, Rng* dropout_rng) const override {
    const int blocks = static_cast<int>(input.images.size());
    if (blocks < 1) throw ShapeError("MIS-LSTM input has no blocks");
    if (config_.discrete_branch && static_cast<int>(input.sequences.size()) != blocks) {
      throw ShapeError(fmt::format("{} images but {} discrete blocks", blocks, input.sequences.size()));
    }
    auto trace = std::make_unique<MisTrace>();
    std::vector<nn::SparseInput> inputs;
    for (const auto& image : input.images) inputs.push_back(as_input(image));

    nn::FeatureMap<T> map = encoder_.features(inputs, trace->encoder);
    if (config_.cbam_placement == CbamPlacement::EncoderMap) map = cbam_.forward(map, trace->cbam);
    const nn::Matrix<T> embedded = encoder_.embed(map, trace->pool);
    const int ec = static_cast<int>(embedded.rows());

    nn::Matrix<T> sequence;
    if (config_.discrete_branch) {
      sequence.resize(ec + discrete_.output_size(), blocks);
      sequence.topRows(ec) = embedded;
      trace->discrete.resize(blocks);
      for (int b = 0; b < blocks; ++b) {
        sequence.col(b).tail(discrete_.output_size()) =
            discrete_.forward(input.sequences[b], trace->discrete[b]);
      }
    } else {
      sequence = embedded;
    }
    if (config_.cbam_placement == CbamPlacement::BlockSequence) {
      sequence = cbam_refine(cbam_, sequence, trace->cbam);
    }
    const nn::Vector<T> hidden = lstm_.forward(sequence, trace->lstm);
    Output out;
    out.logits = heads_.forward(hidden, input.subject, dropout_rng, trace->heads);
    trace->embed_rows = ec;
    out.trace = std::move(trace);
    return out;
  }

  void backward(const Trace& base, const nn::Vector<T>& dlogits) override {
    const auto& trace = static_cast<const MisTrace&>(base);
    const nn::Vector<T> dhidden = heads_.backward(trace.heads, dlogits);
    nn::Matrix<T> dsequence = lstm_.backward(trace.lstm, dhidden);
    if (config_.cbam_placement == CbamPlacement::BlockSequence) {
      dsequence = cbam_.backward(trace.cbam, dsequence);
    }
    const int ec = trace.embed_rows;
    if (config_.discrete_branch) {
      for (std::size_t b = 0; b < trace.discrete.size(); ++b) {
        discrete_.backward(trace.discrete[b], dsequence.col(b).tail(discrete_.output_size()));
      }
    }
    nn::Matrix<T> dmap = encoder_.embed_backward(trace.pool, dsequence.topRows(ec));
    if (config_.cbam_placement == CbamPlacement::EncoderMap) dmap = cbam_.backward(trace.cbam, dmap);
    encoder_.features_backward(trace.encoder, std::move(dmap));
  }

  void collect(nn::ParameterRefs<T>& out) override {
    encoder_.collect(out);
    if (config_.discrete_branch) discrete_.collect(out);
    cbam_.collect(out);
    lstm_.collect(out);
    heads_.collect(out);
  }

private:
  struct MisTrace final : Trace {
    typename ContinuousEncoder<T>::Cache encoder;
    typename ContinuousEncoder<T>::PoolCache pool;
    std::vector<typename DiscreteEncoder<T>::Cache> discrete;
    typename nn::Cbam<T>::Cache cbam;
    typename nn::Lstm<T>::Cache lstm;
    typename HeadBlock<T>::Cache heads;
    int embed_rows = 0;
  };

  ModelConfig config_;
  ContinuousEncoder<T> encoder_;
  DiscreteEncoder<T> discrete_;
  nn::Cbam<T> cbam_;
  nn::Lstm<T> lstm_;
  HeadBlock<T> heads_;
};

}  // namespace

template <class T>
std::unique_ptr<DayModel<T>> make_model(ModelKind kind, const ModelConfig& config,
                                        const BlockConfig& blocks, std::uint64_t seed) {
  blocks.validate();
  ModelConfig resolved = config;
  const int rasters = kind == ModelKind::MisLstm ? block_rasters(config) : kContinuousChannels;
  resolved.continuous.input_channels = image_channels(blocks.encoding, rasters);
  resolved.validate();
  if (kind == ModelKind::MisLstm && config.discrete_branch) {
    config.discrete.validate(blocks.block_windows());
  }
  Rng rng = substream({seed, 0x6d6f64656cULL});
  switch (kind) {
    case ModelKind::MisLstm: return std::make_unique<MisLstm<T>>(resolved, rng);
    case ModelKind::LstmBaseline: return detail::make_lstm_baseline<T>(resolved, rng);
    case ModelKind::Cnn1dBaseline: return detail::make_cnn1d_baseline<T>(resolved, rng);
    case ModelKind::Cnn2dBaseline: return detail::make_cnn2d_baseline<T>(resolved, rng);
  }
  throw ConfigError("unknown model kind");
}

template std::unique_ptr<DayModel<float>> make_model<float>(ModelKind, const ModelConfig&,
                                                            const BlockConfig&, std::uint64_t);
template std::unique_ptr<DayModel<double>> make_model<double>(ModelKind, const ModelConfig&,
                                                              const BlockConfig&, std::uint64_t);

HeadLogits to_head_logits(const nn::Vector<float>& logits) {
  if (logits.size() != kTotalLogits) throw ShapeError("expected 13 logits");
  std::array<double, kTotalLogits> flat{};
  for (int i = 0; i < kTotalLogits; ++i) flat[i] = logits(i);
  return HeadLogits(flat);
}

HeadLogits forward_day(const DayModel<float>& model, const DayInput& input) {
  return to_head_logits(model.forward(input, nullptr).logits);
}

}  // namespace mislstm
