#pragma once

// Day-level models. MIS-LSTM encodes each N-hour block with the image and
// discrete encoders, refines the block sequence with CBAM, runs a stacked
// LSTM over blocks, appends a subject embedding and emits six heads. The
// three baselines share the same heads.

#include <memory>
#include <string_view>
#include <vector>

#include "mislstm/encoders.hpp"

namespace mislstm {

inline constexpr int kUnknownSubject = -1;

enum class ModelKind { MisLstm, LstmBaseline, Cnn1dBaseline, Cnn2dBaseline };

std::string_view to_string(ModelKind kind);
/// Accepts mis_lstm, lstm, cnn1d, cnn2d (and the *_baseline spellings).
ModelKind parse_model_kind(std::string_view text);

/// Where CBAM is applied.
enum class CbamPlacement {
  /// On the D x 1 x B map of concatenated block embeddings.
  BlockSequence,
  /// On the continuous encoder's pre-pool map of every block.
  EncoderMap,
};

std::string_view to_string(CbamPlacement placement);
CbamPlacement parse_cbam_placement(std::string_view text);

struct ModelConfig {
  int lstm_hidden = 256;
  int lstm_layers = 2;
  int subject_embed_dim = 16;
  int n_subjects = 0;
  int cbam_reduction = 8;
  int cbam_kernel = 7;
  double dropout = 0.3;
  CbamPlacement cbam_placement = CbamPlacement::BlockSequence;
  /// False routes the discrete rows into the block image instead of the 1-D
  /// branch.
  bool discrete_branch = true;
  ContinuousEncoderConfig continuous;
  DiscreteEncoderConfig discrete;

  static ModelConfig defaults() { return {}; }
  static ModelConfig desk();

  /// Throws ConfigError.
  void validate() const;
};

/// Everything a model consumes for one day. MIS-LSTM uses one image and one
/// discrete block per N-hour block; the LSTM and 1-D CNN baselines use a
/// single 16 x 144 sequence; the 2-D CNN baseline uses one full-day image.
struct DayInput {
  std::vector<SparseImage> images;
  std::vector<RowMatrixF> sequences;
  int subject = kUnknownSubject;
};

template <class T>
class DayModel {
public:
  /// Opaque per-call intermediates needed by backward().
  struct Trace {
    virtual ~Trace() = default;
  };
  struct Output {
    nn::Vector<T> logits;  // 13 scores in head order
    std::unique_ptr<Trace> trace;
  };

  virtual ~DayModel() = default;

  virtual ModelKind kind() const = 0;
  /// Dropout is active only when `dropout_rng` is non-null.
  virtual Output forward(const DayInput& input, Rng* dropout_rng) const = 0;
  /// Accumulates parameter gradients for one forward call.
  virtual void backward(const Trace& trace, const nn::Vector<T>& dlogits) = 0;
  virtual void collect(nn::ParameterRefs<T>& out) = 0;

  nn::ParameterRefs<T> parameters() {
    nn::ParameterRefs<T> refs;
    collect(refs);
    return refs;
  }
};

/// Subject embedding, dropout and the six linear heads (stored as one 13-row
/// projection; row blocks are the individual heads).
template <class T>
class HeadBlock {
public:
  struct Cache {
    nn::Vector<T> features;  // after dropout
    nn::Vector<T> mask;
    int subject = kUnknownSubject;
    int hidden = 0;
  };

  HeadBlock() = default;
  HeadBlock(int hidden, const ModelConfig& config, Rng& rng);

  nn::Vector<T> forward(const nn::Vector<T>& hidden, int subject, Rng* dropout_rng, Cache& cache) const;
  /// Returns the gradient with respect to `hidden`.
  nn::Vector<T> backward(const Cache& cache, const nn::Vector<T>& dlogits);
  void collect(nn::ParameterRefs<T>& out);

private:
  int n_subjects_ = 0;
  int embed_dim_ = 0;
  double dropout_ = 0.0;
  nn::Embedding<T> subjects_;
  nn::Linear<T> heads_;
};

/// Number of image rasters per block for a configuration (7, or 16 when the
/// discrete rows are drawn into the image).
int block_rasters(const ModelConfig& config);

template <class T>
std::unique_ptr<DayModel<T>> make_model(ModelKind kind, const ModelConfig& config,
                                        const BlockConfig& blocks, std::uint64_t seed);

/// CBAM over a block-embedding sequence (D x B, columns in time order).
template <class T>
nn::Matrix<T> cbam_refine(const nn::Cbam<T>& cbam, const nn::Matrix<T>& sequence,
                          typename nn::Cbam<T>::Cache& cache);

HeadLogits to_head_logits(const nn::Vector<float>& logits);

/// Inference without dropout.
HeadLogits forward_day(const DayModel<float>& model, const DayInput& input);

}  // namespace mislstm
