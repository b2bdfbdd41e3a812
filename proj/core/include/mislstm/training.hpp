#pragma once

// Focal loss, the AdamW training loop with best-validation checkpointing,
// and checkpoint persistence.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mislstm/evaluation.hpp"
#include "mislstm/model.hpp"

namespace mislstm {

/// -alpha * (1 - p_t)^gamma * log(p_t) with p_t the softmax probability of
/// `target`. When `grad` is non-empty it receives dL/dlogits.
double focal_loss(std::span<const double> logits, int target, double gamma, double alpha,
                  std::span<double> grad = {});

/// Per-head, per-class focal weights.
using FocalAlpha = std::array<std::vector<double>, kHeads>;

FocalAlpha unit_alpha();
/// alpha_c proportional to 1 / count_c (a class never seen counts as 1),
/// normalized to mean 1 per head.
FocalAlpha balanced_alpha(std::span<const LabelVector> training_labels);

/// Unweighted sum of the six per-head focal losses over the flat 13 logits.
double total_loss(std::span<const double> logits, const LabelVector& label, double gamma,
                  const FocalAlpha& alpha, std::span<double> grad = {});

struct TrainConfig {
  double learning_rate = 3e-5;
  int batch_size = 16;
  int epochs = 200;
  double focal_gamma = 2.0;
  /// Class-frequency weights when true; otherwise `alpha` (unit by default).
  bool balanced_alpha = true;
  std::optional<FocalAlpha> alpha;
  double weight_decay = 1e-2;
  std::uint64_t seed = 0;

  static TrainConfig defaults() { return {}; }
  /// 30 epochs with a larger step for the reduced model.
  static TrainConfig desk();

  /// Throws ConfigError.
  void validate() const;
};

struct LabeledInput {
  DayInput input;
  LabelVector label;
  std::string day_id;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  std::array<double, kHeads> val_f1{};
  double val_average = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct NamedTensor {
  std::string name;
  nn::Matrix<float> value;
};

struct CheckpointBundle {
  std::vector<NamedTensor> parameters;
  int epoch = -1;
  std::array<double, kHeads> val_f1{};
  double val_average = 0.0;
  std::vector<EpochRecord> history;
};

/// Earliest epoch with the maximal average; -1 for an empty history.
int best_epoch(std::span<const double> averages);

/// Receives one JSON object per training event.
using TrainLog = std::function<void(const std::string& json_line)>;

struct TrainResult {
  CheckpointBundle bundle;
  /// The trained model with the checkpoint parameters loaded.
  std::unique_ptr<DayModel<float>> model;
};

/// Trains `kind` on `train`, evaluating on `val` after every epoch. Throws
/// Error on an empty split or a non-finite loss.
TrainResult train(ModelKind kind, const ModelConfig& model_config, const BlockConfig& blocks,
                  const TrainConfig& config, std::span<const LabeledInput> train,
                  std::span<const LabeledInput> val, const TrainLog& log = {});

std::vector<NamedTensor> snapshot(DayModel<float>& model);
/// Throws Error when names or shapes disagree.
void restore(DayModel<float>& model, std::span<const NamedTensor> parameters);

std::vector<HeadLogits> predict_logits(const DayModel<float>& model, std::span<const LabeledInput> days);

// params.bin, little-endian:
//   "MISP" | u32 version | u32 count
//   per tensor: u32 name length | name bytes | u32 rows | u32 cols |
//               rows*cols f32 column-major
void write_parameters(const std::filesystem::path& path, std::span<const NamedTensor> parameters);
std::vector<NamedTensor> read_parameters(const std::filesystem::path& path);

std::string history_to_json(std::span<const EpochRecord> history);
std::vector<EpochRecord> history_from_json(const std::string& text);

}  // namespace mislstm
