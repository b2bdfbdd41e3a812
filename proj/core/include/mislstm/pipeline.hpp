#pragma once

// Experiment plumbing: dataset -> split -> fitted preprocessing -> model
// inputs, plus the flat key=value / JSON experiment configuration.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mislstm/evaluation.hpp"
#include "mislstm/ingest.hpp"
#include "mislstm/preprocess.hpp"
#include "mislstm/training.hpp"

namespace mislstm {

struct ExperimentConfig {
  ModelKind kind = ModelKind::MisLstm;
  ModelConfig model;
  BlockConfig blocks;
  TrainConfig train;
  PreprocessConfig preprocess = PreprocessConfig::defaults();
  double split_ratio = 0.8;
  std::uint64_t split_seed = 0;

  static ExperimentConfig defaults() { return {}; }
  static ExperimentConfig desk();

  /// Applies one `key=value` setting. `preset=desk|full` resets every
  /// field. Throws ConfigError for unknown keys or bad values.
  void apply(std::string_view key, std::string_view value);
  /// Applies `key=value` lines; blank lines and `#` comments are skipped.
  void apply_text(std::string_view text);

  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
};

/// "subject/YYYY-MM-DD".
std::string day_id(const DayRecord& record);

struct PreparedDays {
  std::vector<DayFeatureGrid> grids;
  std::vector<LabelVector> labels;
  std::vector<int> subjects;
  std::vector<std::string> day_ids;
  Split split;
  ChannelStats stats;
  int n_subjects = 0;
};

/// Splits the dataset, fits statistics on the training days only and
/// transforms every day.
PreparedDays prepare_days(const Dataset& dataset, const PreprocessConfig& preprocess, double ratio,
                          std::uint64_t split_seed);

/// 16 x 144: continuous rows averaged over ten-minute windows, then the nine
/// discrete rows.
RowMatrixF day_sequence(const DayFeatureGrid& grid);

/// Builds the input a model kind consumes. Without the discrete branch the
/// discrete rows are held for ten minutes each and drawn as nine extra
/// rasters over [0, 1] (or the continuous range when they are z-scored).
DayInput make_day_input(const DayFeatureGrid& grid, int subject, ModelKind kind, const BlockConfig& blocks,
                        bool discrete_branch, DiscreteNormalization normalization);

std::vector<LabeledInput> make_inputs(const PreparedDays& days, std::span<const std::size_t> indices,
                                      const ExperimentConfig& config);

}  // namespace mislstm
