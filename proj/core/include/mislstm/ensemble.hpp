#pragma once

// Soft voting, hard voting and UALRE (accept the best model when its logit
// margin is confident, otherwise hard-vote among the other models' confident
// predictions) over pools of per-day head logits.

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mislstm/types.hpp"

namespace mislstm {

enum class MarginKind {
  TopTwo,    // top1 - top2
  TopThree,  // top1 - top3 (top1 - top2 for binary heads)
};

/// Throws Error for fewer than two scores.
double logit_margin(std::span<const double> scores, MarginKind kind = MarginKind::TopTwo);

/// Empirical quantile with linear interpolation between order statistics.
/// Throws Error on empty input or q outside [0, 1].
double quantile(std::vector<double> values, double q);

/// Per model, per head margin threshold.
using Thresholds = std::vector<std::array<double, kHeads>>;

/// `validation[m][d]` are model m's logits on validation day d.
/// Throws Error with fewer than 2 validation days.
Thresholds fit_thresholds(const std::vector<std::vector<HeadLogits>>& validation, double q,
                          MarginKind kind = MarginKind::TopTwo);

/// Highest score, lower index on ties.
int select_best(std::span<const double> validation_average_f1);

struct EnsemblePool {
  std::vector<std::string> model_ids;
  std::vector<std::vector<HeadLogits>> logits;  // [model][day]
  int best_index = 0;
  std::optional<Thresholds> thresholds;
  MarginKind margin = MarginKind::TopTwo;

  int models() const { return static_cast<int>(logits.size()); }
  int days() const { return logits.empty() ? 0 : static_cast<int>(logits.front().size()); }

  /// Throws Error when the pool is empty, misaligned or best_index is out of
  /// range.
  void validate() const;
};

std::vector<LabelVector> soft_vote(const EnsemblePool& pool);
std::vector<LabelVector> hard_vote(const EnsemblePool& pool);
/// Throws Error when thresholds are missing.
std::vector<LabelVector> ualre(const EnsemblePool& pool);

/// Modal vote; ties go to `preferred` when it is among the tied classes,
/// otherwise to the lowest tied class.
int modal_vote(std::span<const int> votes, int n_classes, int preferred);

// Logit files: one JSON object per line,
//   {"day_id": ..., "model_id": ..., "q1": [..], ..., "s3": [..]}
struct LogitRecord {
  std::string day_id;
  std::string model_id;
  HeadLogits logits;
};

void write_logit_record(std::ostream& out, const LogitRecord& record);
std::vector<LogitRecord> read_logit_records(std::istream& in);

std::string thresholds_to_json(std::span<const std::string> model_ids, const Thresholds& thresholds);
/// Returns thresholds ordered as `model_ids`. Throws ParseError.
Thresholds thresholds_from_json(const std::string& text, std::span<const std::string> model_ids);

}  // namespace mislstm
