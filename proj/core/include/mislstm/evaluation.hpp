#pragma once

// Subject-stratified splitting, macro-F1 and metric reports.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mislstm/types.hpp"

namespace mislstm {

struct Split {
  std::vector<std::size_t> train;  // day indices, ascending
  std::vector<std::size_t> val;
};

/// `subjects[i]` is the subject of day i; days of a subject are assumed to be
/// in chronological order. Per subject, round(ratio * n) days (clamped to
/// [1, n-1]) go to training, chosen by a seeded shuffle; both sides keep the
/// original order. Throws Error when a subject has fewer than 2 days.
Split stratified_subject_split(std::span<const int> subjects, double ratio, std::uint64_t seed);

using ConfusionMatrix = std::vector<std::vector<long>>;  // [label][prediction]

ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> labels,
                                 int n_classes);

/// Unweighted mean of per-class F1 = 2TP / (2TP + FP + FN). A class absent
/// from both predictions and labels scores 0. Throws Error on empty or
/// mismatched input.
double macro_f1(std::span<const int> predictions, std::span<const int> labels, int n_classes);

struct MetricReport {
  std::array<double, kHeads> f1{};
  double average = 0.0;
  std::array<ConfusionMatrix, kHeads> confusion;

  std::string to_json() const;
  static MetricReport from_json(const std::string& text);
};

MetricReport evaluate(std::span<const LabelVector> predictions, std::span<const LabelVector> labels);
MetricReport evaluate(std::span<const HeadLogits> logits, std::span<const LabelVector> labels);

/// Builds a report from six per-head scores (no confusion matrices).
MetricReport report_from_scores(const std::array<double, kHeads>& f1);

/// Rounds half-up to 3 decimals after snapping to 1e-9, so that values such
/// as 0.6145 that are not exactly representable still round up.
double round3(double value);
std::string format3(double value);

struct NamedReport {
  std::string name;
  MetricReport report;
};

/// Aligned plain-text table: Model | Q1 Q2 Q3 S1 S2 S3 | Avg.
std::string format_table(std::span<const NamedReport> rows);

}  // namespace mislstm
