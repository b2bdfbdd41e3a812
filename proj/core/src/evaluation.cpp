#include "mislstm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>
#include <json.hpp>

#include "mislstm/random.hpp"

namespace mislstm {

Split stratified_subject_split(std::span<const int> subjects, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
  std::map<int, std::vector<std::size_t>> by_subject;
  for (std::size_t i = 0; i < subjects.size(); ++i) by_subject[subjects[i]].push_back(i);

  std::vector<char> is_train(subjects.size(), 0);
  for (auto& [subject, days] : by_subject) {
    const int n = static_cast<int>(days.size());
    if (n < 2) throw Error(fmt::format("subject {} has {} day(s); at least 2 are required", subject, n));
    const int n_train = std::clamp(static_cast<int>(std::lround(ratio * n)), 1, n - 1);
    std::vector<std::size_t> order = days;
    Rng rng = substream({seed, static_cast<std::uint64_t>(subject)});
    std::shuffle(order.begin(), order.end(), rng);
    for (int k = 0; k < n_train; ++k) is_train[order[k]] = 1;
  }
  Split split;
  for (std::size_t i = 0; i < subjects.size(); ++i) (is_train[i] ? split.train : split.val).push_back(i);
  return split;
}

ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> labels,
                                 int n_classes) {
  if (predictions.size() != labels.size()) throw Error("predictions and labels differ in length");
  ConfusionMatrix m(n_classes, std::vector<long>(n_classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes || predictions[i] < 0 || predictions[i] >= n_classes) {
      throw Error("class index out of range");
    }
    ++m[labels[i]][predictions[i]];
  }
  return m;
}

double macro_f1(std::span<const int> predictions, std::span<const int> labels, int n_classes) {
  if (labels.empty()) throw Error("macro-F1 of an empty set");
  const ConfusionMatrix m = confusion_matrix(predictions, labels, n_classes);
  double total = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    long tp = m[c][c], fp = 0, fn = 0;
    for (int k = 0; k < n_classes; ++k) {
      if (k == c) continue;
      fp += m[k][c];
      fn += m[c][k];
    }
    const long denominator = 2 * tp + fp + fn;
    if (denominator > 0) total += 2.0 * static_cast<double>(tp) / static_cast<double>(denominator);
  }
  return total / n_classes;
}

MetricReport evaluate(std::span<const LabelVector> predictions, std::span<const LabelVector> labels) {
  if (predictions.size() != labels.size()) throw Error("predictions and labels differ in length");
  MetricReport report;
  std::vector<int> p(labels.size()), y(labels.size());
  for (int h = 0; h < kHeads; ++h) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      p[i] = predictions[i][h];
      y[i] = labels[i][h];
    }
    report.f1[h] = macro_f1(p, y, kHeadClasses[h]);
    report.confusion[h] = confusion_matrix(p, y, kHeadClasses[h]);
  }
  report.average = std::accumulate(report.f1.begin(), report.f1.end(), 0.0) / kHeads;
  return report;
}

MetricReport evaluate(std::span<const HeadLogits> logits, std::span<const LabelVector> labels) {
  std::vector<LabelVector> predictions;
  predictions.reserve(logits.size());
  for (const auto& l : logits) predictions.push_back(predict(l));
  return evaluate(predictions, labels);
}

MetricReport report_from_scores(const std::array<double, kHeads>& f1) {
  MetricReport report;
  report.f1 = f1;
  report.average = std::accumulate(f1.begin(), f1.end(), 0.0) / kHeads;
  return report;
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  for (int h = 0; h < kHeads; ++h) {
    const std::string name(kHeadNames[h]);
    j["f1"][name] = f1[h];
    if (!confusion[h].empty()) j["confusion"][name] = confusion[h];
  }
  j["average"] = average;
  return j.dump(2);
}

MetricReport MetricReport::from_json(const std::string& text) {
  MetricReport report;
  try {
    const auto j = nlohmann::json::parse(text);
    for (int h = 0; h < kHeads; ++h) {
      const std::string name(kHeadNames[h]);
      report.f1[h] = j.at("f1").at(name).get<double>();
      if (j.contains("confusion") && j["confusion"].contains(name)) {
        report.confusion[h] = j["confusion"][name].get<ConfusionMatrix>();
      }
    }
    report.average = j.at("average").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("metric report: {}", e.what()));
  }
  return report;
}

double round3(double value) {
  const double snapped = static_cast<double>(std::llround(value * 1e9));  // units of 1e-9
  return std::floor(snapped / 1e6 + 0.5) / 1e3;
}

std::string format3(double value) { return fmt::format("{:.3f}", round3(value)); }

std::string format_table(std::span<const NamedReport> rows) {
  std::size_t width = 5;
  for (const auto& row : rows) width = std::max(width, row.name.size());
  std::string out = fmt::format("{:<{}}", "Model", width);
  for (auto name : kHeadNames) out += fmt::format("  {:>5}", name);
  out += "    Avg\n";
  for (const auto& row : rows) {
    out += fmt::format("{:<{}}", row.name, width);
    for (double v : row.report.f1) out += fmt::format("  {:>5}", format3(v));
    out += fmt::format("  {:>5}\n", format3(row.report.average));
  }
  return out;
}

}  // namespace mislstm
