#include "mislstm/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <ostream>

#include <fmt/format.h>
#include <json.hpp>

namespace mislstm {

namespace {

std::string lower_head_name(int h) {
  std::string name(kHeadNames[h]);
  name[0] = static_cast<char>(name[0] - 'A' + 'a');
  return name;
}

}  // namespace

double logit_margin(std::span<const double> scores, MarginKind kind) {
  if (scores.size() < 2) throw Error("a margin needs at least two scores");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const std::size_t rank = kind == MarginKind::TopThree ? std::min<std::size_t>(2, sorted.size() - 1) : 1;
  return sorted[0] - sorted[rank];
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("quantile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw Error(fmt::format("quantile {} outside [0, 1]", q));
  std::sort(values.begin(), values.end());
  const double position = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(position));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double fraction = position - static_cast<double>(lo);
  return values[lo] + fraction * (values[hi] - values[lo]);
}

Thresholds fit_thresholds(const std::vector<std::vector<HeadLogits>>& validation, double q,
                          MarginKind kind) {
  Thresholds out;
  for (const auto& days : validation) {
    if (days.size() < 2) throw Error("thresholds need at least two validation days");
    std::array<double, kHeads> tau{};
    for (int h = 0; h < kHeads; ++h) {
      std::vector<double> margins;
      margins.reserve(days.size());
      for (const auto& day : days) margins.push_back(logit_margin(day.head(h), kind));
      tau[h] = quantile(std::move(margins), q);
    }
    out.push_back(tau);
  }
  return out;
}

int select_best(std::span<const double> validation_average_f1) {
  if (validation_average_f1.empty()) throw Error("no models to select from");
  int best = 0;
  for (int m = 1; m < static_cast<int>(validation_average_f1.size()); ++m) {
    if (validation_average_f1[m] > validation_average_f1[best]) best = m;
  }
  return best;
}

void EnsemblePool::validate() const {
  if (logits.empty()) throw Error("ensemble pool is empty");
  if (!model_ids.empty() && model_ids.size() != logits.size()) throw Error("model ids do not match the pool");
  for (const auto& m : logits) {
    if (m.size() != logits.front().size()) throw Error("pool models cover different days");
  }
  if (best_index < 0 || best_index >= models()) throw Error("best model index out of range");
  if (thresholds && static_cast<int>(thresholds->size()) != models()) {
    throw Error("thresholds do not match the pool");
  }
}

int modal_vote(std::span<const int> votes, int n_classes, int preferred) {
  std::vector<int> counts(n_classes, 0);
  for (int v : votes) ++counts[v];
  const int top = *std::max_element(counts.begin(), counts.end());
  if (preferred >= 0 && preferred < n_classes && counts[preferred] == top) return preferred;
  for (int c = 0; c < n_classes; ++c) {
    if (counts[c] == top) return c;
  }
  return 0;
}

std::vector<LabelVector> soft_vote(const EnsemblePool& pool) {
  pool.validate();
  std::vector<LabelVector> out;
  std::array<double, kTotalLogits> mean{};
  for (int d = 0; d < pool.days(); ++d) {
    mean.fill(0.0);
    for (int m = 0; m < pool.models(); ++m) {
      const auto& flat = pool.logits[m][d].flat();
      for (int i = 0; i < kTotalLogits; ++i) mean[i] += flat[i];
    }
    for (double& v : mean) v /= pool.models();
    out.push_back(predict(HeadLogits(mean)));
  }
  return out;
}

std::vector<LabelVector> hard_vote(const EnsemblePool& pool) {
  pool.validate();
  std::vector<LabelVector> out;
  std::vector<int> votes(pool.models());
  for (int d = 0; d < pool.days(); ++d) {
    std::array<int, kHeads> classes{};
    for (int h = 0; h < kHeads; ++h) {
      for (int m = 0; m < pool.models(); ++m) votes[m] = argmax(pool.logits[m][d].head(h));
      classes[h] = modal_vote(votes, kHeadClasses[h], votes[pool.best_index]);
    }
    out.emplace_back(classes);
  }
  return out;
}

std::vector<LabelVector> ualre(const EnsemblePool& pool) {
  pool.validate();
  if (!pool.thresholds) throw Error("UALRE needs fitted thresholds");
  const Thresholds& tau = *pool.thresholds;
  const int best = pool.best_index;
  std::vector<LabelVector> out;
  std::vector<int> votes;
  for (int d = 0; d < pool.days(); ++d) {
    std::array<int, kHeads> classes{};
    for (int h = 0; h < kHeads; ++h) {
      const auto best_scores = pool.logits[best][d].head(h);
      const int best_vote = argmax(best_scores);
      if (logit_margin(best_scores, pool.margin) >= tau[best][h]) {
        classes[h] = best_vote;
        continue;
      }
      votes.clear();
      for (int m = 0; m < pool.models(); ++m) {
        if (m == best) continue;
        const auto scores = pool.logits[m][d].head(h);
        if (logit_margin(scores, pool.margin) >= tau[m][h]) votes.push_back(argmax(scores));
      }
      classes[h] = votes.empty() ? best_vote : modal_vote(votes, kHeadClasses[h], best_vote);
    }
    out.emplace_back(classes);
  }
  return out;
}

void write_logit_record(std::ostream& out, const LogitRecord& record) {
  nlohmann::json j;
  j["day_id"] = record.day_id;
  j["model_id"] = record.model_id;
  for (int h = 0; h < kHeads; ++h) {
    const auto scores = record.logits.head(h);
    j[lower_head_name(h)] = std::vector<double>(scores.begin(), scores.end());
  }
  out << j.dump() << '\n';
}

std::vector<LogitRecord> read_logit_records(std::istream& in) {
  std::vector<LogitRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LogitRecord r;
      r.day_id = j.at("day_id").get<std::string>();
      r.model_id = j.at("model_id").get<std::string>();
      std::array<double, kTotalLogits> flat{};
      for (int h = 0; h < kHeads; ++h) {
        const auto scores = j.at(lower_head_name(h)).get<std::vector<double>>();
        if (static_cast<int>(scores.size()) != kHeadClasses[h]) {
          throw ParseError(fmt::format("{} needs {} scores", lower_head_name(h), kHeadClasses[h]), line_no);
        }
        std::copy(scores.begin(), scores.end(), flat.begin() + head_offset(h));
      }
      r.logits = HeadLogits(flat);
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

std::string thresholds_to_json(std::span<const std::string> model_ids, const Thresholds& thresholds) {
  if (model_ids.size() != thresholds.size()) throw Error("model ids do not match thresholds");
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t m = 0; m < model_ids.size(); ++m) {
    for (int h = 0; h < kHeads; ++h) j[model_ids[m]][lower_head_name(h)] = thresholds[m][h];
  }
  return j.dump(2);
}

Thresholds thresholds_from_json(const std::string& text, std::span<const std::string> model_ids) {
  Thresholds out;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& id : model_ids) {
      std::array<double, kHeads> tau{};
      for (int h = 0; h < kHeads; ++h) tau[h] = j.at(id).at(lower_head_name(h)).get<double>();
      out.push_back(tau);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("threshold file: {}", e.what()));
  }
  return out;
}

}  // namespace mislstm
