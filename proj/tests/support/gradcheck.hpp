#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "mislstm/model.hpp"
#include "mislstm/training.hpp"

namespace mislstm::test {

struct GradCheckResult {
  int checked = 0;  // samples with |analytic| above the floor
  int failed = 0;
  double max_relative_error = 0.0;
  std::vector<std::string> failures;
};

inline double day_loss(const DayModel<double>& model, const DayInput& input, const LabelVector& label,
                       const FocalAlpha& alpha, double gamma) {
  const auto out = model.forward(input, nullptr);
  return total_loss(std::span<const double>(out.logits.data(), out.logits.size()), label, gamma, alpha);
}

/// Central differences on `samples` parameter entries drawn uniformly over
/// all scalars. Relative error is |a - n| / max(|a|, |n|).
inline GradCheckResult gradient_check(DayModel<double>& model, const DayInput& input, const LabelVector& label,
                                      int samples, double step, std::uint64_t seed, double tolerance = 1e-2,
                                      double floor = 1e-6, double gamma = 2.0) {
  const auto alpha = unit_alpha();
  auto params = model.parameters();
  for (auto* p : params) p->zero_grad();
  const auto out = model.forward(input, nullptr);
  std::vector<double> dlogits(kTotalLogits, 0.0);
  total_loss(std::span<const double>(out.logits.data(), out.logits.size()), label, gamma, alpha, dlogits);
  model.backward(*out.trace, Eigen::Map<const nn::Vector<double>>(dlogits.data(), kTotalLogits));

  std::vector<std::pair<std::size_t, Eigen::Index>> entries;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (Eigen::Index j = 0; j < params[i]->size(); ++j) entries.emplace_back(i, j);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(entries.begin(), entries.end(), rng);
  entries.resize(std::min<std::size_t>(entries.size(), static_cast<std::size_t>(samples)));

  GradCheckResult result;
  for (const auto& [i, j] : entries) {
    auto& p = *params[i];
    const double analytic = p.grad.data()[j];
    const double saved = p.value.data()[j];
    p.value.data()[j] = saved + step;
    const double up = day_loss(model, input, label, alpha, gamma);
    p.value.data()[j] = saved - step;
    const double down = day_loss(model, input, label, alpha, gamma);
    p.value.data()[j] = saved;
    const double numeric = (up - down) / (2.0 * step);
    if (std::abs(analytic) <= floor) continue;
    ++result.checked;
    const double rel = std::abs(analytic - numeric) / std::max(std::abs(analytic), std::abs(numeric));
    result.max_relative_error = std::max(result.max_relative_error, rel);
    if (rel >= tolerance) {
      ++result.failed;
      result.failures.push_back(p.name + "[" + std::to_string(j) + "] analytic " + std::to_string(analytic) +
                                " numeric " + std::to_string(numeric));
    }
  }
  return result;
}

}  // namespace mislstm::test
