#include "mislstm/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "binary_io.hpp"

namespace mislstm {

double focal_loss(std::span<const double> logits, int target, double gamma, double alpha,
                  std::span<double> grad) {
  const int n = static_cast<int>(logits.size());
  if (target < 0 || target >= n) throw Error(fmt::format("target {} outside {} classes", target, n));
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - top);
  const double log_norm = top + std::log(sum);
  const double log_pt = logits[target] - log_norm;
  const double pt = std::exp(log_pt);
  const double rest = -std::expm1(log_pt);  // 1 - p_t without cancellation
  const double loss = -alpha * std::pow(rest, gamma) * log_pt;
  if (!grad.empty()) {
    double coefficient = std::pow(rest, gamma);
    if (gamma != 0.0 && rest > 0.0) coefficient -= gamma * std::pow(rest, gamma - 1.0) * pt * log_pt;
    coefficient *= -alpha;
    for (int j = 0; j < n; ++j) {
      const double pj = std::exp(logits[j] - log_norm);
      grad[j] = coefficient * ((j == target ? 1.0 : 0.0) - pj);
    }
  }
  return loss;
}

FocalAlpha unit_alpha() {
  FocalAlpha alpha;
  for (int h = 0; h < kHeads; ++h) alpha[h].assign(kHeadClasses[h], 1.0);
  return alpha;
}

FocalAlpha balanced_alpha(std::span<const LabelVector> training_labels) {
  FocalAlpha alpha;
  for (int h = 0; h < kHeads; ++h) {
    std::vector<double> counts(kHeadClasses[h], 0.0);
    for (const auto& label : training_labels) counts[label[h]] += 1.0;
    double total = 0.0;
    for (double& c : counts) {
      c = 1.0 / std::max(c, 1.0);
      total += c;
    }
    for (double& c : counts) c *= static_cast<double>(kHeadClasses[h]) / total;
    alpha[h] = std::move(counts);
  }
  return alpha;
}

double total_loss(std::span<const double> logits, const LabelVector& label, double gamma,
                  const FocalAlpha& alpha, std::span<double> grad) {
  if (logits.size() != kTotalLogits) throw ShapeError("expected 13 logits");
  double loss = 0.0;
  for (int h = 0; h < kHeads; ++h) {
    const auto scores = logits.subspan(head_offset(h), kHeadClasses[h]);
    const int target = label[h];
    std::span<double> g = grad.empty() ? std::span<double>{} : grad.subspan(head_offset(h), kHeadClasses[h]);
    loss += focal_loss(scores, target, gamma, alpha[h][target], g);
  }
  return loss;
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.epochs = 30;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (!(focal_gamma >= 0.0)) throw ConfigError("focal_gamma must be non-negative");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (alpha) {
    for (int h = 0; h < kHeads; ++h) {
      if (static_cast<int>((*alpha)[h].size()) != kHeadClasses[h]) {
        throw ConfigError(fmt::format("alpha for {} needs {} weights", kHeadNames[h], kHeadClasses[h]));
      }
    }
  }
}

int best_epoch(std::span<const double> averages) {
  int best = -1;
  for (int e = 0; e < static_cast<int>(averages.size()); ++e) {
    if (best < 0 || averages[e] > averages[best]) best = e;
  }
  return best;
}

std::vector<NamedTensor> snapshot(DayModel<float>& model) {
  std::vector<NamedTensor> out;
  for (const auto* p : model.parameters()) out.push_back({p->name, p->value});
  return out;
}

void restore(DayModel<float>& model, std::span<const NamedTensor> parameters) {
  const auto refs = model.parameters();
  if (refs.size() != parameters.size()) {
    throw Error(fmt::format("checkpoint has {} tensors, model has {}", parameters.size(), refs.size()));
  }
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& src = parameters[i];
    auto& dst = *refs[i];
    if (src.name != dst.name || src.value.rows() != dst.value.rows() || src.value.cols() != dst.value.cols()) {
      throw Error(fmt::format("checkpoint tensor '{}' does not match model tensor '{}'", src.name, dst.name));
    }
    dst.value = src.value;
  }
}

std::vector<HeadLogits> predict_logits(const DayModel<float>& model, std::span<const LabeledInput> days) {
  std::vector<HeadLogits> out;
  out.reserve(days.size());
  for (const auto& day : days) out.push_back(forward_day(model, day.input));
  return out;
}

namespace {

nlohmann::json epoch_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"train_loss", r.train_loss},
          {"val_f1", r.val_f1},
          {"val_average", r.val_average}};
}

constexpr std::uint64_t kShuffleStream = 0x73687566ULL;
constexpr std::uint64_t kDropoutStream = 0x64726f70ULL;

}  // namespace

TrainResult train(ModelKind kind, const ModelConfig& model_config, const BlockConfig& blocks,
                  const TrainConfig& config, std::span<const LabeledInput> train_days,
                  std::span<const LabeledInput> val_days, const TrainLog& log) {
  config.validate();
  if (train_days.empty()) throw Error("training split is empty");
  if (val_days.empty()) throw Error("validation split is empty");

  TrainResult result;
  result.model = make_model<float>(kind, model_config, blocks, config.seed);
  DayModel<float>& model = *result.model;
  const auto params = model.parameters();
  nn::AdamW<float> optimizer(
      params, nn::AdamWConfig{config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});

  std::vector<LabelVector> train_labels, val_labels;
  for (const auto& d : train_days) train_labels.push_back(d.label);
  for (const auto& d : val_days) val_labels.push_back(d.label);
  const FocalAlpha alpha =
      config.balanced_alpha ? balanced_alpha(train_labels) : config.alpha.value_or(unit_alpha());

  if (log) {
    log(nlohmann::json{{"event", "start"},
                       {"model", to_string(kind)},
                       {"parameters", nn::parameter_count(params)},
                       {"train_days", train_days.size()},
                       {"val_days", val_days.size()},
                       {"seed", config.seed}}
            .dump());
  }

  std::vector<std::size_t> order(train_days.size());
  std::array<double, kTotalLogits> logits{};
  std::array<double, kTotalLogits> grad{};
  nn::Vector<float> dlogits(kTotalLogits);
  CheckpointBundle& bundle = result.bundle;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = substream({config.seed, kShuffleStream, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      for (std::size_t k = start; k < end; ++k) {
        const LabeledInput& day = train_days[order[k]];
        Rng dropout_rng =
            substream({config.seed, kDropoutStream, static_cast<std::uint64_t>(epoch), k});
        auto out = model.forward(day.input, &dropout_rng);
        for (int i = 0; i < kTotalLogits; ++i) logits[i] = out.logits(i);
        const double loss = total_loss(logits, day.label, config.focal_gamma, alpha, grad);
        if (!std::isfinite(loss)) {
          throw Error(fmt::format("non-finite loss {} at epoch {} on day '{}' (logits {})", loss, epoch,
                                  day.day_id, fmt::join(logits, ", ")));
        }
        loss_sum += loss;
        for (int i = 0; i < kTotalLogits; ++i) dlogits(i) = static_cast<float>(grad[i]);
        model.backward(*out.trace, dlogits);
      }
      optimizer.step(1.0f / static_cast<float>(end - start));
      optimizer.zero_grad();
    }

    const MetricReport report = evaluate(predict_logits(model, val_days), val_labels);
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(train_days.size());
    record.val_f1 = report.f1;
    record.val_average = report.average;
    bundle.history.push_back(record);
    if (bundle.epoch < 0 || record.val_average > bundle.val_average) {
      bundle.epoch = epoch;
      bundle.val_f1 = record.val_f1;
      bundle.val_average = record.val_average;
      bundle.parameters = snapshot(model);
    }
    if (log) {
      auto j = epoch_json(record);
      j["event"] = "epoch";
      j["best_epoch"] = bundle.epoch;
      log(j.dump());
    }
  }

  restore(model, bundle.parameters);
  if (log) {
    log(nlohmann::json{{"event", "done"}, {"best_epoch", bundle.epoch}, {"val_average", bundle.val_average}}
            .dump());
  }
  return result;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kParamMagic[4] = {'M', 'I', 'S', 'P'};
constexpr std::uint32_t kParamVersion = 1;

}  // namespace

void write_parameters(const std::filesystem::path& path, std::span<const NamedTensor> parameters) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out.write(kParamMagic, 4);
  detail::write_le<std::uint32_t>(out, kParamVersion);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(parameters.size()));
  for (const auto& t : parameters) {
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rows()));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.cols()));
    for (Eigen::Index i = 0; i < t.value.size(); ++i) detail::write_le<float>(out, t.value.data()[i]);
  }
  if (!out) throw Error(fmt::format("failed writing '{}'", path.string()));
}

std::vector<NamedTensor> read_parameters(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(fmt::format("cannot open '{}'", path.string()));
  char magic[4];
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, kParamMagic)) {
    throw ParseError(fmt::format("'{}' is not a parameter file", path.string()));
  }
  if (detail::read_le<std::uint32_t>(in) != kParamVersion) throw ParseError("unsupported parameter version");
  const auto count = detail::read_le<std::uint32_t>(in);
  std::vector<NamedTensor> out(count);
  for (auto& t : out) {
    const auto length = detail::read_le<std::uint32_t>(in);
    if (length > 4096) throw ParseError("parameter name too long");
    t.name.resize(length);
    in.read(t.name.data(), length);
    const auto rows = detail::read_le<std::uint32_t>(in);
    const auto cols = detail::read_le<std::uint32_t>(in);
    t.value.resize(rows, cols);
    for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = detail::read_le<float>(in);
  }
  return out;
}

std::string history_to_json(std::span<const EpochRecord> history) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : history) j.push_back(epoch_json(r));
  return j.dump();
}

std::vector<EpochRecord> history_from_json(const std::string& text) {
  std::vector<EpochRecord> out;
  try {
    for (const auto& e : nlohmann::json::parse(text)) {
      EpochRecord r;
      r.epoch = e.at("epoch").get<int>();
      r.train_loss = e.at("train_loss").get<double>();
      r.val_f1 = e.at("val_f1").get<std::array<double, kHeads>>();
      r.val_average = e.at("val_average").get<double>();
      out.push_back(r);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("metric history: {}", e.what()));
  }
  return out;
}

}  // namespace mislstm
