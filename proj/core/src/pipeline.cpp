#include "mislstm/pipeline.hpp"

#include <charconv>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "mislstm/imaging.hpp"

namespace mislstm {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) throw ConfigError(fmt::format("{}: invalid number '{}'", key, text));
  return value;
}

bool parse_flag(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, text));
}

std::vector<std::string_view> split_list(std::string_view text) {
  std::vector<std::string_view> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    out.push_back(trim(text.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

std::string_view to_string(DiscreteNormalization n) {
  return n == DiscreteNormalization::MaxScale ? "max_scale" : "z_score";
}

DiscreteNormalization parse_normalization(std::string_view text) {
  if (text == "max_scale") return DiscreteNormalization::MaxScale;
  if (text == "z_score") return DiscreteNormalization::ZScore;
  throw ConfigError(fmt::format("unknown discrete normalization '{}'", text));
}

}  // namespace

ExperimentConfig ExperimentConfig::desk() {
  ExperimentConfig c;
  c.model = ModelConfig::desk();
  c.train = TrainConfig::desk();
  return c;
}

void ExperimentConfig::apply(std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  auto integer = [&] { return parse_number<int>(key, value); };
  auto real = [&] { return parse_number<double>(key, value); };
  auto flag = [&] { return parse_flag(key, value); };

  if (key == "preset") {
    if (value == "desk") {
      *this = desk();
    } else if (value == "full") {
      *this = defaults();
    } else {
      throw ConfigError(fmt::format("unknown preset '{}'", value));
    }
  } else if (key == "model") {
    kind = parse_model_kind(value);
  } else if (key == "n_hours") {
    blocks.n_hours = integer();
  } else if (key == "raster_height") {
    blocks.raster_height = integer();
  } else if (key == "value_lo") {
    blocks.value_lo = real();
  } else if (key == "value_hi") {
    blocks.value_hi = real();
  } else if (key == "encoding") {
    blocks.encoding = parse_encoding(value);
  } else if (key == "line_fill") {
    blocks.line_fill = flag();
  } else if (key == "lstm_hidden") {
    model.lstm_hidden = integer();
  } else if (key == "lstm_layers") {
    model.lstm_layers = integer();
  } else if (key == "subject_embed_dim") {
    model.subject_embed_dim = integer();
  } else if (key == "cbam_reduction") {
    model.cbam_reduction = integer();
  } else if (key == "cbam_kernel") {
    model.cbam_kernel = integer();
  } else if (key == "cbam_placement") {
    model.cbam_placement = parse_cbam_placement(value);
  } else if (key == "dropout") {
    model.dropout = real();
  } else if (key == "discrete_branch") {
    model.discrete_branch = flag();
  } else if (key == "stem_kernel") {
    model.continuous.stem_kernel = integer();
  } else if (key == "stem_stride") {
    model.continuous.stem_stride = integer();
  } else if (key == "stem_width") {
    model.continuous.stem_width = integer();
  } else if (key == "stages") {
    model.continuous.stages.clear();
    for (auto item : split_list(value)) {
      const auto colon = item.find(':');
      if (colon == std::string_view::npos) throw ConfigError("stages: expected width:stride pairs");
      model.continuous.stages.push_back(
          {parse_number<int>(key, item.substr(0, colon)), parse_number<int>(key, item.substr(colon + 1))});
    }
  } else if (key == "use_se") {
    model.continuous.use_squeeze_excitation = flag();
  } else if (key == "se_reduction") {
    model.continuous.se_reduction = integer();
  } else if (key == "embed_dim") {
    model.continuous.embed_dim = integer();
  } else if (key == "kernel_sizes") {
    model.discrete.kernel_sizes.clear();
    for (auto item : split_list(value)) model.discrete.kernel_sizes.push_back(parse_number<int>(key, item));
  } else if (key == "filters_per_size") {
    model.discrete.filters_per_size = integer();
  } else if (key == "learning_rate") {
    train.learning_rate = real();
  } else if (key == "batch_size") {
    train.batch_size = integer();
  } else if (key == "epochs") {
    train.epochs = integer();
  } else if (key == "focal_gamma") {
    train.focal_gamma = real();
  } else if (key == "balanced_alpha") {
    train.balanced_alpha = flag();
  } else if (key == "weight_decay") {
    train.weight_decay = real();
  } else if (key == "seed") {
    train.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "split_ratio") {
    split_ratio = real();
  } else if (key == "split_seed") {
    split_seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "discrete_normalization") {
    preprocess.discrete = parse_normalization(value);
  } else {
    throw ConfigError(fmt::format("unknown setting '{}'", key));
  }
}

void ExperimentConfig::apply_text(std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto newline = text.find('\n');
    std::string_view line = trim(text.substr(0, newline));
    text = newline == std::string_view::npos ? std::string_view{} : text.substr(newline + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(fmt::format("expected key=value, got '{}'", line), line_no);
    try {
      apply(line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
}

std::string ExperimentConfig::to_json() const {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : model.continuous.stages) stages.push_back({s.width, s.stride});
  nlohmann::json j;
  j["model"] = to_string(kind);
  j["blocks"] = {{"n_hours", blocks.n_hours},         {"raster_height", blocks.raster_height},
                 {"value_lo", blocks.value_lo},       {"value_hi", blocks.value_hi},
                 {"encoding", to_string(blocks.encoding)}, {"line_fill", blocks.line_fill}};
  j["network"] = {{"lstm_hidden", model.lstm_hidden},
                  {"lstm_layers", model.lstm_layers},
                  {"subject_embed_dim", model.subject_embed_dim},
                  {"n_subjects", model.n_subjects},
                  {"cbam_reduction", model.cbam_reduction},
                  {"cbam_kernel", model.cbam_kernel},
                  {"cbam_placement", to_string(model.cbam_placement)},
                  {"dropout", model.dropout},
                  {"discrete_branch", model.discrete_branch},
                  {"stem_kernel", model.continuous.stem_kernel},
                  {"stem_stride", model.continuous.stem_stride},
                  {"stem_width", model.continuous.stem_width},
                  {"stages", stages},
                  {"use_se", model.continuous.use_squeeze_excitation},
                  {"se_reduction", model.continuous.se_reduction},
                  {"embed_dim", model.continuous.embed_dim},
                  {"kernel_sizes", model.discrete.kernel_sizes},
                  {"filters_per_size", model.discrete.filters_per_size}};
  j["train"] = {{"learning_rate", train.learning_rate}, {"batch_size", train.batch_size},
                {"epochs", train.epochs},               {"focal_gamma", train.focal_gamma},
                {"balanced_alpha", train.balanced_alpha}, {"weight_decay", train.weight_decay},
                {"seed", train.seed}};
  if (train.alpha) j["train"]["alpha"] = *train.alpha;
  j["preprocess"] = {{"clip_lo", preprocess.clip_lo},
                     {"clip_hi", preprocess.clip_hi},
                     {"discrete_normalization", to_string(preprocess.discrete)}};
  j["split"] = {{"ratio", split_ratio}, {"seed", split_seed}};
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  ExperimentConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.kind = parse_model_kind(j.at("model").get<std::string>());
    const auto& b = j.at("blocks");
    c.blocks.n_hours = b.at("n_hours");
    c.blocks.raster_height = b.at("raster_height");
    c.blocks.value_lo = b.at("value_lo");
    c.blocks.value_hi = b.at("value_hi");
    c.blocks.encoding = parse_encoding(b.at("encoding").get<std::string>());
    c.blocks.line_fill = b.at("line_fill");
    const auto& n = j.at("network");
    c.model.lstm_hidden = n.at("lstm_hidden");
    c.model.lstm_layers = n.at("lstm_layers");
    c.model.subject_embed_dim = n.at("subject_embed_dim");
    c.model.n_subjects = n.at("n_subjects");
    c.model.cbam_reduction = n.at("cbam_reduction");
    c.model.cbam_kernel = n.at("cbam_kernel");
    c.model.cbam_placement = parse_cbam_placement(n.at("cbam_placement").get<std::string>());
    c.model.dropout = n.at("dropout");
    c.model.discrete_branch = n.at("discrete_branch");
    c.model.continuous.stem_kernel = n.at("stem_kernel");
    c.model.continuous.stem_stride = n.at("stem_stride");
    c.model.continuous.stem_width = n.at("stem_width");
    c.model.continuous.stages.clear();
    for (const auto& s : n.at("stages")) c.model.continuous.stages.push_back({s.at(0), s.at(1)});
    c.model.continuous.use_squeeze_excitation = n.at("use_se");
    c.model.continuous.se_reduction = n.at("se_reduction");
    c.model.continuous.embed_dim = n.at("embed_dim");
    c.model.discrete.kernel_sizes = n.at("kernel_sizes").get<std::vector<int>>();
    c.model.discrete.filters_per_size = n.at("filters_per_size");
    const auto& t = j.at("train");
    c.train.learning_rate = t.at("learning_rate");
    c.train.batch_size = t.at("batch_size");
    c.train.epochs = t.at("epochs");
    c.train.focal_gamma = t.at("focal_gamma");
    c.train.balanced_alpha = t.at("balanced_alpha");
    c.train.weight_decay = t.at("weight_decay");
    c.train.seed = t.at("seed");
    if (t.contains("alpha")) c.train.alpha = t.at("alpha").get<FocalAlpha>();
    const auto& p = j.at("preprocess");
    c.preprocess.clip_lo = p.at("clip_lo");
    c.preprocess.clip_hi = p.at("clip_hi");
    c.preprocess.discrete = parse_normalization(p.at("discrete_normalization").get<std::string>());
    c.split_ratio = j.at("split").at("ratio");
    c.split_seed = j.at("split").at("seed");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("experiment config: {}", e.what()));
  }
  return c;
}

// ---------------------------------------------------------------------------

std::string day_id(const DayRecord& record) {
  return fmt::format("{}/{}", record.subject_id, format_date(record.date));
}

PreparedDays prepare_days(const Dataset& dataset, const PreprocessConfig& preprocess, double ratio,
                          std::uint64_t split_seed) {
  PreparedDays out;
  out.n_subjects = dataset.n_subjects();
  for (const auto& day : dataset.days) {
    out.labels.push_back(day.label);
    out.subjects.push_back(day.subject);
    out.day_ids.push_back(day_id(day.record));
  }
  out.split = stratified_subject_split(out.subjects, ratio, split_seed);

  std::vector<RawDayGrid> raw;
  raw.reserve(dataset.days.size());
  for (const auto& day : dataset.days) raw.push_back(resample_day(day.record, preprocess));
  std::vector<RawDayGrid> training;
  for (std::size_t i : out.split.train) training.push_back(raw[i]);
  out.stats = fit_stats(training, preprocess);
  for (const auto& r : raw) out.grids.push_back(standardize(r, out.stats, preprocess));
  return out;
}

RowMatrixF day_sequence(const DayFeatureGrid& grid) {
  RowMatrixF seq(kContinuousChannels + kDiscreteFeatures, kWindowsPerDay);
  for (int k = 0; k < kContinuousChannels; ++k) {
    for (int w = 0; w < kWindowsPerDay; ++w) {
      seq(k, w) = grid.continuous.row(k).segment(w * kMinutesPerWindow, kMinutesPerWindow).mean();
    }
  }
  seq.bottomRows(kDiscreteFeatures) = grid.discrete;
  return seq;
}

DayInput make_day_input(const DayFeatureGrid& grid, int subject, ModelKind kind, const BlockConfig& blocks,
                        bool discrete_branch, DiscreteNormalization normalization) {
  DayInput input;
  input.subject = subject;
  switch (kind) {
    case ModelKind::LstmBaseline:
    case ModelKind::Cnn1dBaseline:
      input.sequences.push_back(day_sequence(grid));
      return input;
    case ModelKind::Cnn2dBaseline:
      input.images.push_back(rasterize_sparse(grid.continuous, blocks));
      return input;
    case ModelKind::MisLstm:
      break;
  }
  BlockSlices slices = segment_blocks(grid, blocks);
  if (discrete_branch) {
    for (const auto& slice : slices.continuous) input.images.push_back(rasterize_sparse(slice, blocks));
    input.sequences = std::move(slices.discrete);
    return input;
  }
  std::vector<ValueRange> ranges(kContinuousChannels, ValueRange{blocks.value_lo, blocks.value_hi});
  const ValueRange discrete_range = normalization == DiscreteNormalization::MaxScale
                                        ? ValueRange{0.0, 1.0}
                                        : ValueRange{blocks.value_lo, blocks.value_hi};
  ranges.resize(kContinuousChannels + kDiscreteFeatures, discrete_range);
  const int minutes = blocks.block_minutes();
  for (std::size_t b = 0; b < slices.continuous.size(); ++b) {
    RowMatrixF combined(kContinuousChannels + kDiscreteFeatures, minutes);
    combined.topRows(kContinuousChannels) = slices.continuous[b];
    for (int t = 0; t < minutes; ++t) {
      combined.block(kContinuousChannels, t, kDiscreteFeatures, 1) =
          slices.discrete[b].col(t / kMinutesPerWindow);
    }
    input.images.push_back(rasterize_sparse(combined, blocks, ranges));
  }
  return input;
}

std::vector<LabeledInput> make_inputs(const PreparedDays& days, std::span<const std::size_t> indices,
                                      const ExperimentConfig& config) {
  std::vector<LabeledInput> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    out.push_back({make_day_input(days.grids[i], days.subjects[i], config.kind, config.blocks,
                                  config.model.discrete_branch, config.preprocess.discrete),
                   days.labels[i], days.day_ids[i]});
  }
  return out;
}

}  // namespace mislstm
