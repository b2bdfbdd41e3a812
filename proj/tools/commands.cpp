#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "mislstm/ensemble.hpp"
#include "mislstm/imaging.hpp"
#include "mislstm/pipeline.hpp"
#include "mislstm/synthgen.hpp"
#include "run_support.hpp"

namespace mislstm::cli {
namespace {

using nlohmann::json;

json parse_json_file(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

// ---------------------------------------------------------------------------
// Preprocessed data directories

struct LoadedData {
  DayIndex index;
  PreparedDays days;
  std::string normalization;
};

LoadedData load_data(const fs::path& dir, Manifest& manifest) {
  LoadedData data;
  const auto index_path = dir / "days.json";
  data.index = read_day_index(index_path);
  manifest.add_input(index_path);
  const auto settings = parse_json_file(dir / "preprocess.json");
  data.normalization = settings.at("discrete_normalization").get<std::string>();
  manifest.add_input(dir / "preprocess.json");

  auto& days = data.days;
  days.n_subjects = data.index.n_subjects;
  for (std::size_t i = 0; i < data.index.days.size(); ++i) {
    const auto& entry = data.index.days[i];
    const auto grid_path = dir / entry.grid;
    days.grids.push_back(read_grid(grid_path));
    manifest.add_input(grid_path);
    days.labels.push_back(entry.label);
    days.subjects.push_back(entry.subject_index);
    days.day_ids.push_back(entry.id);
    (entry.train ? days.split.train : days.split.val).push_back(i);
  }
  if (days.split.train.empty() || days.split.val.empty()) {
    throw Error(fmt::format("'{}' needs both training and validation days", dir.string()));
  }
  return data;
}

std::map<std::string, LabelVector> label_lookup(const DayIndex& index) {
  std::map<std::string, LabelVector> labels;
  for (const auto& d : index.days) labels[d.id] = d.label;
  return labels;
}

// ---------------------------------------------------------------------------
// Experiment configuration

ExperimentConfig resolve_config(const ExperimentFlags& flags, const LoadedData& data, Manifest& manifest) {
  auto config = ExperimentConfig::desk();
  if (!flags.config.empty()) {
    config.apply_text(read_text(flags.config));
    manifest.add_input(flags.config);
  }
  for (const auto& setting : flags.set) {
    const auto eq = setting.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("--set expects key=value, got '{}'", setting));
    config.apply(setting.substr(0, eq), setting.substr(eq + 1));
  }
  if (flags.seed) config.train.seed = *flags.seed;
  if (flags.n_hours) config.apply("n_hours", std::to_string(*flags.n_hours));
  if (flags.encoding) config.apply("encoding", *flags.encoding);
  if (flags.model) config.apply("model", *flags.model);
  if (flags.no_discrete_branch) config.model.discrete_branch = false;
  // The grids were normalized at preprocessing time; the model must agree.
  config.apply("discrete_normalization", data.normalization);
  config.model.n_subjects = data.index.n_subjects;
  config.blocks.validate();
  config.model.validate();
  config.train.validate();
  return config;
}

std::string default_model_id(const ExperimentConfig& config) {
  return fmt::format("{}_n{}_{}{}_s{}", to_string(config.kind), config.blocks.n_hours,
                     to_string(config.blocks.encoding), config.model.discrete_branch ? "" : "_nodisc",
                     config.train.seed);
}

void write_logits(const fs::path& path, const std::string& model_id, std::span<const LabeledInput> days,
                  std::span<const HeadLogits> logits) {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  for (std::size_t i = 0; i < days.size(); ++i) write_logit_record(out, {days[i].day_id, model_id, logits[i]});
}

std::vector<LogitRecord> read_logits(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
  return read_logit_records(in);
}

std::vector<LabelVector> labels_of(std::span<const LabeledInput> days) {
  std::vector<LabelVector> labels;
  for (const auto& d : days) labels.push_back(d.label);
  return labels;
}

json metrics_json(const std::string& name, const MetricReport& report) {
  return {{"name", name}, {"report", json::parse(report.to_json())}};
}

std::string sanitize(std::string text) {
  std::replace(text.begin(), text.end(), '/', '_');
  return text;
}

struct TrainedRun {
  std::string model_id;
  CheckpointBundle bundle;
  MetricReport val_report;
};

// Trains one configuration and writes its checkpoint directory.
TrainedRun train_run(const LoadedData& data, const ExperimentConfig& config, const std::string& model_id,
                     const fs::path& out, bool quiet, int png_days) {
  fs::create_directories(out);
  const auto train_inputs = make_inputs(data.days, data.days.split.train, config);
  const auto val_inputs = make_inputs(data.days, data.days.split.val, config);

  std::ofstream log_file(out / "train_log.jsonl");
  const TrainLog log = [&](const std::string& line) {
    log_file << line << '\n';
    if (quiet) return;
    const auto event = json::parse(line);
    if (event.at("event") == "epoch") {
      std::cout << fmt::format("[{}] epoch {:>3}  loss {:.4f}  val avg {}\n", model_id,
                               event.at("epoch").get<int>(), event.at("train_loss").get<double>(),
                               format3(event.at("val_average").get<double>()))
                << std::flush;
    }
  };
  auto result = train(config.kind, config.model, config.blocks, config.train, train_inputs, val_inputs, log);

  write_parameters(out / "params.bin", result.bundle.parameters);
  const auto train_logits = predict_logits(*result.model, train_inputs);
  const auto val_logits = predict_logits(*result.model, val_inputs);
  write_logits(out / "logits_train.jsonl", model_id, train_inputs, train_logits);
  write_logits(out / "logits_val.jsonl", model_id, val_inputs, val_logits);
  const auto val_labels = labels_of(val_inputs);
  const auto report = evaluate(std::span<const HeadLogits>(val_logits), std::span<const LabelVector>(val_labels));

  json meta;
  meta["model_id"] = model_id;
  meta["config"] = json::parse(config.to_json());
  meta["seed"] = config.train.seed;
  meta["best_epoch"] = result.bundle.epoch;
  meta["val_f1"] = result.bundle.val_f1;
  meta["val_average"] = result.bundle.val_average;
  meta["history"] = json::parse(history_to_json(result.bundle.history));
  write_text(out / "meta.json", meta.dump(2) + "\n");
  write_text(out / "metrics.json", metrics_json(model_id, report).dump(2) + "\n");

  if (png_days > 0) {
    const auto block_dir = out / "blocks";
    fs::create_directories(block_dir);
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(png_days), data.days.split.val.size());
    for (std::size_t k = 0; k < n; ++k) {
      const auto i = data.days.split.val[k];
      const auto sequence = make_block_sequence(data.days.grids[i], config.blocks);
      for (std::size_t b = 0; b < sequence.images.size(); ++b) {
        write_png(block_dir / fmt::format("{}_b{}.png", sanitize(data.days.day_ids[i]), b), sequence.images[b]);
      }
    }
  }
  return {model_id, std::move(result.bundle), report};
}

std::vector<std::string> train_outputs() {
  return {"params.bin", "meta.json", "metrics.json", "train_log.jsonl", "logits_train.jsonl", "logits_val.jsonl"};
}

}  // namespace

// ---------------------------------------------------------------------------

void run_generate(const GenerateArgs& args, const std::vector<std::string>& arguments) {
  Manifest manifest{"generate", arguments};
  SynthConfig config;
  if (!args.config.empty()) {
    config = SynthConfig::parse(read_text(args.config));
    manifest.add_input(args.config);
  }
  if (args.seed) config.seed = *args.seed;
  if (args.subjects) config.n_subjects = *args.subjects;
  if (args.days) config.days_per_subject = *args.days;
  if (args.strength) config.signal_strength = *args.strength;
  if (args.missing) config.missing_fraction = *args.missing;
  config.validate();

  const fs::path out(args.out);
  OutputLock lock(out);
  write_synthetic(config, out / "sensor.csv", out / "labels.csv");
  write_text(out / "synth.txt", config.to_text());
  manifest.config = {{"synth", config.to_text()}};
  manifest.seeds = {{"synth", config.seed}};
  manifest.outputs = {"sensor.csv", "labels.csv", "synth.txt"};
  manifest.write(out);
  std::cout << fmt::format("wrote {} subjects x {} days to {}\n", config.n_subjects, config.days_per_subject,
                           out.string());
}

void run_preprocess(const PreprocessArgs& args, const std::vector<std::string>& arguments) {
  Manifest manifest{"preprocess", arguments};
  fs::path sensor = args.sensor;
  fs::path labels = args.labels;
  if (!args.input.empty()) {
    if (sensor.empty()) sensor = fs::path(args.input) / "sensor.csv";
    if (labels.empty()) labels = fs::path(args.input) / "labels.csv";
  }
  if (sensor.empty() || labels.empty()) throw ConfigError("preprocess needs --in or both --sensor and --labels");

  auto config = ExperimentConfig::desk();
  if (!args.config.empty()) {
    config.apply_text(read_text(args.config));
    manifest.add_input(args.config);
  }
  if (args.seed) config.split_seed = *args.seed;

  manifest.add_input(sensor);
  manifest.add_input(labels);
  auto dataset = build_dataset(parse_sensor_file(sensor), parse_labels_file(labels));
  const auto prepared = prepare_days(dataset, config.preprocess, config.split_ratio, config.split_seed);

  const fs::path out(args.out);
  OutputLock lock(out);
  fs::create_directories(out / "grids");
  std::vector<std::string> names(static_cast<std::size_t>(dataset.n_subjects()));
  for (const auto& [name, idx] : dataset.subject_index) names[static_cast<std::size_t>(idx)] = name;

  DayIndex index;
  index.n_subjects = prepared.n_subjects;
  std::vector<bool> is_train(prepared.grids.size(), false);
  for (auto i : prepared.split.train) is_train[i] = true;
  for (std::size_t i = 0; i < prepared.grids.size(); ++i) {
    const auto& record = dataset.days[i].record;
    DayEntry entry;
    entry.id = prepared.day_ids[i];
    entry.subject = record.subject_id;
    entry.subject_index = prepared.subjects[i];
    entry.label = prepared.labels[i];
    entry.train = is_train[i];
    entry.grid = fmt::format("grids/{}_{}.bin", record.subject_id, format_date(record.date));
    write_grid(out / entry.grid, prepared.grids[i]);
    index.days.push_back(std::move(entry));
  }
  write_day_index(out / "days.json", index);
  write_text(out / "stats.json", stats_to_json(prepared.stats) + "\n");
  const auto config_json = json::parse(config.to_json());
  json settings{{"split_ratio", config.split_ratio},
                {"split_seed", config.split_seed},
                {"discrete_normalization", config.preprocess.discrete == DiscreteNormalization::MaxScale
                                               ? "max_scale"
                                               : "z_score"},
                {"dropped_unlabeled", dataset.dropped_unlabeled}};
  write_text(out / "preprocess.json", settings.dump(2) + "\n");

  manifest.config = {{"preprocess", config_json.at("preprocess")}, {"split", settings}};
  manifest.seeds = {{"split", config.split_seed}};
  manifest.outputs = {"days.json", "stats.json", "preprocess.json", "grids/"};
  manifest.write(out);
  std::cout << fmt::format("{} days ({} train, {} val, {} unlabeled dropped) -> {}\n", prepared.grids.size(),
                           prepared.split.train.size(), prepared.split.val.size(), dataset.dropped_unlabeled,
                           out.string());
}

void run_train(const TrainArgs& args, const std::vector<std::string>& arguments) {
  Manifest manifest{"train", arguments};
  const auto data = load_data(args.data, manifest);
  const auto config = resolve_config(args.flags, data, manifest);
  const auto model_id = args.id.empty() ? default_model_id(config) : args.id;

  const fs::path out(args.out);
  OutputLock lock(out);
  const auto run = train_run(data, config, model_id, out, args.quiet, args.png_days);

  manifest.config = json::parse(config.to_json());
  manifest.seeds = {{"train", config.train.seed}, {"split", json::parse(read_text(fs::path(args.data) / "preprocess.json")).at("split_seed")}};
  manifest.outputs = train_outputs();
  manifest.write(out);
  const std::vector<NamedReport> rows{{model_id, run.val_report}};
  std::cout << fmt::format("best epoch {}\n", run.bundle.epoch) << format_table(rows);
}

void run_evaluate(const EvaluateArgs& args, const std::vector<std::string>& arguments) {
  Manifest manifest{"evaluate", arguments};
  if (args.checkpoint.empty() == args.logits.empty()) {
    throw ConfigError("evaluate needs exactly one of --checkpoint or --logits");
  }
  if (args.split != "train" && args.split != "val" && args.split != "all") {
    throw ConfigError(fmt::format("unknown split '{}'", args.split));
  }
  std::string name;
  std::vector<HeadLogits> logits;
  std::vector<LabelVector> labels;

  if (!args.checkpoint.empty()) {
    const auto data = load_data(args.data, manifest);
    const fs::path dir(args.checkpoint);
    const auto meta = parse_json_file(dir / "meta.json");
    manifest.add_input(dir / "meta.json");
    manifest.add_input(dir / "params.bin");
    auto config = ExperimentConfig::from_json(meta.at("config").dump());
    if (config.model.n_subjects != data.index.n_subjects) {
      throw ConfigError("checkpoint and data disagree on the number of subjects");
    }
    auto model = make_model<float>(config.kind, config.model, config.blocks, config.train.seed);
    restore(*model, read_parameters(dir / "params.bin"));
    std::vector<std::size_t> indices;
    if (args.split != "val") indices.insert(indices.end(), data.days.split.train.begin(), data.days.split.train.end());
    if (args.split != "train") indices.insert(indices.end(), data.days.split.val.begin(), data.days.split.val.end());
    std::sort(indices.begin(), indices.end());
    const auto inputs = make_inputs(data.days, indices, config);
    logits = predict_logits(*model, inputs);
    labels = labels_of(inputs);
    name = meta.at("model_id").get<std::string>();
    manifest.config = meta.at("config");
    manifest.seeds = {{"train", meta.at("seed")}};
  } else {
    const auto index = read_day_index(fs::path(args.data) / "days.json");
    manifest.add_input(fs::path(args.data) / "days.json");
    manifest.add_input(args.logits);
    const auto lookup = label_lookup(index);
    for (const auto& record : read_logits(args.logits)) {
      const auto it = lookup.find(record.day_id);
      if (it == lookup.end()) throw Error(fmt::format("day '{}' has no label", record.day_id));
      logits.push_back(record.logits);
      labels.push_back(it->second);
      if (name.empty()) name = record.model_id;
    }
  }
  if (logits.empty()) throw Error("nothing to evaluate");
  const auto report = evaluate(std::span<const HeadLogits>(logits), std::span<const LabelVector>(labels));
  const std::vector<NamedReport> rows{{name, report}};
  std::cout << format_table(rows);

  if (!args.out.empty()) {
    const fs::path out(args.out);
    OutputLock lock(out);
    write_text(out / "metrics.json", metrics_json(name, report).dump(2) + "\n");
    manifest.outputs = {"metrics.json"};
    manifest.write(out);
  }
}

void run_ensemble(const EnsembleArgs& args, const std::vector<std::string>& arguments) {
  Manifest manifest{"ensemble", arguments};
  struct Member {
    std::string id;
    fs::path val;
    fs::path eval;
  };
  std::vector<Member> members;
  fs::path data_dir = args.data;
  if (!args.pool.empty()) {
    const auto pool = parse_json_file(args.pool);
    manifest.add_input(args.pool);
    const fs::path base = fs::path(args.pool).parent_path();
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
    if (data_dir.empty() && pool.contains("data")) data_dir = resolve(pool.at("data"));
    for (const auto& m : pool.at("models")) {
      Member member{m.value("id", ""), resolve(m.at("val")), {}};
      member.eval = m.contains("eval") ? resolve(m.at("eval")) : member.val;
      members.push_back(std::move(member));
    }
  }
  if (!args.eval_logits.empty() && args.eval_logits.size() != args.logits.size()) {
    throw ConfigError("--eval-logits must be given once per --logits file");
  }
  for (std::size_t i = 0; i < args.logits.size(); ++i) {
    members.push_back({"", args.logits[i], args.eval_logits.empty() ? fs::path(args.logits[i]) : fs::path(args.eval_logits[i])});
  }
  if (members.empty()) throw ConfigError("ensemble needs --pool or at least one --logits file");
  if (data_dir.empty()) throw ConfigError("ensemble needs --data (or a pool with a data entry)");
  if (!(args.quantile >= 0.0 && args.quantile <= 1.0)) throw ConfigError("--quantile must lie in [0, 1]");
  const auto margin = args.margin == "top2"   ? MarginKind::TopTwo
                      : args.margin == "top3" ? MarginKind::TopThree
                                              : throw ConfigError(fmt::format("unknown margin '{}'", args.margin));
  const std::vector<std::string> all_methods{"ualre", "soft", "hard"};
  std::vector<std::string> methods;
  if (args.method == "all") {
    methods = all_methods;
  } else if (std::find(all_methods.begin(), all_methods.end(), args.method) != all_methods.end()) {
    methods = {args.method};
  } else {
    throw ConfigError(fmt::format("unknown method '{}'", args.method));
  }

  const auto index = read_day_index(data_dir / "days.json");
  manifest.add_input(data_dir / "days.json");
  const auto lookup = label_lookup(index);

  // Every member is aligned to the day order of the first member's file.
  auto load_aligned = [&](const fs::path& path, std::vector<std::string>& order, std::string& id) {
    manifest.add_input(path);
    const auto records = read_logits(path);
    if (id.empty() && !records.empty()) id = records.front().model_id;
    if (order.empty()) {
      for (const auto& r : records) order.push_back(r.day_id);
    }
    std::map<std::string, HeadLogits> by_day;
    for (const auto& r : records) by_day[r.day_id] = r.logits;
    std::vector<HeadLogits> aligned;
    for (const auto& day : order) {
      const auto it = by_day.find(day);
      if (it == by_day.end()) throw Error(fmt::format("'{}' has no logits for day '{}'", path.string(), day));
      aligned.push_back(it->second);
    }
    if (by_day.size() != order.size()) throw Error(fmt::format("'{}' covers different days", path.string()));
    return aligned;
  };
  auto labels_for = [&](const std::vector<std::string>& order) {
    std::vector<LabelVector> labels;
    for (const auto& day : order) {
      const auto it = lookup.find(day);
      if (it == lookup.end()) throw Error(fmt::format("day '{}' has no label", day));
      labels.push_back(it->second);
    }
    return labels;
  };

  std::vector<std::string> val_order, eval_order;
  std::vector<std::vector<HeadLogits>> val_logits, eval_logits;
  std::vector<std::string> ids;
  for (auto& m : members) {
    val_logits.push_back(load_aligned(m.val, val_order, m.id));
    std::string unused = m.id;
    eval_logits.push_back(load_aligned(m.eval, eval_order, unused));
    if (m.id.empty()) m.id = fmt::format("model{}", ids.size());
    ids.push_back(m.id);
  }
  const auto val_labels = labels_for(val_order);
  const auto eval_labels = labels_for(eval_order);

  std::vector<double> val_average;
  std::vector<NamedReport> rows;
  for (std::size_t m = 0; m < members.size(); ++m) {
    val_average.push_back(evaluate(std::span<const HeadLogits>(val_logits[m]), val_labels).average);
    rows.push_back({ids[m], evaluate(std::span<const HeadLogits>(eval_logits[m]), eval_labels)});
  }

  EnsemblePool pool;
  pool.model_ids = ids;
  pool.logits = eval_logits;
  pool.best_index = select_best(val_average);
  pool.margin = margin;
  const bool need_thresholds = std::find(methods.begin(), methods.end(), "ualre") != methods.end();
  if (need_thresholds) pool.thresholds = fit_thresholds(val_logits, args.quantile, margin);
  pool.validate();

  std::map<std::string, std::vector<LabelVector>> decisions;
  json report;
  report["best_model"] = ids[static_cast<std::size_t>(pool.best_index)];
  report["quantile"] = args.quantile;
  report["margin"] = args.margin;
  report["models"] = json::array();
  for (std::size_t m = 0; m < ids.size(); ++m) {
    report["models"].push_back({{"id", ids[m]},
                                {"val_average", val_average[m]},
                                {"report", json::parse(rows[m].report.to_json())}});
  }
  report["methods"] = json::object();
  for (const auto& method : methods) {
    decisions[method] = method == "ualre" ? ualre(pool) : method == "soft" ? soft_vote(pool) : hard_vote(pool);
    const auto r = evaluate(std::span<const LabelVector>(decisions[method]), eval_labels);
    report["methods"][method] = json::parse(r.to_json());
    rows.push_back({fmt::format("{} ensemble", method), r});
  }

  const fs::path out(args.out);
  OutputLock lock(out);
  write_text(out / "ensemble_report.json", report.dump(2) + "\n");
  std::ostringstream lines;
  for (std::size_t d = 0; d < eval_order.size(); ++d) {
    json j{{"day_id", eval_order[d]}};
    for (const auto& method : methods) j[method] = decisions[method][d].classes();
    lines << j.dump() << '\n';
  }
  write_text(out / "decisions.jsonl", lines.str());
  manifest.outputs = {"ensemble_report.json", "decisions.jsonl", "report.txt"};
  if (pool.thresholds) {
    write_text(out / "thresholds.json", thresholds_to_json(ids, *pool.thresholds) + "\n");
    manifest.outputs.push_back("thresholds.json");
  }
  const auto table = format_table(rows);
  write_text(out / "report.txt", table);
  manifest.config = {{"method", args.method}, {"quantile", args.quantile}, {"margin", args.margin}, {"models", ids}};
  manifest.write(out);
  std::cout << fmt::format("best model: {}\n", report["best_model"].get<std::string>()) << table;
}

void run_ablate(const AblateArgs& args, const std::vector<std::string>& arguments) {
  Manifest manifest{"ablate", arguments};
  const auto data = load_data(args.data, manifest);
  if (args.n_hours.empty() || args.encodings.empty()) throw ConfigError("ablate needs at least one N and encoding");
  for (const auto& e : args.encodings) parse_encoding(e);

  const fs::path out(args.out);
  OutputLock lock(out);
  json grid = json::array();
  json runs = json::array();
  for (const auto& encoding : args.encodings) {
    json row = json::array();
    for (int n : args.n_hours) {
      auto flags = args.flags;
      flags.n_hours = n;
      flags.encoding = encoding;
      const auto config = resolve_config(flags, data, manifest);
      const auto model_id = default_model_id(config);
      const auto run = train_run(data, config, model_id, out / "runs" / model_id, args.quiet, 0);
      row.push_back(run.val_report.average);
      runs.push_back({{"id", model_id}, {"dir", (fs::path("runs") / model_id).string()},
                      {"config", json::parse(config.to_json())}});
    }
    grid.push_back(row);
  }

  std::string table = fmt::format("{:<18}", "Encoding");
  for (int n : args.n_hours) table += fmt::format(" {:>6}", fmt::format("N={}", n));
  table += '\n';
  for (std::size_t e = 0; e < args.encodings.size(); ++e) {
    table += fmt::format("{:<18}", args.encodings[e]);
    for (std::size_t k = 0; k < args.n_hours.size(); ++k) table += fmt::format(" {:>6}", format3(grid[e][k]));
    table += '\n';
  }
  json ablation{{"encodings", args.encodings}, {"n_hours", args.n_hours}, {"average", grid}, {"runs", runs}};
  write_text(out / "ablation.json", ablation.dump(2) + "\n");
  write_text(out / "ablation.txt", table);
  manifest.config = {{"encodings", args.encodings}, {"n_hours", args.n_hours}, {"runs", runs}};
  manifest.seeds = {{"train", runs.empty() ? json() : runs.front().at("config").at("train").at("seed")}};
  manifest.outputs = {"ablation.json", "ablation.txt", "runs/"};
  manifest.write(out);
  std::cout << table;
}

void run_report(const ReportArgs& args, const std::vector<std::string>& arguments) {
  Manifest manifest{"report", arguments};
  std::vector<fs::path> files;
  for (const auto& input : args.inputs) {
    if (fs::is_regular_file(input)) {
      files.emplace_back(input);
      continue;
    }
    if (!fs::is_directory(input)) throw Error(fmt::format("'{}' does not exist", input));
    for (const auto& entry : fs::recursive_directory_iterator(input)) {
      const auto name = entry.path().filename();
      if (name == "metrics.json" || name == "ensemble_report.json" || name == "ablation.json") {
        files.push_back(entry.path());
      }
    }
  }
  std::sort(files.begin(), files.end());

  std::vector<NamedReport> rows;
  std::string ablation_text;
  for (const auto& path : files) {
    const auto j = parse_json_file(path);
    manifest.add_input(path);
    const auto name = path.filename();
    if (name == "ensemble_report.json") {
      for (const auto& [method, r] : j.at("methods").items()) {
        rows.push_back({fmt::format("{} ensemble ({})", method, path.parent_path().filename().string()),
                        MetricReport::from_json(r.dump())});
      }
    } else if (name == "ablation.json") {
      ablation_text += fmt::format("{}\n{:<18}", path.parent_path().string(), "Encoding");
      for (int n : j.at("n_hours")) ablation_text += fmt::format(" {:>6}", fmt::format("N={}", n));
      ablation_text += '\n';
      for (std::size_t e = 0; e < j.at("encodings").size(); ++e) {
        ablation_text += fmt::format("{:<18}", j.at("encodings")[e].get<std::string>());
        for (const auto& v : j.at("average")[e]) ablation_text += fmt::format(" {:>6}", format3(v.get<double>()));
        ablation_text += '\n';
      }
    } else {
      rows.push_back({j.at("name").get<std::string>(), MetricReport::from_json(j.at("report").dump())});
    }
  }
  if (rows.empty() && ablation_text.empty()) throw Error("no stored metrics found");

  std::string text;
  if (!rows.empty()) text += format_table(rows);
  if (!ablation_text.empty()) text += (text.empty() ? "" : "\n") + ablation_text;

  const fs::path out(args.out);
  OutputLock lock(out);
  write_text(out / "report.txt", text);
  manifest.outputs = {"report.txt"};
  if (!rows.empty()) {
    write_bar_chart(out / "report.png", rows);
    manifest.outputs.push_back("report.png");
  }
  manifest.write(out);
  std::cout << text;
}

}  // namespace mislstm::cli
