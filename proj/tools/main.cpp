#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "mislstm/types.hpp"

namespace {

using namespace mislstm::cli;

template <class T>
void add_optional(CLI::App* app, const std::string& name, std::optional<T>& target, const std::string& help) {
  app->add_option_function<T>(name, [&target](const T& value) { target = value; }, help);
}

void add_experiment_flags(CLI::App* app, ExperimentFlags& flags, bool single_geometry) {
  app->add_option("--config", flags.config, "key=value experiment configuration file")->check(CLI::ExistingFile);
  app->add_option("--set", flags.set, "extra key=value override (repeatable)");
  add_optional(app, "--seed", flags.seed, "training seed");
  if (single_geometry) {
    add_optional(app, "--n-hours", flags.n_hours, "block length in hours (must divide 24)");
    app->add_option_function<std::string>(
           "--encoding", [&flags](const std::string& v) { flags.encoding = v; }, "image encoding")
        ->check(CLI::IsMember({"multi_channel", "stacked_vertical"}));
  }
  app->add_option_function<std::string>(
         "--model", [&flags](const std::string& v) { flags.model = v; }, "model kind")
      ->check(CLI::IsMember({"mis_lstm", "lstm", "cnn1d", "cnn2d"}));
  app->add_flag("--no-discrete-branch", flags.no_discrete_branch,
                "route the discrete features into the image instead of the 1D branch");
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> arguments(argv, argv + argc);
  CLI::App app{"MIS-LSTM lifelog sleep and stress prediction"};
  app.require_subcommand(1);

  GenerateArgs generate;
  auto* gen = app.add_subcommand("generate", "write a synthetic lifelog dataset as CSV");
  gen->add_option("--config", generate.config, "key=value synthetic configuration file")->check(CLI::ExistingFile);
  add_optional(gen, "--seed", generate.seed, "generator seed");
  add_optional(gen, "--subjects", generate.subjects, "number of subjects");
  add_optional(gen, "--days", generate.days, "days per subject");
  add_optional(gen, "--strength", generate.strength, "planted signal strength");
  add_optional(gen, "--missing", generate.missing, "fraction of each channel's day dropped");
  gen->add_option("--out", generate.out, "output directory")->required();

  PreprocessArgs preprocess;
  auto* pre = app.add_subcommand("preprocess", "build the grid cache, split and training statistics");
  pre->add_option("--in", preprocess.input, "directory with sensor.csv and labels.csv");
  pre->add_option("--sensor", preprocess.sensor, "sensor CSV")->check(CLI::ExistingFile);
  pre->add_option("--labels", preprocess.labels, "labels CSV")->check(CLI::ExistingFile);
  pre->add_option("--config", preprocess.config, "key=value experiment configuration file")
      ->check(CLI::ExistingFile);
  add_optional(pre, "--seed", preprocess.seed, "split seed");
  pre->add_option("--out", preprocess.out, "output directory")->required();

  TrainArgs train;
  auto* tr = app.add_subcommand("train", "train one model and dump its checkpoint and logits");
  tr->add_option("--data", train.data, "preprocessed data directory")->required()->check(CLI::ExistingDirectory);
  add_experiment_flags(tr, train.flags, true);
  tr->add_option("--id", train.id, "model identifier used in logit files");
  tr->add_option("--png", train.png_days, "dump block images of the first N validation days");
  tr->add_flag("--quiet", train.quiet, "do not print per-epoch progress");
  tr->add_option("--out", train.out, "output directory")->required();

  EvaluateArgs evaluate;
  auto* ev = app.add_subcommand("evaluate", "score a checkpoint or a logit file");
  ev->add_option("--data", evaluate.data, "preprocessed data directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--checkpoint", evaluate.checkpoint, "training output directory")->check(CLI::ExistingDirectory);
  ev->add_option("--logits", evaluate.logits, "logit JSONL file")->check(CLI::ExistingFile);
  ev->add_option("--split", evaluate.split, "train, val or all (checkpoint only)")
      ->check(CLI::IsMember({"train", "val", "all"}));
  ev->add_option("--out", evaluate.out, "write metrics.json and a manifest here");

  EnsembleArgs ensemble;
  auto* en = app.add_subcommand("ensemble", "combine model logits by UALRE, soft or hard voting");
  en->add_option("--data", ensemble.data, "preprocessed data directory (labels)")->check(CLI::ExistingDirectory);
  en->add_option("--pool", ensemble.pool, "pool manifest JSON")->check(CLI::ExistingFile);
  en->add_option("--logits", ensemble.logits, "validation logits of one model (repeatable)")
      ->check(CLI::ExistingFile);
  en->add_option("--eval-logits", ensemble.eval_logits, "logits to ensemble, aligned with --logits")
      ->check(CLI::ExistingFile);
  en->add_option("--method", ensemble.method, "ualre, soft, hard or all")
      ->check(CLI::IsMember({"ualre", "soft", "hard", "all"}));
  en->add_option("--quantile", ensemble.quantile, "margin quantile for the UALRE thresholds")
      ->check(CLI::Range(0.0, 1.0));
  en->add_option("--margin", ensemble.margin, "top2 or top3")->check(CLI::IsMember({"top2", "top3"}));
  en->add_option("--out", ensemble.out, "output directory")->required();

  AblateArgs ablate;
  auto* ab = app.add_subcommand("ablate", "sweep block length and encoding");
  ab->add_option("--data", ablate.data, "preprocessed data directory")->required()->check(CLI::ExistingDirectory);
  add_experiment_flags(ab, ablate.flags, false);
  ab->add_option("--n-hours", ablate.n_hours, "block lengths to sweep")->delimiter(',');
  ab->add_option("--encoding", ablate.encodings, "encodings to sweep")
      ->delimiter(',')
      ->check(CLI::IsMember({"multi_channel", "stacked_vertical"}));
  ab->add_flag("--quiet", ablate.quiet, "do not print per-epoch progress");
  ab->add_option("--out", ablate.out, "output directory")->required();

  ReportArgs report;
  auto* re = app.add_subcommand("report", "render stored metrics as tables and plots");
  re->add_option("--in", report.inputs, "directories or metric files to collect")->required();
  re->add_option("--out", report.out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) run_generate(generate, arguments);
    if (pre->parsed()) run_preprocess(preprocess, arguments);
    if (tr->parsed()) run_train(train, arguments);
    if (ev->parsed()) run_evaluate(evaluate, arguments);
    if (en->parsed()) run_ensemble(ensemble, arguments);
    if (ab->parsed()) run_ablate(ablate, arguments);
    if (re->parsed()) run_report(report, arguments);
  } catch (const mislstm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
