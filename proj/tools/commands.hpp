#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mislstm::cli {

/// Flags shared by the experiment commands. Unset optionals leave the
/// configuration file (or the desk preset) untouched.
struct ExperimentFlags {
  std::string config;
  std::vector<std::string> set;  // extra key=value overrides
  std::optional<std::uint64_t> seed;
  std::optional<int> n_hours;
  std::optional<std::string> encoding;
  std::optional<std::string> model;
  bool no_discrete_branch = false;
};

struct GenerateArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> subjects;
  std::optional<int> days;
  std::optional<double> strength;
  std::optional<double> missing;
  std::string out;
};

struct PreprocessArgs {
  std::string input;  // directory holding sensor.csv and labels.csv
  std::string sensor;
  std::string labels;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct TrainArgs {
  std::string data;
  ExperimentFlags flags;
  std::string id;
  int png_days = 0;
  bool quiet = false;
  std::string out;
};

struct EvaluateArgs {
  std::string data;
  std::string checkpoint;
  std::string logits;
  std::string split = "val";
  std::string out;
};

struct EnsembleArgs {
  std::string data;
  std::string pool;
  std::vector<std::string> logits;
  std::vector<std::string> eval_logits;
  std::string method = "all";
  double quantile = 0.5;
  std::string margin = "top2";
  std::string out;
};

struct AblateArgs {
  std::string data;
  ExperimentFlags flags;
  std::vector<int> n_hours{2, 4, 6};
  std::vector<std::string> encodings{"multi_channel", "stacked_vertical"};
  bool quiet = false;
  std::string out;
};

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string out;
};

/// `arguments` is the full command line, recorded in the manifest.
void run_generate(const GenerateArgs& args, const std::vector<std::string>& arguments);
void run_preprocess(const PreprocessArgs& args, const std::vector<std::string>& arguments);
void run_train(const TrainArgs& args, const std::vector<std::string>& arguments);
void run_evaluate(const EvaluateArgs& args, const std::vector<std::string>& arguments);
void run_ensemble(const EnsembleArgs& args, const std::vector<std::string>& arguments);
void run_ablate(const AblateArgs& args, const std::vector<std::string>& arguments);
void run_report(const ReportArgs& args, const std::vector<std::string>& arguments);

}  // namespace mislstm::cli
