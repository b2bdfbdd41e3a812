#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mislstm/evaluation.hpp"
#include "mislstm/ingest.hpp"

namespace mislstm::cli {

namespace fs = std::filesystem;

/// Exclusive lock on an output directory; removed on destruction.
class OutputLock {
public:
  explicit OutputLock(const fs::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

private:
  fs::path path_;
};

/// FNV-1a 64 of a file's bytes, as 16 hex digits.
std::string file_hash(const fs::path& path);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

/// Records configuration, seeds and input hashes of one command run.
struct Manifest {
  Manifest(std::string command_name, std::vector<std::string> command_line)
      : command(std::move(command_name)), arguments(std::move(command_line)) {}

  std::string command;
  std::vector<std::string> arguments;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  nlohmann::json inputs = nlohmann::json::object();
  std::vector<std::string> outputs;

  void add_input(const fs::path& path);
  void write(const fs::path& dir) const;
};

/// One day of a preprocessed dataset directory.
struct DayEntry {
  std::string id;
  std::string subject;
  int subject_index = 0;
  LabelVector label;
  bool train = false;
  std::string grid;  // relative to the dataset directory
};

struct DayIndex {
  int n_subjects = 0;
  std::vector<DayEntry> days;
};

void write_day_index(const fs::path& path, const DayIndex& index);
DayIndex read_day_index(const fs::path& path);

/// Grouped bar chart (one group per report, bars Q1..S3 and Avg) as an 8-bit
/// grayscale PNG.
void write_bar_chart(const fs::path& path, std::span<const NamedReport> reports);

}  // namespace mislstm::cli
