#include "run_support.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "mislstm/imaging.hpp"

namespace mislstm::cli {

OutputLock::OutputLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw Error(fmt::format("'{}' is locked by another run (remove {} if stale)", dir.string(),
                            path_.string()));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buffer[1 << 16];
  while (in) {
    in.read(buffer, sizeof buffer);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buffer[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return fmt::format("{:016x}", h);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

void Manifest::add_input(const fs::path& path) { inputs[path.string()] = file_hash(path); }

void Manifest::write(const fs::path& dir) const {
  nlohmann::json j;
  j["command"] = command;
  j["arguments"] = arguments;
  j["config"] = config;
  j["seeds"] = seeds;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  write_text(dir / "manifest.json", j.dump(2) + "\n");
}

void write_day_index(const fs::path& path, const DayIndex& index) {
  nlohmann::json days = nlohmann::json::array();
  for (const auto& d : index.days) {
    days.push_back({{"id", d.id},
                    {"subject", d.subject},
                    {"subject_index", d.subject_index},
                    {"label", d.label.classes()},
                    {"split", d.train ? "train" : "val"},
                    {"grid", d.grid}});
  }
  write_text(path, nlohmann::json{{"n_subjects", index.n_subjects}, {"days", days}}.dump(1) + "\n");
}

DayIndex read_day_index(const fs::path& path) {
  DayIndex index;
  try {
    const auto j = nlohmann::json::parse(read_text(path));
    index.n_subjects = j.at("n_subjects");
    for (const auto& d : j.at("days")) {
      DayEntry e;
      e.id = d.at("id");
      e.subject = d.at("subject");
      e.subject_index = d.at("subject_index");
      e.label = LabelVector(d.at("label").get<std::array<int, kHeads>>());
      e.train = d.at("split").get<std::string>() == "train";
      e.grid = d.at("grid");
      index.days.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return index;
}

void write_bar_chart(const fs::path& path, std::span<const NamedReport> reports) {
  constexpr int kHeight = 200;
  constexpr int kBar = 6;
  constexpr int kGap = 2;
  constexpr int kGroupGap = 16;
  constexpr int kBars = kHeads + 1;
  const int group_width = kBars * (kBar + kGap) + kGroupGap;
  BlockImage image;
  image.channels = 1;
  image.height = kHeight;
  image.width = std::max(1, static_cast<int>(reports.size()) * group_width + kGroupGap);
  image.pixels.assign(static_cast<std::size_t>(image.height) * image.width, 1.0f);
  auto set = [&](int y, int x, float v) { image.pixels[static_cast<std::size_t>(y) * image.width + x] = v; };
  // Reference lines at 0.5 and 1.0.
  for (int x = 0; x < image.width; ++x) {
    set(0, x, 0.7f);
    set(kHeight / 2, x, 0.85f);
  }
  for (std::size_t g = 0; g < reports.size(); ++g) {
    for (int b = 0; b < kBars; ++b) {
      const double value = b < kHeads ? reports[g].report.f1[b] : reports[g].report.average;
      const int bar = static_cast<int>(std::clamp(value, 0.0, 1.0) * (kHeight - 1));
      const int x0 = kGroupGap + static_cast<int>(g) * group_width + b * (kBar + kGap);
      const float shade = b < kHeads ? 0.35f : 0.0f;
      for (int y = kHeight - bar; y < kHeight; ++y) {
        for (int x = x0; x < x0 + kBar; ++x) set(y, x, shade);
      }
    }
  }
  write_png(path, image);
}

}  // namespace mislstm::cli
