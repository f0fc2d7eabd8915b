#pragma once

#include "pipo/config.hpp"
#include "pipo/training.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace pipo::cli {

/// Environment variable naming the default dataset directory.
inline constexpr const char* kDataRootEnv = "PIPO_DATA_ROOT";

/// Training configuration plus the paths and options of one invocation.
struct RunConfig {
  training::TrainConfig train;
  std::filesystem::path data;
  std::filesystem::path checkpoint;
  std::filesystem::path out = "pipo_out";
  std::vector<double> split{0.8, 0.2};
  std::optional<std::uint64_t> split_seed;  // defaults to the training seed
  std::string suite = "independence";
  std::vector<double> ablation_ratios{0.25, 0.10, 0.01};
  Index ablation_seeds = 1;
  bool overwrite = false;

  std::uint64_t effective_split_seed() const { return split_seed.value_or(train.seed); }

  void store(config::IniDocument& doc) const;
  /// Applies the keys present in `doc`; unknown keys raise ConfigError.
  static RunConfig load(const config::IniDocument& doc);
  static std::set<std::string> known_keys();
};

/// Runs one subcommand (sample, train, eval, reconstruct, ablate, report).
/// Returns the process exit status; 0 only when every artifact was written.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Line chart as a standalone SVG document.
struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series);

}  // namespace pipo::cli
