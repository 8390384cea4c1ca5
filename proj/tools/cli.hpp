#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mdmf/synth.hpp"
#include "mdmf/train.hpp"

namespace mdmf::cli {

enum ExitCode : int {
  kOk = 0,
  kRuntime = 1,
  kUsage = 2,        // unknown flag, missing argument, conflicting options
  kDataFormat = 3,   // malformed .pfse / .pfsp / CSV / classifier file
  kTheoryFailed = 4,
  kConfigValue = 5,  // a value that does not parse or violates a constraint
  kBadPath = 6,      // missing input file or output directory
};

struct RunConfig {
  std::string subcommand;
  std::uint64_t seed = 0;
  int threads = 1;
  int verbosity = 0;

  // Paths; which ones are required depends on the subcommand.
  std::string real_path;
  std::string fake_path;
  std::string out_path;
  std::string checkpoint_path;
  std::string refs_path;
  std::vector<std::string> tests_paths;  // concatenated in order
  std::string scores_path;
  std::vector<std::string> truth_paths;
  std::string classifier_path;
  std::string scores_out_path;
  std::string history_path;
  std::string real_out_path;
  std::string fake_out_path;

  // synth
  std::size_t images = 1000;
  synth::SyntheticConfig synth;
  double defect_norm = 4.0;
  std::optional<double> dilution_c;
  std::optional<double> dilution_eta;

  // train / baseline
  TrainConfig train;
  std::size_t hidden_width = 256;
  std::size_t pfs_dim = 1;
  double dropout = 0.3;

  // score
  std::optional<double> tau;
  std::optional<double> calibrate_alpha;

  // eval
  std::optional<std::string> baseline;  // voting | mean | max | topk
  double theta_patch = 0.1;
  std::size_t topk = 5;

  // theory-check
  bool quick = false;
};

// Default threshold multiplier for real-only calibration.
inline constexpr double kDefaultCalibrationAlpha = 3.0;

struct ParseOutcome {
  std::optional<RunConfig> config;  // empty when parsing stopped
  int exit_code = kOk;
  std::string message;              // usage, help or error text
};

// Flags override values from an optional --config TOML file. Input paths
// and output directories are checked before any work starts.
ParseOutcome parse_config(const std::vector<std::string>& args);

// Executes a parsed configuration and returns the exit code. Diagnostics go
// to stderr; reports without an --out path go to stdout.
int run(const RunConfig& cfg);

// parse_config followed by run.
int main_entry(int argc, char** argv);

}  // namespace mdmf::cli
