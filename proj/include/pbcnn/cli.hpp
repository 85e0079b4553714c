#pragma once

// `pbcnn` subcommands: train, eval, sweep, gradcheck.
//
// Settings come from built-in defaults, then an optional flat config file
// (`key = value` lines, '#' comments), then command-line flags. Unknown
// keys are rejected. Keys:
//
//   seed, epochs, batch_size, learning_rate, mc_samples, kl_weight (number|auto),
//   eval_every, momentum, prior_sigma, augment_flip, arch (desk|resnet18),
//   groups, data, synthetic, synthetic_per_class, synthetic_noise, max_rows,
//   standardize, out, format (jsonl|csv), checkpoint, splits, mode (mean|mc),
//   samples, jobs, tolerance, layer (all|bayes-only|certain-only), timing
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <iosfwd>
#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "pbcnn/data.hpp"
#include "pbcnn/model.hpp"
#include "pbcnn/report.hpp"
#include "pbcnn/trainer.hpp"

namespace pbcnn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

using Settings = std::map<std::string, std::string>;

/// Keys accepted in config files and produced by flags.
const std::vector<std::string>& config_keys();

/// Parses `key = value` lines. Throws ConfigError for unknown keys or
/// malformed lines.
Settings parse_config_file(std::istream& in);
Settings load_config_file(const std::string& path);

struct DataSource {
  bool synthetic = false;
  std::string path;
  std::size_t synthetic_per_class = 140;
  double synthetic_noise = 0.05;
  std::uint64_t synthetic_seed = kDefaultSeed;
  std::size_t max_rows = 0;
  bool standardize = false;

  Dataset load() const;
  nlohmann::json to_json() const;
  static DataSource from_json(const nlohmann::json& doc);
};

struct CliConfig {
  std::string command;
  TrainConfig train;
  std::string arch_name = "desk";
  ArchSpec arch;
  std::string groups;
  std::optional<DataSource> data;  // none when neither --data nor --synthetic was given
  std::string out = "pbcnn-out";
  ReportFormat format = ReportFormat::JsonLines;
  std::string checkpoint;  // default <out>/model.pbnn
  std::vector<Split> splits{Split::PublicTest, Split::PrivateTest};
  EvalMode mode;
  int samples = 32;
  int jobs = 1;
  double tolerance = 1e-3;
  std::string layer = "all";
  bool timing = false;

  nlohmann::json to_json() const;
};

/// Applies `settings` over the defaults for `command`; throws ConfigError
/// naming the offending key.
CliConfig resolve_config(const std::string& command, const Settings& settings);

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pbcnn
