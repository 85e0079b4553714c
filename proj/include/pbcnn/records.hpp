#pragma once

// Result types shared by training, evaluation, the sweep and report export.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pbcnn {

struct EvalMode {
  enum class Kind { Mean, MonteCarlo };
  Kind kind = Kind::Mean;
  int samples = 1;  // MonteCarlo only

  static EvalMode mean() { return {}; }
  static EvalMode mc(int n) { return {Kind::MonteCarlo, n}; }
  /// "mean" or "mc(32)".
  std::string to_string() const;
  static EvalMode parse(const std::string& text);
  bool operator==(const EvalMode&) const = default;
};

struct EvalResult {
  std::string split;
  double accuracy = 0.0;
  std::size_t n_correct = 0;
  std::size_t n_total = 0;
  EvalMode mode;
  double mean_predictive_entropy = 0.0;
  bool operator==(const EvalResult&) const = default;
};

struct LayerSigma {
  std::string layer;
  std::size_t depth = 0;
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
  double std = 0.0;
  bool operator==(const LayerSigma&) const = default;
};

using SigmaProfile = std::vector<LayerSigma>;

/// One report row. Epoch rows carry epoch-mean losses and the running training
/// accuracy of the mean-weight pass; eval and final rows carry an EvalResult
/// (final = end-of-run evaluation written by the sweep).
struct TrainRecord {
  enum class Kind { Epoch, Eval, Final };
  Kind kind = Kind::Epoch;
  std::string placement;  // "{5}"; filled by the sweep and the CLI
  int epoch = 0;          // 1-based; 0 for stand-alone evaluation
  std::int64_t step = 0;

  // Epoch rows.
  double l_cen = 0.0;
  double l_unc = 0.0;
  double kl_term = 0.0;
  double nll_term = 0.0;
  double kl_weight = 0.0;
  double total = 0.0;
  double train_accuracy = 0.0;
  SigmaProfile sigma;

  // Eval rows.
  std::optional<EvalResult> eval;

  std::optional<double> wall_seconds;

  bool operator==(const TrainRecord&) const = default;
};

}  // namespace pbcnn
