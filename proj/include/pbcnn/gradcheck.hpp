#pragma once

// Central finite-difference checks of analytic gradients, in double precision.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pbcnn/bayes_layer.hpp"
#include "pbcnn/model.hpp"

namespace pbcnn {

enum class GradcheckLayers { All, BayesOnly, CertainOnly };

/// "all", "bayes-only", "certain-only".
GradcheckLayers parse_gradcheck_layers(const std::string& text);
std::string to_string(GradcheckLayers layers);

struct GradcheckOptions {
  double tolerance = 1e-3;        // relative
  double step = 1e-3;             // h
  bool richardson = false;        // (4 D(h/2) - D(h)) / 3 instead of D(h)
  double absolute_floor = 1e-6;   // below this magnitude compare |a - n| <= floor instead
  std::size_t max_per_group = 0;  // 0 checks every parameter; otherwise a seeded random subset
  std::uint64_t seed = kDefaultSeed;
};

/// One scalar to perturb. `slot` is written in place and restored.
struct Probe {
  std::string group;
  std::string name;
  double* slot = nullptr;
  double analytic = 0.0;
};

struct ProbeResult {
  std::string group;
  std::string name;
  double analytic = 0.0;
  double numeric = 0.0;
  double abs_error = 0.0;
  double rel_error = 0.0;
  double step = 0.0;          // h actually used
  bool absolute = false;      // judged by the absolute floor
  bool kink_adjusted = false; // h shrunk to stay on one side of a ReLU kink
  bool kink_unresolved = false;
  bool passed = false;
};

struct GroupSummary {
  std::string group;
  std::size_t checked = 0;
  std::size_t kink_adjusted = 0;
  std::size_t kink_unresolved = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst;
  bool passed = true;
};

struct GradcheckReport {
  std::vector<GroupSummary> groups;
  std::vector<ProbeResult> probes;

  bool passed() const;
  /// Largest relative error among judged probes (failed ones first).
  const ProbeResult* worst() const;
};

/// Passes iff |a - n| / max(|a|, |n|) <= tolerance, or both magnitudes fall
/// under the absolute floor and |a - n| <= floor.
bool gradient_matches(double analytic, double numeric, const GradcheckOptions& options, double* rel_error = nullptr,
                      bool* absolute = nullptr);

/// `loss` re-evaluates the objective at the current slot values. When
/// `pattern` is given, a change of its value between the base point and a
/// perturbed point marks a kink; h is halved up to 6 times to avoid it, and a
/// probe whose kink cannot be avoided is reported but not judged.
GradcheckReport run_gradcheck(std::vector<Probe> probes, const std::function<double()>& loss,
                              const GradcheckOptions& options,
                              const std::function<std::uint64_t()>& pattern = nullptr);

struct ModelGradcheckSetup {
  ArchSpec arch = ArchSpec::tiny();
  PlacementConfig placement{{1, 3, 5}};
  std::size_t batch = 4;
  double kl_weight = 0.1;
  PriorSpec prior = PriorSpec::unit();
  double rho_low = -4.0;   // rho drawn uniformly in [rho_low, rho_high]
  double rho_high = -1.0;
  GradcheckLayers layers = GradcheckLayers::All;
};

/// Defaults for whole-model checks: BN over a handful of values has large
/// higher derivatives, so plain central differences at h = 1e-3 are too coarse.
GradcheckOptions model_gradcheck_defaults();

/// Builds a double-precision model from `setup`, freezes eps, and checks
/// uncertain.mu / uncertain.rho against L_unc and certain.conv / certain.bn /
/// certain.fc against L_cen.
GradcheckReport gradcheck_model(const ModelGradcheckSetup& setup, const GradcheckOptions& options);

}  // namespace pbcnn
