#pragma once

// Alternating updates per minibatch:
//   (a) sample w2, descend L_unc = kl_weight * KL + NLL on (mu, rho);
//   (c) fix w2 = mu, descend L_cen on every certain parameter.

#include <functional>
#include <json.hpp>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "pbcnn/bayes_layer.hpp"
#include "pbcnn/data.hpp"
#include "pbcnn/model.hpp"
#include "pbcnn/objective.hpp"
#include "pbcnn/records.hpp"

namespace pbcnn {

struct TrainConfig {
  double learning_rate = 0.05;
  int epochs = 30;
  int batch_size = 32;
  int mc_samples = 1;
  std::optional<double> kl_weight;  // none = 1 / batches per epoch
  std::uint64_t seed = kDefaultSeed;
  int eval_every = 1;
  double momentum = 0.0;
  PriorSpec prior = PriorSpec::unit();
  bool augment_flip = false;

  /// Throws ConfigError naming the offending field. epochs = 0 is allowed.
  void validate() const;
  double resolved_kl_weight(std::size_t batches_per_epoch) const;
  nlohmann::json to_json() const;
};

template <typename T>
struct GradPair {
  BasicTensor<T> delta_mu;
  BasicTensor<T> delta_rho;
};

/// delta_mu = dL/dw2 + dLq/dmu; delta_rho = dL/dw2 * eps * sigmoid(rho) + dLq/drho.
/// Throws StateError if params.last_weight was not produced by the current
/// (mu, rho, last_epsilon).
template <typename T>
GradPair<T> uncertain_backward(const BasicTensor<T>& dL_dw2, const BasicTensor<T>& dLq_dmu,
                               const BasicTensor<T>& dLq_drho, const VariationalParams<T>& params);

/// param - eta * grad.
template <typename T>
BasicTensor<T> sgd_step(const BasicTensor<T>& param, const BasicTensor<T>& grad, double eta);
template <typename T>
void sgd_step_inplace(BasicTensor<T>& param, const BasicTensor<T>& grad, double eta);

/// Single-draw phase (a) result. grads[i] belongs to variational_units()[i].
template <typename T>
struct UncertainGradients {
  double nll = 0.0;
  double kl = 0.0;
  std::vector<GradPair<T>> grads;
};

/// One forward/backward of L_unc with BN on batch statistics (running
/// statistics untouched). `mode` is Sampled (needs rng) or FrozenNoise.
template <typename T>
UncertainGradients<T> uncertain_gradients(BasicModel<T>& model, const BasicTensor<T>& images,
                                          std::span<const int> labels, const PriorSpec& prior, double kl_weight,
                                          WeightMode mode, Rng* rng);

/// The L_unc value uncertain_gradients differentiates, without a backward pass.
template <typename T>
double uncertain_loss_value(BasicModel<T>& model, const BasicTensor<T>& images, std::span<const int> labels,
                            const PriorSpec& prior, double kl_weight, WeightMode mode, Rng* rng);

/// Phase (c) forward/backward with w2 = mu; leaves certain gradients in the
/// model and returns L_cen. `update_running_stats` is off for gradient checks.
template <typename T>
double certain_gradients(BasicModel<T>& model, const BasicTensor<T>& images, std::span<const int> labels,
                         bool update_running_stats = true, std::size_t* n_correct = nullptr);

template <typename T>
double certain_loss_value(BasicModel<T>& model, const BasicTensor<T>& images, std::span<const int> labels);

/// Mutable state carried across steps.
struct TrainState {
  double kl_weight = 1.0;
  std::map<const void*, std::vector<float>> velocity;  // momentum buffers
  std::size_t last_correct = 0;                      // phase (c) hits of the last step
};

/// Phase (a): N draws, gradients averaged, then SGD on (mu, rho). Returns
/// mean (kl, nll). A no-op returning zeros without variational layers.
std::pair<double, double> uncertain_phase(Model& model, const Batch& batch, const TrainConfig& config, Rng& rng,
                                          TrainState& state);
/// Phase (c): SGD on certain parameters; returns L_cen.
double certain_phase(Model& model, const Batch& batch, const TrainConfig& config, TrainState& state);

/// Both phases on one minibatch; increments model.step(). Non-finite losses
/// raise NumericError.
LossBreakdown train_step(Model& model, const Batch& batch, const TrainConfig& config, Rng& rng, TrainState& state);

struct TrainHooks {
  std::function<void(std::int64_t step, const LossBreakdown&)> on_step;
  std::function<void(const TrainRecord&)> on_record;
  bool timing = false;  // fill wall_seconds
};

/// Epoch loop with a seeded shuffle per epoch; PublicTest accuracy every
/// eval_every epochs (mean mode).
std::vector<TrainRecord> train(Model& model, const Dataset& dataset, const TrainConfig& config,
                               const TrainHooks& hooks = {});

}  // namespace pbcnn
