#pragma once

// Residual network with per-group uncertainty placement.
//
// Group 1 is the stem convolution; groups 2-5 are residual stages of
// `blocks_per_group` basic blocks (conv-BN-ReLU-conv-BN plus identity or
// 1×1 projection shortcut, final ReLU). Groups 3-5 open with a strided
// block. Every convolution of a group listed in the placement, including its
// projection shortcut, carries Gaussian variational weights; BN and the FC
// head are always point-valued.

#include <array>
#include <cstdint>
#include <json.hpp>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pbcnn/bayes_layer.hpp"
#include "pbcnn/nn_ops.hpp"
#include "pbcnn/rng.hpp"
#include "pbcnn/tensor.hpp"

namespace pbcnn {

inline constexpr int kNumGroups = 5;

struct ArchSpec {
  std::size_t height = 48;
  std::size_t width = 48;
  std::size_t channels = 1;
  std::size_t num_classes = 7;
  std::array<std::size_t, kNumGroups> group_channels{16, 16, 32, 64, 128};
  std::size_t blocks_per_group = 2;
  std::size_t stem_stride = 2;

  /// Reduced-width ResNet18 topology used for CPU runs.
  static ArchSpec desk() { return {}; }
  /// ResNet18 widths (64-512) for full-scale runs.
  static ArchSpec full_resnet18();
  /// A few hundred parameters; used by gradient checks.
  static ArchSpec tiny();

  void validate() const;
  nlohmann::json to_json() const;
  static ArchSpec from_json(const nlohmann::json& doc);
  bool operator==(const ArchSpec&) const = default;
};

struct PlacementConfig {
  std::set<int> bayesian_groups;

  static PlacementConfig none() { return {}; }
  static PlacementConfig single(int group) { return {{group}}; }
  static PlacementConfig all() { return {{1, 2, 3, 4, 5}}; }
  /// All 32 subsets of {1..5}.
  static std::vector<PlacementConfig> all_subsets();
  /// "none", "5", or "+"-joined indices such as "1+5".
  static PlacementConfig parse(std::string_view text);

  bool contains(int group) const { return bayesian_groups.count(group) != 0; }
  bool empty() const { return bayesian_groups.empty(); }
  void validate() const;
  std::string to_string() const;
  bool operator==(const PlacementConfig&) const = default;
};

enum class WeightMode {
  Sampled,      // fresh eps per variational layer
  FrozenNoise,  // reuse the stored eps with the current (mu, rho)
  Mean,         // w = mu
};

enum class GradTarget {
  Uncertain,  // dL/dw at the active weight of variational convs only
  Certain,    // deterministic convs, BN gamma/beta, FC head
};

struct ForwardOptions {
  WeightMode weights = WeightMode::Mean;
  bool training = false;
  bool update_running_stats = true;
};

template <typename T>
struct ConvUnit {
  enum class Active { None, Certain, Mean, Sample };

  std::string name;
  int group = 0;
  std::size_t depth = 0;
  ConvSpec spec;
  bool variational = false;
  bool projection = false;
  BasicTensor<T> weight;      // certain weights (empty when variational)
  VariationalParams<T> var;   // (mu, rho) when variational
  BasicTensor<T> grad;        // dL/dw at the active weight
  BasicTensor<T> input;       // cached for backward
  Active active = Active::None;

  const BasicTensor<T>& active_weight() const;
  BasicTensor<T> forward(const BasicTensor<T>& x, WeightMode mode, Rng* rng, bool cache);
  BasicTensor<T> backward(const BasicTensor<T>& grad_output, bool weight_grad, bool input_grad);
};

template <typename T>
struct NormUnit {
  std::string name;
  int group = 0;
  BatchNormState<T> state;
  BasicTensor<T> grad_gamma;
  BasicTensor<T> grad_beta;
  BatchNormCache<T> cache;

  BasicTensor<T> forward(const BasicTensor<T>& x, bool training, bool update_running_stats);
  BasicTensor<T> backward(const BasicTensor<T>& grad_output, bool param_grads);
};

template <typename T>
struct BasicBlock {
  int group = 0;
  ConvUnit<T> conv1;
  NormUnit<T> bn1;
  ConvUnit<T> conv2;
  NormUnit<T> bn2;
  std::optional<ConvUnit<T>> proj;
  std::optional<NormUnit<T>> proj_bn;
  BasicTensor<T> hidden_pre;  // bn1 output
  BasicTensor<T> out_pre;     // residual sum before the final ReLU
};

template <typename T>
struct NamedTensor {
  std::string name;
  BasicTensor<T>* value;
  BasicTensor<T>* grad;
};

template <typename T>
struct NamedVariational {
  std::string name;
  ConvUnit<T>* unit;
  VariationalParams<T>& params() const { return unit->var; }
};

/// Certain parameters w1 and variational layers theta = (mu, rho).
template <typename T>
struct ParamPartition {
  std::vector<NamedTensor<T>> certain;
  std::vector<NamedVariational<T>> uncertain;
};

template <typename T>
class BasicModel {
 public:
  BasicModel() = default;

  static BasicModel build(const ArchSpec& arch, const PlacementConfig& placement, std::uint64_t seed,
                          double rho_init = kDefaultRhoInit);

  /// images: N×C×H×W. Returns N×num_classes logits. `rng` is required in
  /// Sampled mode. Caches for backward are kept only when training.
  BasicTensor<T> forward(const BasicTensor<T>& images, const ForwardOptions& options, Rng* rng = nullptr);

  /// Backpropagates from dL/dlogits of the last training-mode forward.
  /// Stops at the earliest layer that holds a requested gradient.
  void backward(const BasicTensor<T>& grad_logits, GradTarget target);

  void zero_grad();

  ParamPartition<T> partition();
  /// Every persisted tensor (parameters and BN running statistics), by name.
  std::vector<std::pair<std::string, BasicTensor<T>*>> named_state();

  std::vector<ConvUnit<T>*> conv_units();
  std::vector<const ConvUnit<T>*> conv_units() const;
  std::vector<ConvUnit<T>*> variational_units();
  std::vector<const ConvUnit<T>*> variational_units() const;
  std::vector<NormUnit<T>*> norm_units();

  /// Counted layer by layer: conv 1 (certain) or 2 (mu, rho), BN 2, FC 2.
  std::size_t trainable_tensor_count() const;
  std::size_t parameter_count() const;

  const ArchSpec& arch() const noexcept { return arch_; }
  const PlacementConfig& placement() const noexcept { return placement_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::int64_t step() const noexcept { return step_; }
  void set_step(std::int64_t step) noexcept { step_ = step; }

  BasicTensor<T>& fc_weight() noexcept { return fc_weight_; }
  BasicTensor<T>& fc_bias() noexcept { return fc_bias_; }
  const BasicTensor<T>& fc_weight() const noexcept { return fc_weight_; }
  const BasicTensor<T>& fc_bias() const noexcept { return fc_bias_; }

  /// Hash of every ReLU on/off pattern seen in the last forward, when enabled.
  void set_track_activation_pattern(bool on) noexcept { track_pattern_ = on; }
  std::uint64_t activation_pattern() const noexcept { return pattern_hash_; }

  template <typename U>
  BasicModel<U> cast() const;

 private:
  template <typename U>
  friend class BasicModel;

  BasicTensor<T> block_forward(BasicBlock<T>& block, const BasicTensor<T>& x, const ForwardOptions& options,
                               Rng* rng);
  BasicTensor<T> block_backward(BasicBlock<T>& block, const BasicTensor<T>& grad, GradTarget target,
                                bool need_input_grad);
  BasicTensor<T> tracked_relu(const BasicTensor<T>& x);
  std::size_t first_stage_needing(GradTarget target) const;

  ArchSpec arch_;
  PlacementConfig placement_;
  std::uint64_t seed_ = 0;
  std::int64_t step_ = 0;

  ConvUnit<T> stem_conv_;
  NormUnit<T> stem_bn_;
  BasicTensor<T> stem_pre_;
  std::vector<BasicBlock<T>> blocks_;
  BasicTensor<T> fc_weight_;
  BasicTensor<T> fc_bias_;
  BasicTensor<T> fc_grad_weight_;
  BasicTensor<T> fc_grad_bias_;
  BasicTensor<T> pooled_;
  Shape pre_pool_shape_;

  bool track_pattern_ = false;
  std::uint64_t pattern_hash_ = 0;
};

using Model = BasicModel<float>;
using ModelD = BasicModel<double>;

template <typename T>
template <typename U>
BasicModel<U> BasicModel<T>::cast() const {
  BasicModel<U> out = BasicModel<U>::build(arch_, placement_, seed_);
  auto& self = const_cast<BasicModel<T>&>(*this);
  auto src = self.named_state();
  auto dst = out.named_state();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<U>();
  out.step_ = step_;
  return out;
}

}  // namespace pbcnn
