#include "pbcnn/model.hpp"

#include <cmath>
#include <sstream>

namespace pbcnn {

namespace {

template <typename T>
BasicTensor<T> uniform_tensor(const Shape& shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  BasicTensor<T> out(shape);
  for (auto& v : out.values()) v = static_cast<T>(dist(rng));
  return out;
}

template <typename T>
ConvUnit<T> make_conv(std::string name, int group, std::size_t depth, const ConvSpec& spec, bool variational,
                      bool projection, double rho_init, Rng& rng) {
  spec.validate();
  ConvUnit<T> unit;
  unit.name = std::move(name);
  unit.group = group;
  unit.depth = depth;
  unit.spec = spec;
  unit.variational = variational;
  unit.projection = projection;
  // He-uniform on fan-in; mu of a variational conv is drawn the same way.
  auto init = uniform_tensor<T>(spec.weight_shape(), std::sqrt(6.0 / static_cast<double>(spec.fan_in())), rng);
  if (variational) {
    unit.var = VariationalParams<T>(std::move(init), static_cast<T>(rho_init));
  } else {
    unit.weight = std::move(init);
  }
  return unit;
}

template <typename T>
NormUnit<T> make_norm(std::string name, int group, std::size_t channels) {
  NormUnit<T> unit;
  unit.name = std::move(name);
  unit.group = group;
  unit.state = BatchNormState<T>(channels);
  return unit;
}

std::uint64_t mix_pattern(std::uint64_t hash, std::uint64_t word) {
  hash ^= word + 0x9E3779B97F4A7C15ull + (hash << 6) + (hash >> 2);
  return hash;
}

}  // namespace

ArchSpec ArchSpec::full_resnet18() {
  ArchSpec arch;
  arch.group_channels = {64, 64, 128, 256, 512};
  return arch;
}

ArchSpec ArchSpec::tiny() {
  ArchSpec arch;
  arch.height = 8;
  arch.width = 8;
  arch.group_channels = {2, 2, 3, 3, 4};
  arch.blocks_per_group = 2;
  arch.stem_stride = 1;
  return arch;
}

void ArchSpec::validate() const {
  if (height == 0) throw ConfigError("arch.height", "must be positive");
  if (width == 0) throw ConfigError("arch.width", "must be positive");
  if (channels == 0) throw ConfigError("arch.channels", "must be positive");
  if (num_classes < 2) throw ConfigError("arch.num_classes", "need at least 2 classes");
  if (blocks_per_group == 0) throw ConfigError("arch.blocks_per_group", "must be positive");
  if (stem_stride == 0) throw ConfigError("arch.stem_stride", "must be positive");
  for (std::size_t g = 0; g < group_channels.size(); ++g) {
    if (group_channels[g] == 0) throw ConfigError("arch.group_channels", "group " + std::to_string(g + 1) + " is empty");
  }
  // Spatial size must survive the stem and three strided stages.
  std::size_t h = height, w = width;
  for (std::size_t stride : {stem_stride, std::size_t{2}, std::size_t{2}, std::size_t{2}}) {
    h = (h + 2 - 3) / stride + 1;
    w = (w + 2 - 3) / stride + 1;
    if (h == 0 || w == 0) throw ConfigError("arch.input_size", "too small for the network's strides");
  }
}

nlohmann::json ArchSpec::to_json() const {
  return {{"height", height},
          {"width", width},
          {"channels", channels},
          {"num_classes", num_classes},
          {"group_channels", group_channels},
          {"blocks_per_group", blocks_per_group},
          {"stem_stride", stem_stride}};
}

ArchSpec ArchSpec::from_json(const nlohmann::json& doc) {
  ArchSpec arch;
  arch.height = doc.at("height").get<std::size_t>();
  arch.width = doc.at("width").get<std::size_t>();
  arch.channels = doc.at("channels").get<std::size_t>();
  arch.num_classes = doc.at("num_classes").get<std::size_t>();
  arch.group_channels = doc.at("group_channels").get<std::array<std::size_t, kNumGroups>>();
  arch.blocks_per_group = doc.at("blocks_per_group").get<std::size_t>();
  arch.stem_stride = doc.at("stem_stride").get<std::size_t>();
  return arch;
}

std::vector<PlacementConfig> PlacementConfig::all_subsets() {
  std::vector<PlacementConfig> out;
  for (int mask = 0; mask < (1 << kNumGroups); ++mask) {
    PlacementConfig p;
    for (int g = 1; g <= kNumGroups; ++g) {
      if (mask & (1 << (g - 1))) p.bayesian_groups.insert(g);
    }
    out.push_back(std::move(p));
  }
  return out;
}

PlacementConfig PlacementConfig::parse(std::string_view text) {
  PlacementConfig p;
  if (text == "none" || text == "{}" || text.empty()) return p;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('+', start), text.size());
    const std::string token(text.substr(start, end - start));
    int group = 0;
    try {
      std::size_t used = 0;
      group = std::stoi(token, &used);
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw ConfigError("groups", "'" + token + "' is not a group index");
    }
    p.bayesian_groups.insert(group);
    start = end + 1;
  }
  p.validate();
  return p;
}

void PlacementConfig::validate() const {
  for (int g : bayesian_groups) {
    if (g < 1 || g > kNumGroups) {
      throw ConfigError("groups", "invalid group index " + std::to_string(g) + " (valid: 1-5)");
    }
  }
}

std::string PlacementConfig::to_string() const {
  std::ostringstream os;
  os << '{';
  bool first = true;
  for (int g : bayesian_groups) {
    if (!first) os << ',';
    os << g;
    first = false;
  }
  os << '}';
  return os.str();
}

template <typename T>
const BasicTensor<T>& ConvUnit<T>::active_weight() const {
  switch (active) {
    case Active::Certain:
      return weight;
    case Active::Mean:
      return var.mu;
    case Active::Sample:
      return var.last_weight;
    case Active::None:
      break;
  }
  throw StateError(name + ": no forward pass has selected a weight");
}

template <typename T>
BasicTensor<T> ConvUnit<T>::forward(const BasicTensor<T>& x, WeightMode mode, Rng* rng, bool cache) {
  if (!variational) {
    active = Active::Certain;
  } else if (mode == WeightMode::Mean) {
    active = Active::Mean;
  } else if (mode == WeightMode::Sampled) {
    if (!rng) throw StateError(name + ": sampled forward requires a random generator");
    sample_weights(var, *rng);
    active = Active::Sample;
  } else {
    reparameterize(var);
    active = Active::Sample;
  }
  if (cache) input = x;
  return conv2d_forward(x, active_weight(), spec);
}

template <typename T>
BasicTensor<T> ConvUnit<T>::backward(const BasicTensor<T>& grad_output, bool weight_grad, bool input_grad) {
  if (!weight_grad && !input_grad) return {};
  if (input.empty()) throw StateError(name + ": backward called without a training-mode forward");
  auto grads = conv2d_backward(grad_output, input, active_weight(), spec, input_grad, weight_grad);
  if (weight_grad) grad = std::move(grads.grad_weight);
  return std::move(grads.grad_input);
}

template <typename T>
BasicTensor<T> NormUnit<T>::forward(const BasicTensor<T>& x, bool training, bool update_running_stats) {
  auto result = batchnorm_forward(x, state, training, update_running_stats);
  cache = std::move(result.cache);
  return std::move(result.output);
}

template <typename T>
BasicTensor<T> NormUnit<T>::backward(const BasicTensor<T>& grad_output, bool param_grads) {
  auto grads = batchnorm_backward(grad_output, cache);
  if (param_grads) {
    grad_gamma = std::move(grads.grad_gamma);
    grad_beta = std::move(grads.grad_beta);
  }
  return std::move(grads.grad_input);
}

template <typename T>
BasicModel<T> BasicModel<T>::build(const ArchSpec& arch, const PlacementConfig& placement, std::uint64_t seed,
                                   double rho_init) {
  arch.validate();
  placement.validate();

  BasicModel model;
  model.arch_ = arch;
  model.placement_ = placement;
  model.seed_ = seed;
  Rng rng = make_rng(seed, Stream::Init);

  std::size_t depth = 0;
  const auto& gc = arch.group_channels;
  model.stem_conv_ = make_conv<T>("g1.stem.conv", 1, depth++, ConvSpec{arch.channels, gc[0], 3, arch.stem_stride, 1},
                                  placement.contains(1), false, rho_init, rng);
  model.stem_bn_ = make_norm<T>("g1.stem.bn", 1, gc[0]);

  std::size_t in_channels = gc[0];
  for (int group = 2; group <= kNumGroups; ++group) {
    const std::size_t out_channels = gc[group - 1];
    const bool bayes = placement.contains(group);
    for (std::size_t b = 0; b < arch.blocks_per_group; ++b) {
      const std::size_t stride = (b == 0 && group >= 3) ? 2 : 1;
      const std::string prefix = "g" + std::to_string(group) + ".b" + std::to_string(b) + ".";
      BasicBlock<T> block;
      block.group = group;
      block.conv1 = make_conv<T>(prefix + "conv1", group, depth++, ConvSpec{in_channels, out_channels, 3, stride, 1},
                                 bayes, false, rho_init, rng);
      block.bn1 = make_norm<T>(prefix + "bn1", group, out_channels);
      block.conv2 = make_conv<T>(prefix + "conv2", group, depth++, ConvSpec{out_channels, out_channels, 3, 1, 1},
                                 bayes, false, rho_init, rng);
      block.bn2 = make_norm<T>(prefix + "bn2", group, out_channels);
      if (stride != 1 || in_channels != out_channels) {
        block.proj = make_conv<T>(prefix + "proj", group, depth++, ConvSpec{in_channels, out_channels, 1, stride, 0},
                                  bayes, true, rho_init, rng);
        block.proj_bn = make_norm<T>(prefix + "proj_bn", group, out_channels);
      }
      model.blocks_.push_back(std::move(block));
      in_channels = out_channels;
    }
  }

  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels));
  model.fc_weight_ = uniform_tensor<T>({in_channels, arch.num_classes}, bound, rng);
  model.fc_bias_ = BasicTensor<T>({arch.num_classes});
  model.zero_grad();
  return model;
}

template <typename T>
BasicTensor<T> BasicModel<T>::tracked_relu(const BasicTensor<T>& x) {
  if (track_pattern_) {
    std::uint64_t word = 0;
    std::size_t bits = 0;
    for (T v : x.values()) {
      word = (word << 1) | (v > T(0) ? 1u : 0u);
      if (++bits == 64) {
        pattern_hash_ = mix_pattern(pattern_hash_, word);
        word = 0;
        bits = 0;
      }
    }
    pattern_hash_ = mix_pattern(pattern_hash_, word ^ (bits << 58));
  }
  return relu(x);
}

template <typename T>
BasicTensor<T> BasicModel<T>::block_forward(BasicBlock<T>& block, const BasicTensor<T>& x,
                                            const ForwardOptions& options, Rng* rng) {
  const bool cache = options.training;
  auto h = block.conv1.forward(x, options.weights, rng, cache);
  h = block.bn1.forward(h, options.training, options.update_running_stats);
  if (cache) block.hidden_pre = h;
  h = tracked_relu(h);
  h = block.conv2.forward(h, options.weights, rng, cache);
  h = block.bn2.forward(h, options.training, options.update_running_stats);
  if (block.proj) {
    auto s = block.proj->forward(x, options.weights, rng, cache);
    s = block.proj_bn->forward(s, options.training, options.update_running_stats);
    add_inplace(h, s);
  } else {
    add_inplace(h, x);
  }
  if (cache) block.out_pre = h;
  return tracked_relu(h);
}

template <typename T>
BasicTensor<T> BasicModel<T>::forward(const BasicTensor<T>& images, const ForwardOptions& options, Rng* rng) {
  if (images.rank() != 4) throw ShapeError("model.forward", "rank", 4, images.rank());
  if (images.dim(1) != arch_.channels) throw ShapeError("model.forward", "channels", arch_.channels, images.dim(1));
  if (images.dim(2) != arch_.height) throw ShapeError("model.forward", "height", arch_.height, images.dim(2));
  if (images.dim(3) != arch_.width) throw ShapeError("model.forward", "width", arch_.width, images.dim(3));

  pattern_hash_ = 0;
  const bool cache = options.training;
  auto x = stem_conv_.forward(images, options.weights, rng, cache);
  x = stem_bn_.forward(x, options.training, options.update_running_stats);
  if (cache) stem_pre_ = x;
  x = tracked_relu(x);
  for (auto& block : blocks_) x = block_forward(block, x, options, rng);

  auto pooled = global_avg_pool(x);
  if (cache) {
    pre_pool_shape_ = x.shape();
    pooled_ = pooled;
  }
  return affine_forward(pooled, fc_weight_, fc_bias_);
}

template <typename T>
std::size_t BasicModel<T>::first_stage_needing(GradTarget target) const {
  if (target == GradTarget::Certain) return 0;
  if (stem_conv_.variational) return 0;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    if (placement_.contains(blocks_[b].group)) return b + 1;
  }
  return blocks_.size() + 2;
}

template <typename T>
BasicTensor<T> BasicModel<T>::block_backward(BasicBlock<T>& block, const BasicTensor<T>& grad, GradTarget target,
                                             bool need_input_grad) {
  const bool certain = target == GradTarget::Certain;
  auto wants = [&](const ConvUnit<T>& unit) { return unit.variational != certain; };

  auto g_pre = relu_backward(grad, block.out_pre);
  auto g = block.bn2.backward(g_pre, certain);
  g = block.conv2.backward(g, wants(block.conv2), true);
  g = relu_backward(g, block.hidden_pre);
  g = block.bn1.backward(g, certain);
  auto g_input = block.conv1.backward(g, wants(block.conv1), need_input_grad);

  if (block.proj) {
    auto gs = block.proj_bn->backward(g_pre, certain);
    gs = block.proj->backward(gs, wants(*block.proj), need_input_grad);
    if (need_input_grad) add_inplace(g_input, gs);
  } else if (need_input_grad) {
    add_inplace(g_input, g_pre);
  }
  return g_input;
}

template <typename T>
void BasicModel<T>::backward(const BasicTensor<T>& grad_logits, GradTarget target) {
  if (pooled_.empty()) throw StateError("model.backward: no training-mode forward to differentiate");
  const std::size_t first = first_stage_needing(target);
  const std::size_t head_stage = blocks_.size() + 1;
  if (first > head_stage) return;

  auto head = affine_backward(grad_logits, pooled_, fc_weight_);
  if (target == GradTarget::Certain) {
    fc_grad_weight_ = std::move(head.grad_weight);
    fc_grad_bias_ = std::move(head.grad_bias);
  }
  if (first == head_stage) return;

  auto g = global_avg_pool_backward(head.grad_input, pre_pool_shape_);
  for (std::size_t b = blocks_.size(); b-- > 0;) {
    const std::size_t stage = b + 1;
    if (stage < first) return;
    g = block_backward(blocks_[b], g, target, stage > first);
  }
  if (first > 0) return;
  g = relu_backward(g, stem_pre_);
  g = stem_bn_.backward(g, target == GradTarget::Certain);
  stem_conv_.backward(g, stem_conv_.variational != (target == GradTarget::Certain), false);
}

template <typename T>
void BasicModel<T>::zero_grad() {
  for (auto* unit : conv_units()) {
    unit->grad = BasicTensor<T>(unit->spec.weight_shape());
  }
  for (auto* norm : norm_units()) {
    norm->grad_gamma = BasicTensor<T>::zeros_like(norm->state.gamma);
    norm->grad_beta = BasicTensor<T>::zeros_like(norm->state.beta);
  }
  fc_grad_weight_ = BasicTensor<T>::zeros_like(fc_weight_);
  fc_grad_bias_ = BasicTensor<T>::zeros_like(fc_bias_);
}

template <typename T>
std::vector<ConvUnit<T>*> BasicModel<T>::conv_units() {
  std::vector<ConvUnit<T>*> out{&stem_conv_};
  for (auto& block : blocks_) {
    out.push_back(&block.conv1);
    out.push_back(&block.conv2);
    if (block.proj) out.push_back(&*block.proj);
  }
  return out;
}

template <typename T>
std::vector<const ConvUnit<T>*> BasicModel<T>::conv_units() const {
  auto units = const_cast<BasicModel*>(this)->conv_units();
  return {units.begin(), units.end()};
}

template <typename T>
std::vector<ConvUnit<T>*> BasicModel<T>::variational_units() {
  std::vector<ConvUnit<T>*> out;
  for (auto* unit : conv_units()) {
    if (unit->variational) out.push_back(unit);
  }
  return out;
}

template <typename T>
std::vector<const ConvUnit<T>*> BasicModel<T>::variational_units() const {
  auto units = const_cast<BasicModel*>(this)->variational_units();
  return {units.begin(), units.end()};
}

template <typename T>
std::vector<NormUnit<T>*> BasicModel<T>::norm_units() {
  std::vector<NormUnit<T>*> out{&stem_bn_};
  for (auto& block : blocks_) {
    out.push_back(&block.bn1);
    out.push_back(&block.bn2);
    if (block.proj_bn) out.push_back(&*block.proj_bn);
  }
  return out;
}

template <typename T>
ParamPartition<T> BasicModel<T>::partition() {
  ParamPartition<T> part;
  auto add_conv = [&](ConvUnit<T>& unit) {
    if (unit.variational) {
      part.uncertain.push_back({unit.name, &unit});
    } else {
      part.certain.push_back({unit.name + ".weight", &unit.weight, &unit.grad});
    }
  };
  auto add_norm = [&](NormUnit<T>& norm) {
    part.certain.push_back({norm.name + ".gamma", &norm.state.gamma, &norm.grad_gamma});
    part.certain.push_back({norm.name + ".beta", &norm.state.beta, &norm.grad_beta});
  };
  add_conv(stem_conv_);
  add_norm(stem_bn_);
  for (auto& block : blocks_) {
    add_conv(block.conv1);
    add_norm(block.bn1);
    add_conv(block.conv2);
    add_norm(block.bn2);
    if (block.proj) {
      add_conv(*block.proj);
      add_norm(*block.proj_bn);
    }
  }
  part.certain.push_back({"fc.weight", &fc_weight_, &fc_grad_weight_});
  part.certain.push_back({"fc.bias", &fc_bias_, &fc_grad_bias_});
  return part;
}

template <typename T>
std::vector<std::pair<std::string, BasicTensor<T>*>> BasicModel<T>::named_state() {
  std::vector<std::pair<std::string, BasicTensor<T>*>> out;
  auto add_conv = [&](ConvUnit<T>& unit) {
    if (unit.variational) {
      out.emplace_back(unit.name + ".mu", &unit.var.mu);
      out.emplace_back(unit.name + ".rho", &unit.var.rho);
    } else {
      out.emplace_back(unit.name + ".weight", &unit.weight);
    }
  };
  auto add_norm = [&](NormUnit<T>& norm) {
    out.emplace_back(norm.name + ".gamma", &norm.state.gamma);
    out.emplace_back(norm.name + ".beta", &norm.state.beta);
    out.emplace_back(norm.name + ".running_mean", &norm.state.running_mean);
    out.emplace_back(norm.name + ".running_var", &norm.state.running_var);
  };
  add_conv(stem_conv_);
  add_norm(stem_bn_);
  for (auto& block : blocks_) {
    add_conv(block.conv1);
    add_norm(block.bn1);
    add_conv(block.conv2);
    add_norm(block.bn2);
    if (block.proj) {
      add_conv(*block.proj);
      add_norm(*block.proj_bn);
    }
  }
  out.emplace_back("fc.weight", &fc_weight_);
  out.emplace_back("fc.bias", &fc_bias_);
  return out;
}

template <typename T>
std::size_t BasicModel<T>::trainable_tensor_count() const {
  std::size_t count = 0;
  for (const auto* unit : conv_units()) count += unit->variational ? 2 : 1;
  count += 2 * const_cast<BasicModel*>(this)->norm_units().size();
  return count + 2;
}

template <typename T>
std::size_t BasicModel<T>::parameter_count() const {
  std::size_t count = 0;
  for (const auto* unit : conv_units()) {
    count += shape_numel(unit->spec.weight_shape()) * (unit->variational ? 2 : 1);
  }
  for (auto* norm : const_cast<BasicModel*>(this)->norm_units()) count += 2 * norm->state.channels();
  return count + fc_weight_.size() + fc_bias_.size();
}

template struct ConvUnit<float>;
template struct ConvUnit<double>;
template struct NormUnit<float>;
template struct NormUnit<double>;
template class BasicModel<float>;
template class BasicModel<double>;

}  // namespace pbcnn
