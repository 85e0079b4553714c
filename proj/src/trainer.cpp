#include "pbcnn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "pbcnn/error.hpp"
#include "pbcnn/evaluate.hpp"
#include "pbcnn/nn_ops.hpp"

namespace pbcnn {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate", "must be positive and finite");
  }
  if (epochs < 0) throw ConfigError("epochs", "must be non-negative, got " + std::to_string(epochs));
  if (batch_size < 2) {
    throw ConfigError("batch_size", "must be at least 2 (batch normalization), got " + std::to_string(batch_size));
  }
  if (mc_samples < 1) throw ConfigError("mc_samples", "must be at least 1, got " + std::to_string(mc_samples));
  if (kl_weight && (!(*kl_weight > 0.0) || !std::isfinite(*kl_weight))) {
    throw ConfigError("kl_weight", "must be positive and finite or 'auto'");
  }
  if (eval_every < 1) throw ConfigError("eval_every", "must be at least 1, got " + std::to_string(eval_every));
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum", "must lie in [0, 1)");
  prior.validate();
}

double TrainConfig::resolved_kl_weight(std::size_t batches_per_epoch) const {
  if (kl_weight) return *kl_weight;
  if (batches_per_epoch == 0) throw ConfigError("kl_weight", "auto weighting needs at least one batch per epoch");
  return 1.0 / static_cast<double>(batches_per_epoch);
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json doc;
  doc["learning_rate"] = learning_rate;
  doc["epochs"] = epochs;
  doc["batch_size"] = batch_size;
  doc["mc_samples"] = mc_samples;
  doc["kl_weight"] = kl_weight ? nlohmann::json(*kl_weight) : nlohmann::json("auto");
  doc["seed"] = seed;
  doc["eval_every"] = eval_every;
  doc["momentum"] = momentum;
  doc["prior_sigma"] = prior.sigma();
  doc["augment_flip"] = augment_flip;
  return doc;
}

template <typename T>
GradPair<T> uncertain_backward(const BasicTensor<T>& dL_dw2, const BasicTensor<T>& dLq_dmu,
                               const BasicTensor<T>& dLq_drho, const VariationalParams<T>& params) {
  const Shape& shape = params.shape();
  for (const auto* t : {&dL_dw2, &dLq_dmu, &dLq_drho}) {
    if (t->shape() != shape) throw ShapeError("uncertain_backward", "shape", shape_numel(shape), t->size());
  }
  if (!params.has_sample || params.last_epsilon.shape() != shape || params.last_weight.shape() != shape) {
    throw StateError("uncertain_backward: no noise sample matches these parameters");
  }
  GradPair<T> out{BasicTensor<T>(shape), BasicTensor<T>(shape)};
  for (std::size_t i = 0; i < params.mu.size(); ++i) {
    const double rho = params.rho[i];
    const T eps = params.last_epsilon[i];
    const T w = params.mu[i] + static_cast<T>(softplus(rho)) * eps;
    if (w != params.last_weight[i]) {
      throw StateError("uncertain_backward: stale noise sample (w2 was not drawn from the current mu, rho, eps)");
    }
    out.delta_mu[i] = dL_dw2[i] + dLq_dmu[i];
    out.delta_rho[i] = dL_dw2[i] * eps * static_cast<T>(sigmoid(rho)) + dLq_drho[i];
  }
  return out;
}

template <typename T>
BasicTensor<T> sgd_step(const BasicTensor<T>& param, const BasicTensor<T>& grad, double eta) {
  BasicTensor<T> out = param;
  sgd_step_inplace(out, grad, eta);
  return out;
}

template <typename T>
void sgd_step_inplace(BasicTensor<T>& param, const BasicTensor<T>& grad, double eta) {
  if (param.shape() != grad.shape()) throw ShapeError("sgd_step", "size", param.size(), grad.size());
  const T lr = static_cast<T>(eta);
  for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
}

template <typename T>
UncertainGradients<T> uncertain_gradients(BasicModel<T>& model, const BasicTensor<T>& images,
                                          std::span<const int> labels, const PriorSpec& prior, double kl_weight,
                                          WeightMode mode, Rng* rng) {
  UncertainGradients<T> out;
  const auto probs = softmax(model.forward(images, ForwardOptions{mode, true, false}, rng));
  out.nll = cross_entropy(probs, labels);
  const auto units = model.variational_units();
  for (auto* unit : units) out.kl += kl_mc(unit->var, prior, unit->var.last_weight);
  if (units.empty()) return out;

  model.backward(cross_entropy_logit_grad(probs, labels), GradTarget::Uncertain);
  const T klw = static_cast<T>(kl_weight);
  for (auto* unit : units) {
    const auto& w = unit->var.last_weight;
    const auto lq = log_q_weight_grad(unit->var, w);
    const auto lp = log_prior_weight_grad(prior, w);
    BasicTensor<T> dL_dw2 = unit->grad;
    for (std::size_t i = 0; i < dL_dw2.size(); ++i) dL_dw2[i] = dL_dw2[i] + klw * lq[i] - klw * lp[i];
    auto partials = log_q_direct_partials(unit->var, w);
    for (auto& v : partials.d_mu.values()) v *= klw;
    for (auto& v : partials.d_rho.values()) v *= klw;
    out.grads.push_back(uncertain_backward(dL_dw2, partials.d_mu, partials.d_rho, unit->var));
  }
  return out;
}

template <typename T>
double uncertain_loss_value(BasicModel<T>& model, const BasicTensor<T>& images, std::span<const int> labels,
                            const PriorSpec& prior, double kl_weight, WeightMode mode, Rng* rng) {
  const auto probs = softmax(model.forward(images, ForwardOptions{mode, true, false}, rng));
  double kl = 0.0;
  for (auto* unit : model.variational_units()) kl += kl_mc(unit->var, prior, unit->var.last_weight);
  return uncertain_loss(kl, cross_entropy(probs, labels), kl_weight);
}

template <typename T>
double certain_gradients(BasicModel<T>& model, const BasicTensor<T>& images, std::span<const int> labels,
                         bool update_running_stats, std::size_t* n_correct) {
  const auto probs = softmax(model.forward(images, ForwardOptions{WeightMode::Mean, true, update_running_stats}));
  const double l_cen = cross_entropy(probs, labels);
  if (n_correct) {
    *n_correct = 0;
    const std::size_t classes = probs.dim(1);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < classes; ++j) {
        if (probs.at(i, j) > probs.at(i, best)) best = j;
      }
      *n_correct += static_cast<int>(best) == labels[i] ? 1 : 0;
    }
  }
  model.backward(cross_entropy_logit_grad(probs, labels), GradTarget::Certain);
  return l_cen;
}

template <typename T>
double certain_loss_value(BasicModel<T>& model, const BasicTensor<T>& images, std::span<const int> labels) {
  return cross_entropy(softmax(model.forward(images, ForwardOptions{WeightMode::Mean, true, false})), labels);
}

namespace {

[[noreturn]] void numeric_failure(Model& model, const char* phase, double loss) {
  std::string layer = "?";
  double worst = -1.0;
  auto scan = [&](const std::string& name, const Tensor& grad) {
    for (float g : grad.values()) {
      const double a = std::isfinite(g) ? std::abs(static_cast<double>(g)) : std::numeric_limits<double>::infinity();
      if (a > worst) {
        worst = a;
        layer = name;
      }
    }
  };
  auto part = model.partition();
  for (const auto& t : part.certain) scan(t.name, *t.grad);
  for (const auto& v : part.uncertain) scan(v.name, v.unit->grad);
  throw NumericError(model.step(), layer, worst,
                     std::string(phase) + " loss is not finite (" + std::to_string(loss) + ") at step " +
                         std::to_string(model.step()) + "; largest gradient in " + layer);
}

void apply_update(Tensor& param, const Tensor& grad, const TrainConfig& config, TrainState& state) {
  if (config.momentum == 0.0) {
    sgd_step_inplace(param, grad, config.learning_rate);
    return;
  }
  auto& v = state.velocity[&param];
  if (v.empty()) v.assign(param.size(), 0.0f);
  const auto m = static_cast<float>(config.momentum);
  const auto lr = static_cast<float>(config.learning_rate);
  for (std::size_t i = 0; i < param.size(); ++i) {
    v[i] = m * v[i] + grad[i];
    param[i] -= lr * v[i];
  }
}

}  // namespace

std::pair<double, double> uncertain_phase(Model& model, const Batch& batch, const TrainConfig& config, Rng& rng,
                                          TrainState& state) {
  auto units = model.variational_units();
  if (units.empty()) return {0.0, 0.0};

  std::vector<GradPair<float>> sum;
  double kl = 0.0, nll = 0.0;
  for (int n = 0; n < config.mc_samples; ++n) {
    auto draw = uncertain_gradients(model, batch.images, batch.labels, config.prior, state.kl_weight,
                                    WeightMode::Sampled, &rng);
    if (!std::isfinite(draw.nll) || !std::isfinite(draw.kl)) {
      numeric_failure(model, "uncertain", uncertain_loss(draw.kl, draw.nll, state.kl_weight));
    }
    kl += draw.kl;
    nll += draw.nll;
    if (sum.empty()) {
      sum = std::move(draw.grads);
      continue;
    }
    for (std::size_t u = 0; u < sum.size(); ++u) {
      add_inplace(sum[u].delta_mu, draw.grads[u].delta_mu);
      add_inplace(sum[u].delta_rho, draw.grads[u].delta_rho);
    }
  }
  if (config.mc_samples > 1) {
    const float inv = 1.0f / static_cast<float>(config.mc_samples);
    for (auto& g : sum) {
      for (auto& v : g.delta_mu.values()) v *= inv;
      for (auto& v : g.delta_rho.values()) v *= inv;
    }
  }
  for (std::size_t u = 0; u < units.size(); ++u) {
    apply_update(units[u]->var.mu, sum[u].delta_mu, config, state);
    apply_update(units[u]->var.rho, sum[u].delta_rho, config, state);
  }
  const double n = config.mc_samples;
  return {kl / n, nll / n};
}

double certain_phase(Model& model, const Batch& batch, const TrainConfig& config, TrainState& state) {
  const double l_cen = certain_gradients(model, batch.images, batch.labels, true, &state.last_correct);
  if (!std::isfinite(l_cen)) numeric_failure(model, "certain", l_cen);
  for (auto& t : model.partition().certain) apply_update(*t.value, *t.grad, config, state);
  return l_cen;
}

LossBreakdown train_step(Model& model, const Batch& batch, const TrainConfig& config, Rng& rng, TrainState& state) {
  if (batch.labels.empty()) throw StateError("train_step: empty batch");
  const auto [kl, nll] = uncertain_phase(model, batch, config, rng, state);
  const double l_cen = certain_phase(model, batch, config, state);
  model.set_step(model.step() + 1);
  return make_breakdown(l_cen, kl, nll, state.kl_weight);
}

std::vector<TrainRecord> train(Model& model, const Dataset& dataset, const TrainConfig& config,
                               const TrainHooks& hooks) {
  config.validate();
  if (dataset.count(Split::PublicTest) == 0) {
    throw ConfigError("data", "dataset has no PublicTest (verification) images");
  }
  std::vector<TrainRecord> records;
  if (config.epochs == 0) return records;

  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  auto make_iterator = [&](int epoch) {
    BatchOptions options;
    options.batch_size = batch_size;
    options.shuffle_seed = derive_seed(config.seed, Stream::Shuffle, static_cast<std::uint64_t>(epoch));
    options.drop_last = true;
    options.horizontal_flip = config.augment_flip;
    return BatchIterator(dataset, Split::Training, options);
  };
  const std::size_t batches_per_epoch = make_iterator(1).num_batches();
  if (batches_per_epoch == 0) {
    throw ConfigError("batch_size", "exceeds the number of Training images (" +
                                        std::to_string(dataset.count(Split::Training)) + ")");
  }

  TrainState state;
  state.kl_weight = config.resolved_kl_weight(batches_per_epoch);
  Rng rng = make_rng(config.seed, Stream::Sampling);
  const bool variational = !model.variational_units().empty();
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    auto it = make_iterator(epoch);
    double l_cen = 0.0, kl = 0.0, nll = 0.0;
    std::size_t correct = 0, seen = 0, steps = 0;
    while (auto batch = it.next()) {
      const LossBreakdown loss = train_step(model, *batch, config, rng, state);
      l_cen += loss.l_cen;
      kl += loss.kl_term;
      nll += loss.nll_term;
      correct += state.last_correct;
      seen += batch->labels.size();
      ++steps;
      if (hooks.on_step) hooks.on_step(model.step(), loss);
    }
    const double n = static_cast<double>(steps);
    const LossBreakdown mean = make_breakdown(l_cen / n, kl / n, nll / n, state.kl_weight);

    TrainRecord row;
    row.kind = TrainRecord::Kind::Epoch;
    row.epoch = epoch;
    row.step = model.step();
    row.l_cen = mean.l_cen;
    row.l_unc = mean.l_unc;
    row.kl_term = mean.kl_term;
    row.nll_term = mean.nll_term;
    row.kl_weight = mean.kl_weight;
    row.total = mean.total;
    row.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    if (variational) row.sigma = sigma_profile(model);
    if (hooks.timing) row.wall_seconds = elapsed();
    if (hooks.on_record) hooks.on_record(row);
    records.push_back(std::move(row));

    if (epoch % config.eval_every == 0) {
      TrainRecord eval_row;
      eval_row.kind = TrainRecord::Kind::Eval;
      eval_row.epoch = epoch;
      eval_row.step = model.step();
      eval_row.eval = evaluate(model, dataset, Split::PublicTest);
      if (hooks.timing) eval_row.wall_seconds = elapsed();
      if (hooks.on_record) hooks.on_record(eval_row);
      records.push_back(std::move(eval_row));
    }
  }
  return records;
}

#define PBCNN_INSTANTIATE_TRAINER(T)                                                                            \
  template GradPair<T> uncertain_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,  \
                                          const VariationalParams<T>&);                                         \
  template BasicTensor<T> sgd_step(const BasicTensor<T>&, const BasicTensor<T>&, double);                       \
  template void sgd_step_inplace(BasicTensor<T>&, const BasicTensor<T>&, double);                               \
  template UncertainGradients<T> uncertain_gradients(BasicModel<T>&, const BasicTensor<T>&, std::span<const int>, \
                                                     const PriorSpec&, double, WeightMode, Rng*);               \
  template double uncertain_loss_value(BasicModel<T>&, const BasicTensor<T>&, std::span<const int>,             \
                                       const PriorSpec&, double, WeightMode, Rng*);                             \
  template double certain_gradients(BasicModel<T>&, const BasicTensor<T>&, std::span<const int>, bool,          \
                                    std::size_t*);                                                              \
  template double certain_loss_value(BasicModel<T>&, const BasicTensor<T>&, std::span<const int>);

PBCNN_INSTANTIATE_TRAINER(float)
PBCNN_INSTANTIATE_TRAINER(double)

#undef PBCNN_INSTANTIATE_TRAINER

}  // namespace pbcnn
