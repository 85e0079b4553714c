#include "pbcnn/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pbcnn/error.hpp"
#include "pbcnn/objective.hpp"

namespace pbcnn {

std::string EvalMode::to_string() const {
  return kind == Kind::Mean ? "mean" : "mc(" + std::to_string(samples) + ")";
}

EvalMode EvalMode::parse(const std::string& text) {
  if (text == "mean") return mean();
  if (text.starts_with("mc(") && text.ends_with(")")) {
    const std::string inner = text.substr(3, text.size() - 4);
    std::size_t used = 0;
    int n = 0;
    try {
      n = std::stoi(inner, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == inner.size() && n >= 1) return mc(n);
  }
  throw ConfigError("mode", "expected 'mean' or 'mc(N)', got '" + text + "'");
}

EvalResult evaluate(Model& model, const Dataset& dataset, Split split, const EvalMode& mode, Rng* rng) {
  if (mode.kind == EvalMode::Kind::MonteCarlo) {
    if (mode.samples < 1) throw ConfigError("samples", "must be at least 1");
    if (!rng) throw StateError("evaluate: mc mode requires a random generator");
  }
  BatchIterator it(dataset, split, BatchOptions{kEvalBatchSize, std::nullopt, false, false});

  EvalResult result;
  result.split = std::string(split_name(split));
  result.mode = mode;
  double entropy_sum = 0.0;
  while (auto batch = it.next()) {
    Tensor probs = mode.kind == EvalMode::Kind::Mean ? softmax(model.forward(batch->images, ForwardOptions{}))
                                                     : predictive_distribution(model, batch->images, mode.samples, *rng);
    const std::size_t classes = probs.dim(1);
    for (std::size_t i = 0; i < batch->labels.size(); ++i) {
      std::span<const float> row(probs.data() + i * classes, classes);
      if (static_cast<int>(argmax(row)) == batch->labels[i]) ++result.n_correct;
      entropy_sum += predictive_entropy(row);
    }
    result.n_total += batch->labels.size();
  }
  result.accuracy = static_cast<double>(result.n_correct) / static_cast<double>(result.n_total);
  result.mean_predictive_entropy = entropy_sum / static_cast<double>(result.n_total);
  return result;
}

SigmaProfile sigma_profile(const Model& model) {
  SigmaProfile profile;
  for (const auto* unit : model.variational_units()) {
    LayerSigma s;
    s.layer = unit->name;
    s.depth = unit->depth;
    s.min = std::numeric_limits<double>::infinity();
    s.max = -std::numeric_limits<double>::infinity();
    double sum = 0.0, sq = 0.0;
    for (float rho : unit->var.rho.values()) {
      const double sigma = softplus(static_cast<double>(rho));
      s.min = std::min(s.min, sigma);
      s.max = std::max(s.max, sigma);
      sum += sigma;
      sq += sigma * sigma;
    }
    const auto n = static_cast<double>(unit->var.rho.size());
    s.mean = sum / n;
    s.std = std::sqrt(std::max(sq / n - s.mean * s.mean, 0.0));
    profile.push_back(std::move(s));
  }
  if (profile.empty()) throw StateError("sigma_profile: model has no variational layers");
  std::stable_sort(profile.begin(), profile.end(),
                   [](const LayerSigma& a, const LayerSigma& b) { return a.depth < b.depth; });
  return profile;
}

}  // namespace pbcnn
