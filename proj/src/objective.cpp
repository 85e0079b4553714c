#include "pbcnn/objective.hpp"

#include <algorithm>
#include <cmath>

namespace pbcnn {

namespace {

template <typename T>
void check_labels(const BasicTensor<T>& probs, std::span<const int> labels, const char* op) {
  if (probs.rank() != 2) throw ShapeError(op, "rank", 2, probs.rank());
  if (labels.size() != probs.dim(0)) throw ShapeError(op, "labels", probs.dim(0), labels.size());
  const auto classes = static_cast<int>(probs.dim(1));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw ShapeError(op, "label[" + std::to_string(i) + "] in [0," + std::to_string(classes) + ")",
                       static_cast<std::size_t>(classes), static_cast<std::size_t>(labels[i] < 0 ? 0 : labels[i]));
    }
  }
}

}  // namespace

LossBreakdown make_breakdown(double l_cen, double kl_term, double nll_term, double kl_weight) {
  LossBreakdown b;
  b.l_cen = l_cen;
  b.kl_term = kl_term;
  b.nll_term = nll_term;
  b.kl_weight = kl_weight;
  b.l_unc = uncertain_loss(kl_term, nll_term, kl_weight);
  b.total = b.l_cen + b.l_unc;
  return b;
}

template <typename T>
double cross_entropy(const BasicTensor<T>& probs, std::span<const int> labels) {
  check_labels(probs, labels, "cross_entropy");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = std::max(static_cast<double>(probs.at(i, static_cast<std::size_t>(labels[i]))), kProbabilityFloor);
    total -= std::log(p);
  }
  return total / static_cast<double>(labels.size());
}

template <typename T>
BasicTensor<T> cross_entropy_logit_grad(const BasicTensor<T>& probs, std::span<const int> labels) {
  check_labels(probs, labels, "cross_entropy_logit_grad");
  BasicTensor<T> grad = probs;
  const T inv_n = T(1) / static_cast<T>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) grad.at(i, static_cast<std::size_t>(labels[i])) -= T(1);
  for (auto& g : grad.values()) g *= inv_n;
  return grad;
}

double uncertain_loss(double kl, double nll, double kl_weight) { return kl_weight * kl + nll; }

Tensor predictive_distribution(Model& model, const Tensor& images, int n_samples, Rng& rng) {
  if (n_samples < 1) throw ConfigError("samples", "predictive distribution needs at least one sample");
  const ForwardOptions options{WeightMode::Sampled, false, false};
  std::vector<double> sum;
  Shape shape;
  for (int s = 0; s < n_samples; ++s) {
    const Tensor probs = softmax(model.forward(images, options, &rng));
    if (sum.empty()) {
      sum.assign(probs.size(), 0.0);
      shape = probs.shape();
    }
    for (std::size_t i = 0; i < probs.size(); ++i) sum[i] += probs[i];
  }
  Tensor out(shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(sum[i] / n_samples);
  return out;
}

double predictive_entropy(std::span<const float> probs) {
  double h = 0.0;
  for (float p : probs) {
    if (p > 0.0f) h -= static_cast<double>(p) * std::log(static_cast<double>(p));
  }
  return h;
}

std::size_t argmax(std::span<const float> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

template double cross_entropy(const BasicTensor<float>&, std::span<const int>);
template double cross_entropy(const BasicTensor<double>&, std::span<const int>);
template BasicTensor<float> cross_entropy_logit_grad(const BasicTensor<float>&, std::span<const int>);
template BasicTensor<double> cross_entropy_logit_grad(const BasicTensor<double>&, std::span<const int>);

}  // namespace pbcnn
