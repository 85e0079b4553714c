#pragma once

#include <span>

#include "pbcnn/model.hpp"
#include "pbcnn/tensor.hpp"

namespace pbcnn {

/// One step's objective, J = l_cen + l_unc.
struct LossBreakdown {
  double l_cen = 0.0;     // cross-entropy with w2 = mu
  double l_unc = 0.0;     // kl_weight * kl_term + nll_term
  double kl_term = 0.0;   // mean over draws of log q(w2|theta) - log P(w2)
  double nll_term = 0.0;  // mean over draws of categorical NLL with sampled w2
  double kl_weight = 0.0;
  double total = 0.0;
};

/// Fills l_unc and total from the parts.
LossBreakdown make_breakdown(double l_cen, double kl_term, double nll_term, double kl_weight);

inline constexpr double kProbabilityFloor = 1e-12;

/// Batch mean of -log p[i, label_i], with p clamped at 1e-12.
template <typename T>
double cross_entropy(const BasicTensor<T>& probs, std::span<const int> labels);

/// d(cross_entropy(softmax(z)))/dz = (p - onehot) / N.
template <typename T>
BasicTensor<T> cross_entropy_logit_grad(const BasicTensor<T>& probs, std::span<const int> labels);

double uncertain_loss(double kl, double nll, double kl_weight);

/// Mean of softmax outputs over `n_samples` sampled forward passes (BN in eval mode).
Tensor predictive_distribution(Model& model, const Tensor& images, int n_samples, Rng& rng);

/// -Σ p log p in nats; zero-probability entries contribute nothing.
double predictive_entropy(std::span<const float> probs);

/// Index of the largest entry; ties resolve to the lowest index.
std::size_t argmax(std::span<const float> row);

}  // namespace pbcnn
