#pragma once

// Gaussian variational weights: theta = (mu, rho), sigma = softplus(rho),
// reparameterized draws w = mu + sigma ∘ eps, and the log-densities that
// make up the Monte-Carlo free energy.

#include <string>

#include "pbcnn/rng.hpp"
#include "pbcnn/tensor.hpp"

namespace pbcnn {

/// log(1 + exp(x)), overflow-safe for large positive x.
double softplus(double x);
double sigmoid(double x);

template <typename T>
BasicTensor<T> softplus(const BasicTensor<T>& rho);

struct PriorSpec {
  enum class Kind { UnitGaussian, ScaledGaussian };

  Kind kind = Kind::UnitGaussian;
  double sigma_p = 1.0;

  static PriorSpec unit() { return {}; }
  static PriorSpec scaled(double sigma) { return {Kind::ScaledGaussian, sigma}; }

  double sigma() const { return kind == Kind::UnitGaussian ? 1.0 : sigma_p; }
  void validate() const;
  std::string to_string() const;
};

template <typename T>
struct VariationalParams {
  BasicTensor<T> mu;
  BasicTensor<T> rho;
  BasicTensor<T> last_epsilon;
  BasicTensor<T> last_weight;
  bool has_sample = false;

  VariationalParams() = default;
  VariationalParams(BasicTensor<T> mean, T rho_init);

  const Shape& shape() const { return mu.shape(); }
  BasicTensor<T> sigma() const { return softplus(rho); }

  template <typename U>
  VariationalParams<U> cast() const {
    VariationalParams<U> out;
    out.mu = mu.template cast<U>();
    out.rho = rho.template cast<U>();
    out.last_epsilon = last_epsilon.template cast<U>();
    out.last_weight = last_weight.template cast<U>();
    out.has_sample = has_sample;
    return out;
  }
};

/// Default rho initialization: sigma = softplus(-5) ≈ 6.7e-3.
inline constexpr double kDefaultRhoInit = -5.0;

/// Draws eps ~ N(0, I), stores eps and w = mu + softplus(rho) ∘ eps; returns w.
template <typename T>
const BasicTensor<T>& sample_weights(VariationalParams<T>& params, Rng& rng);

/// Same as sample_weights with a caller-supplied eps.
template <typename T>
const BasicTensor<T>& sample_weights_with_noise(VariationalParams<T>& params, const BasicTensor<T>& epsilon);

/// Recomputes w from the stored eps and the current (mu, rho).
template <typename T>
const BasicTensor<T>& reparameterize(VariationalParams<T>& params);

/// Sum over elements of log N(w; mu, softplus(rho)^2).
template <typename T>
double log_q(const VariationalParams<T>& params, const BasicTensor<T>& w);

/// Sum over elements of log N(w; 0, sigma_p^2).
template <typename T>
double log_prior(const PriorSpec& prior, const BasicTensor<T>& w);

/// Single-sample estimate log q(w|theta) - log P(w).
template <typename T>
double kl_mc(const VariationalParams<T>& params, const PriorSpec& prior, const BasicTensor<T>& w_sampled);

/// Exact KL between the diagonal posterior and a zero-mean Gaussian prior.
template <typename T>
double kl_closed_form(const VariationalParams<T>& params, const PriorSpec& prior);

/// d log q / d w at fixed theta: -(w - mu) / sigma^2.
template <typename T>
BasicTensor<T> log_q_weight_grad(const VariationalParams<T>& params, const BasicTensor<T>& w);

/// d log P / d w: -w / sigma_p^2.
template <typename T>
BasicTensor<T> log_prior_weight_grad(const PriorSpec& prior, const BasicTensor<T>& w);

template <typename T>
struct LogQPartials {
  BasicTensor<T> d_mu;   // (w - mu) / sigma^2
  BasicTensor<T> d_rho;  // (-1/sigma + (w - mu)^2 / sigma^3) ∘ sigmoid(rho)
};

/// Direct partials of log q(w|theta) with respect to theta at fixed w.
template <typename T>
LogQPartials<T> log_q_direct_partials(const VariationalParams<T>& params, const BasicTensor<T>& w);

}  // namespace pbcnn
