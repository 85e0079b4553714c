#include "pbcnn/bayes_layer.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace pbcnn {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2π)

void require_same_shape(const char* op, const Shape& expected, const Shape& actual) {
  if (expected.size() != actual.size()) throw ShapeError(op, "rank", expected.size(), actual.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i] != actual[i]) throw ShapeError(op, "dim" + std::to_string(i), expected[i], actual[i]);
  }
}

double gaussian_log_density(double x, double mean, double sigma) {
  const double z = (x - mean) / sigma;
  return -kHalfLog2Pi - std::log(sigma) - 0.5 * z * z;
}

}  // namespace

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename T>
BasicTensor<T> softplus(const BasicTensor<T>& rho) {
  BasicTensor<T> out(rho.shape());
  for (std::size_t i = 0; i < rho.size(); ++i) out[i] = static_cast<T>(softplus(static_cast<double>(rho[i])));
  return out;
}

void PriorSpec::validate() const {
  if (!(sigma() > 0.0) || !std::isfinite(sigma())) {
    throw ConfigError("prior_sigma", "prior standard deviation must be positive and finite");
  }
}

std::string PriorSpec::to_string() const {
  std::ostringstream os;
  if (kind == Kind::UnitGaussian) {
    os << "N(0,1)";
  } else {
    os << "N(0," << sigma_p << "^2)";
  }
  return os.str();
}

template <typename T>
VariationalParams<T>::VariationalParams(BasicTensor<T> mean, T rho_init)
    : mu(std::move(mean)), rho(mu.shape(), rho_init), last_epsilon(mu.shape()), last_weight(mu) {}

template <typename T>
const BasicTensor<T>& sample_weights(VariationalParams<T>& params, Rng& rng) {
  std::normal_distribution<T> normal(T(0), T(1));
  BasicTensor<T> eps(params.shape());
  for (auto& e : eps.values()) e = normal(rng);
  return sample_weights_with_noise(params, eps);
}

template <typename T>
const BasicTensor<T>& sample_weights_with_noise(VariationalParams<T>& params, const BasicTensor<T>& epsilon) {
  require_same_shape("sample_weights", params.shape(), epsilon.shape());
  params.last_epsilon = epsilon;
  params.has_sample = true;
  return reparameterize(params);
}

template <typename T>
const BasicTensor<T>& reparameterize(VariationalParams<T>& params) {
  if (!params.has_sample) throw StateError("reparameterize: no noise sample has been drawn");
  if (params.last_weight.shape() != params.shape()) params.last_weight = BasicTensor<T>(params.shape());
  for (std::size_t i = 0; i < params.mu.size(); ++i) {
    const T sigma = static_cast<T>(softplus(static_cast<double>(params.rho[i])));
    params.last_weight[i] = params.mu[i] + sigma * params.last_epsilon[i];
  }
  return params.last_weight;
}

template <typename T>
double log_q(const VariationalParams<T>& params, const BasicTensor<T>& w) {
  require_same_shape("log_q", params.shape(), w.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    total += gaussian_log_density(w[i], params.mu[i], softplus(static_cast<double>(params.rho[i])));
  }
  return total;
}

template <typename T>
double log_prior(const PriorSpec& prior, const BasicTensor<T>& w) {
  const double sigma_p = prior.sigma();
  double total = 0.0;
  for (T v : w.values()) total += gaussian_log_density(v, 0.0, sigma_p);
  return total;
}

template <typename T>
double kl_mc(const VariationalParams<T>& params, const PriorSpec& prior, const BasicTensor<T>& w_sampled) {
  return log_q(params, w_sampled) - log_prior(prior, w_sampled);
}

template <typename T>
double kl_closed_form(const VariationalParams<T>& params, const PriorSpec& prior) {
  const double sigma_p = prior.sigma();
  const double var_p = sigma_p * sigma_p;
  double total = 0.0;
  for (std::size_t i = 0; i < params.mu.size(); ++i) {
    const double sigma = softplus(static_cast<double>(params.rho[i]));
    const double mu = params.mu[i];
    total += std::log(sigma_p / sigma) + (sigma * sigma + mu * mu) / (2.0 * var_p) - 0.5;
  }
  return total;
}

template <typename T>
BasicTensor<T> log_q_weight_grad(const VariationalParams<T>& params, const BasicTensor<T>& w) {
  require_same_shape("log_q_weight_grad", params.shape(), w.shape());
  BasicTensor<T> out(w.shape());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double sigma = softplus(static_cast<double>(params.rho[i]));
    const double diff = static_cast<double>(w[i]) - params.mu[i];
    out[i] = static_cast<T>(-(diff / (sigma * sigma)));
  }
  return out;
}

template <typename T>
BasicTensor<T> log_prior_weight_grad(const PriorSpec& prior, const BasicTensor<T>& w) {
  const double var_p = prior.sigma() * prior.sigma();
  BasicTensor<T> out(w.shape());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = static_cast<T>(-static_cast<double>(w[i]) / var_p);
  return out;
}

template <typename T>
LogQPartials<T> log_q_direct_partials(const VariationalParams<T>& params, const BasicTensor<T>& w) {
  require_same_shape("log_q_direct_partials", params.shape(), w.shape());
  LogQPartials<T> out{BasicTensor<T>(w.shape()), BasicTensor<T>(w.shape())};
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double rho = params.rho[i];
    const double sigma = softplus(rho);
    const double diff = static_cast<double>(w[i]) - params.mu[i];
    // Same expression as log_q_weight_grad so the two cancel exactly.
    out.d_mu[i] = static_cast<T>(diff / (sigma * sigma));
    const double d_sigma = -1.0 / sigma + diff * diff / (sigma * sigma * sigma);
    out.d_rho[i] = static_cast<T>(d_sigma * sigmoid(rho));
  }
  return out;
}

#define PBCNN_INSTANTIATE_BAYES(T)                                                                         \
  template BasicTensor<T> softplus(const BasicTensor<T>&);                                                 \
  template struct VariationalParams<T>;                                                                    \
  template const BasicTensor<T>& sample_weights(VariationalParams<T>&, Rng&);                              \
  template const BasicTensor<T>& sample_weights_with_noise(VariationalParams<T>&, const BasicTensor<T>&);  \
  template const BasicTensor<T>& reparameterize(VariationalParams<T>&);                                    \
  template double log_q(const VariationalParams<T>&, const BasicTensor<T>&);                               \
  template double log_prior(const PriorSpec&, const BasicTensor<T>&);                                      \
  template double kl_mc(const VariationalParams<T>&, const PriorSpec&, const BasicTensor<T>&);             \
  template double kl_closed_form(const VariationalParams<T>&, const PriorSpec&);                           \
  template BasicTensor<T> log_q_weight_grad(const VariationalParams<T>&, const BasicTensor<T>&);           \
  template BasicTensor<T> log_prior_weight_grad(const PriorSpec&, const BasicTensor<T>&);                  \
  template LogQPartials<T> log_q_direct_partials(const VariationalParams<T>&, const BasicTensor<T>&);

PBCNN_INSTANTIATE_BAYES(float)
PBCNN_INSTANTIATE_BAYES(double)

#undef PBCNN_INSTANTIATE_BAYES

}  // namespace pbcnn
