#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "pbcnn/bayes_layer.hpp"

using namespace pbcnn;
using namespace pbcnn::testing;

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

VariationalParams<double> single(double mu, double rho) { return VariationalParams<double>(TensorD({1}, mu), rho); }

/// rho such that softplus(rho) == sigma.
double rho_for(double sigma) { return std::log(std::expm1(sigma)); }

struct McMean {
  double mean = 0.0;
  double standard_error = 0.0;
};

McMean mc_mean_kl(VariationalParams<double>& p, const PriorSpec& prior, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double k = kl_mc(p, prior, sample_weights(p, rng));
    sum += k;
    sq += k * k;
  }
  const double mean = sum / static_cast<double>(n);
  return {mean, std::sqrt((sq / n - mean * mean) / n)};
}

}  // namespace

TEST(Softplus, ReferenceValues) {
  EXPECT_NEAR(softplus(0.0), std::numbers::ln2, 1e-7);
  // log1p(exp(-10)) to 64-bit precision.
  EXPECT_NEAR(softplus(-10.0), 4.539889921686465e-05, 1e-15);
  EXPECT_NEAR(softplus(50.0), 50.0, 1e-12);
  EXPECT_TRUE(std::isfinite(softplus(1000.0)));
  EXPECT_NEAR(softplus(1000.0), 1000.0, 1e-9);
  EXPECT_NEAR(softplus(-5.0), 6.715348489118068e-03, 1e-15);
}

TEST(Softplus, TensorFormMatchesScalar) {
  const Tensor rho({3}, std::vector<float>{-10.0f, 0.0f, 50.0f});
  const auto s = softplus(rho);
  EXPECT_FLOAT_EQ(s[0], 4.53989e-5f);
  EXPECT_FLOAT_EQ(s[1], 0.6931472f);
  EXPECT_FLOAT_EQ(s[2], 50.0f);
}

TEST(Softplus, PositiveAndMonotoneOverRange) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> dist(-30.0, 30.0);
  std::vector<double> xs(2000);
  for (auto& x : xs) x = dist(rng);
  std::sort(xs.begin(), xs.end());
  double prev = 0.0;
  for (double x : xs) {
    const double s = softplus(x);
    EXPECT_GT(s, 0.0);
    EXPECT_GE(s, prev);
    prev = s;
  }
  Tensor rho({61});
  for (std::size_t i = 0; i < 61; ++i) rho[i] = static_cast<float>(i) - 30.0f;
  const Tensor sigma = softplus(rho);
  for (float s : sigma.values()) EXPECT_GT(s, 0.0f);
}

TEST(SampleWeights, ForcedNoise) {
  VariationalParams<float> p(Tensor({2}, std::vector<float>{0.5f, -1.0f}), -3.0f);
  sample_weights_with_noise(p, Tensor({2}));
  EXPECT_TRUE(bitwise_equal(p.last_weight, p.mu));

  VariationalParams<double> q = single(0.0, 0.0);
  sample_weights_with_noise(q, TensorD({1}, 1.0));
  EXPECT_NEAR(q.last_weight[0], std::numbers::ln2, 1e-15);
  EXPECT_EQ(q.last_epsilon[0], 1.0);
  EXPECT_TRUE(q.has_sample);
}

TEST(SampleWeights, MonteCarloMoments) {
  VariationalParams<double> p = single(1.0, 0.0);
  Rng rng(42);
  const std::size_t n = 100000;
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = sample_weights(p, rng)[0];
    sum += w;
    sq += w * w;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(mean, 1.0, 0.01);
  EXPECT_NEAR(sd, std::numbers::ln2, 0.01);
}

TEST(SampleWeights, SameSeedSameDraw) {
  std::mt19937_64 init(3);
  VariationalParams<float> a(random_tensor<float>({4, 3, 3, 3}, init), -2.0f);
  VariationalParams<float> b = a;
  Rng ra(99), rb(99);
  sample_weights(a, ra);
  sample_weights(b, rb);
  EXPECT_TRUE(bitwise_equal(a.last_weight, b.last_weight));
  EXPECT_TRUE(bitwise_equal(a.last_epsilon, b.last_epsilon));
}

TEST(SampleWeights, ReparameterizeRequiresSample) {
  VariationalParams<float> p(Tensor({2}), -5.0f);
  EXPECT_THROW(reparameterize(p), StateError);
  EXPECT_THROW(sample_weights_with_noise(p, Tensor({3})), ShapeError);
}

TEST(LogQ, ReferenceValues) {
  auto p = single(0.0, rho_for(1.0));
  EXPECT_NEAR(log_q(p, TensorD({1}, 0.0)), -kHalfLog2Pi, 1e-12);
  EXPECT_NEAR(log_q(p, TensorD({1}, 1.0)), -kHalfLog2Pi - 0.5, 1e-12);
  EXPECT_NEAR(-kHalfLog2Pi, -0.918939, 1e-6);
}

TEST(LogQ, AdditiveOverElements) {
  VariationalParams<double> p(TensorD({5}, 0.3), -1.0);
  const double one = log_q(single(0.3, -1.0), TensorD({1}, 0.8));
  EXPECT_NEAR(log_q(p, TensorD({5}, 0.8)), 5.0 * one, 1e-12);
}

TEST(LogQ, MaximizedAtMean) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 200; ++t) {
    VariationalParams<double> p(random_tensor<double>({3}, rng), std::uniform_real_distribution<>(-4, 2)(rng));
    TensorD w = p.mu;
    auto delta = random_tensor<double>({3}, rng);
    for (std::size_t i = 0; i < 3; ++i) w[i] += delta[i];
    EXPECT_GE(log_q(p, p.mu), log_q(p, w));
  }
}

TEST(LogPrior, ReferenceValues) {
  EXPECT_NEAR(log_prior(PriorSpec::unit(), TensorD({1}, 0.0)), -kHalfLog2Pi, 1e-12);
  EXPECT_NEAR(log_prior(PriorSpec::scaled(2.0), TensorD({1}, 0.0)), -kHalfLog2Pi - std::numbers::ln2, 1e-12);
  std::mt19937_64 rng(6);
  const auto unit_q = single(0.0, rho_for(1.0));
  for (int t = 0; t < 50; ++t) {
    const TensorD w({1}, std::normal_distribution<>(0.0, 2.0)(rng));
    EXPECT_NEAR(log_prior(PriorSpec::unit(), w), log_q(unit_q, w), 1e-12);
  }
}

TEST(Prior, Validation) {
  EXPECT_THROW(PriorSpec::scaled(0.0).validate(), ConfigError);
  EXPECT_THROW(PriorSpec::scaled(-1.0).validate(), ConfigError);
  EXPECT_NO_THROW(PriorSpec::scaled(0.5).validate());
}

TEST(KlMc, ZeroWhenPosteriorEqualsPrior) {
  auto p = single(0.0, rho_for(1.0));
  Rng rng(1);
  for (int t = 0; t < 100; ++t) EXPECT_NEAR(kl_mc(p, PriorSpec::unit(), sample_weights(p, rng)), 0.0, 1e-12);
}

TEST(KlMc, MeanApproachesClosedForm) {
  // Per-draw variance is (σ²-1)²/2 + μ²σ², so the bound is in standard errors.
  auto a = single(0.5, rho_for(1.0));
  const auto ma = mc_mean_kl(a, PriorSpec::unit(), 100000, 7);
  EXPECT_NEAR(ma.standard_error, 0.5 / std::sqrt(1e5), 1e-4);
  EXPECT_NEAR(ma.mean, 0.125, 4.0 * ma.standard_error);
  auto b = single(0.0, rho_for(2.0));
  const double expected = 1.5 - std::numbers::ln2;  // (σ² − 1)/2 − ln σ
  EXPECT_NEAR(expected, 0.806853, 1e-6);
  const auto mb = mc_mean_kl(b, PriorSpec::unit(), 100000, 8);
  EXPECT_NEAR(mb.mean, expected, 4.0 * mb.standard_error);
}

TEST(KlClosedForm, ReferenceValues) {
  EXPECT_NEAR(kl_closed_form(single(0.0, rho_for(1.0)), PriorSpec::unit()), 0.0, 1e-12);
  EXPECT_NEAR(kl_closed_form(single(0.0, rho_for(2.0)), PriorSpec::scaled(2.0)), 0.0, 1e-12);
  EXPECT_NEAR(kl_closed_form(single(0.5, rho_for(1.0)), PriorSpec::unit()), 0.125, 1e-7);
  // ln(1/0.7) + (0.49 + 0.09)/2 − ½ evaluated independently in 64-bit.
  EXPECT_NEAR(kl_closed_form(single(0.3, rho_for(0.7)), PriorSpec::unit()), 0.14667494393873237, 1e-9);
}

TEST(KlClosedForm, SumsOverElements) {
  VariationalParams<double> p(TensorD({4}, 0.5), rho_for(1.0));
  EXPECT_NEAR(kl_closed_form(p, PriorSpec::unit()), 0.5, 1e-12);
}

TEST(KlMc, ConsistentOverRandomConfigs) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 50; ++t) {
    auto p = single(std::uniform_real_distribution<>(-1, 1)(rng), rho_for(std::uniform_real_distribution<>(0.5, 2)(rng)));
    const double exact = kl_closed_form(p, PriorSpec::unit());
    const auto est = mc_mean_kl(p, PriorSpec::unit(), 100000, 100 + t);
    EXPECT_NEAR(est.mean, exact, 4.5 * est.standard_error) << t;
  }
}

TEST(LogQPartials, MatchFiniteDifferencesAtFixedWeight) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 100; ++t) {
    VariationalParams<double> p(random_tensor<double>({3}, rng), 0.0);
    p.rho = random_tensor<double>({3}, rng, -3.0, 2.0);
    const TensorD w = random_tensor<double>({3}, rng, -2.0, 2.0);
    const auto partials = log_q_direct_partials(p, w);
    const auto wgrad = log_q_weight_grad(p, w);
    const auto pgrad = log_prior_weight_grad(PriorSpec::scaled(1.5), w);
    TensorD wv = w;
    for (std::size_t i = 0; i < 3; ++i) {
      auto lq = [&] { return log_q(p, w); };
      EXPECT_LE(gradient_error(partials.d_mu[i], central_difference(&p.mu[i], lq, 1e-5)), 1e-5);
      EXPECT_LE(gradient_error(partials.d_rho[i], central_difference(&p.rho[i], lq, 1e-5)), 1e-5);
      auto lqw = [&] { return log_q(p, wv); };
      EXPECT_LE(gradient_error(wgrad[i], central_difference(&wv[i], lqw, 1e-5)), 1e-5);
      auto lpw = [&] { return log_prior(PriorSpec::scaled(1.5), wv); };
      EXPECT_LE(gradient_error(pgrad[i], central_difference(&wv[i], lpw, 1e-5)), 1e-5);
    }
  }
}
