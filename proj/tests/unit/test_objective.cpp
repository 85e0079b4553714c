#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "pbcnn/objective.hpp"

using namespace pbcnn;
using namespace pbcnn::testing;

namespace {

Tensor tiny_images(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto arch = ArchSpec::tiny();
  return random_tensor<float>({n, arch.channels, arch.height, arch.width}, rng, 0.0, 1.0);
}

void set_rho(Model& model, float rho) {
  for (auto* u : model.variational_units()) u->var.rho.fill(rho);
}

}  // namespace

TEST(CrossEntropy, ReferenceValues) {
  const std::vector<int> label0{0};
  Tensor onehot({1, 3}, std::vector<float>{1, 0, 0});
  EXPECT_EQ(cross_entropy(onehot, label0), 0.0);

  const std::vector<int> label3{3};
  EXPECT_NEAR(cross_entropy(Tensor({1, 7}, 1.0f / 7.0f), label3), std::log(7.0), 1e-6);
  EXPECT_NEAR(std::log(7.0), 1.945910, 1e-6);

  const std::vector<int> label1{1};
  EXPECT_NEAR(cross_entropy(TensorD({1, 3}, std::vector<double>{0.5, 0.25, 0.25}), label1), std::log(4.0), 1e-12);
  EXPECT_NEAR(std::log(4.0), 1.386294, 1e-6);
}

TEST(CrossEntropy, BatchMeanAndClamp) {
  const std::vector<int> labels{0, 1};
  TensorD p({2, 2}, std::vector<double>{0.5, 0.5, 1.0, 0.0});
  // Second row puts zero mass on its label: -log(1e-12).
  EXPECT_NEAR(cross_entropy(p, labels), 0.5 * (std::log(2.0) - std::log(1e-12)), 1e-9);
}

TEST(CrossEntropy, LabelOutOfRange) {
  const std::vector<int> bad{7};
  EXPECT_THROW(cross_entropy(Tensor({1, 7}, 1.0f / 7.0f), bad), ShapeError);
  const std::vector<int> negative{-1};
  EXPECT_THROW(cross_entropy(Tensor({1, 7}, 1.0f / 7.0f), negative), ShapeError);
  const std::vector<int> short_labels{0};
  EXPECT_THROW(cross_entropy(Tensor({2, 7}, 1.0f / 7.0f), short_labels), ShapeError);
}

TEST(CrossEntropy, NonNegativeAndZeroOnlyWhenOneHot) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    const auto z = random_tensor<double>({3, 7}, rng, -5.0, 5.0);
    std::vector<int> labels{static_cast<int>(rng() % 7), static_cast<int>(rng() % 7), static_cast<int>(rng() % 7)};
    const double ce = cross_entropy(softmax(z), labels);
    EXPECT_GT(ce, 0.0);
  }
  TensorD onehot({2, 4});
  onehot.at(0, 2) = 1.0;
  onehot.at(1, 0) = 1.0;
  const std::vector<int> labels{2, 0};
  EXPECT_EQ(cross_entropy(onehot, labels), 0.0);
}

TEST(UncertainLoss, ReferenceValues) {
  EXPECT_EQ(uncertain_loss(0.0, 0.0, 1.0), 0.0);
  EXPECT_NEAR(uncertain_loss(0.5, 1.2, 1.0), 1.7, 1e-15);
  EXPECT_NEAR(uncertain_loss(2.0, 0.3, 1.0 / 100.0), 0.32, 1e-15);
}

TEST(LossBreakdown, TotalReconstructsFromParts) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> d(0.0, 5.0);
  for (int t = 0; t < 1000; ++t) {
    const auto b = make_breakdown(d(rng), d(rng) * 100, d(rng), d(rng) / 10);
    EXPECT_EQ(b.total, b.l_cen + b.l_unc);
    EXPECT_EQ(b.l_unc, b.kl_weight * b.kl_term + b.nll_term);
  }
}

TEST(PredictiveEntropy, ReferenceValues) {
  const std::vector<float> onehot{0, 0, 1, 0, 0, 0, 0};
  EXPECT_EQ(predictive_entropy(onehot), 0.0);
  const std::vector<float> uniform(7, 1.0f / 7.0f);
  EXPECT_NEAR(predictive_entropy(uniform), std::log(7.0), 1e-6);
  const std::vector<float> two{0.5f, 0.5f, 0, 0, 0, 0, 0};
  EXPECT_NEAR(predictive_entropy(two), std::numbers::ln2, 1e-7);
}

TEST(Argmax, TiesResolveToLowestIndex) {
  const std::vector<float> row{0.2f, 0.4f, 0.4f, 0.0f};
  EXPECT_EQ(argmax(row), 1u);
  const std::vector<float> flat(7, 0.3f);
  EXPECT_EQ(argmax(flat), 0u);
}

TEST(PredictiveDistribution, DeterministicModelEqualsSingleForward) {
  Model model = Model::build(ArchSpec::tiny(), PlacementConfig::none(), 3);
  const auto images = tiny_images(5, 3);
  const auto single = softmax(model.forward(images, ForwardOptions{}));
  for (int n : {1, 4, 17}) {
    Rng rng(n);
    EXPECT_TRUE(bitwise_equal(predictive_distribution(model, images, n, rng), single)) << n;
  }
}

TEST(PredictiveDistribution, ZeroSigmaEqualsMeanForward) {
  Model model = Model::build(ArchSpec::tiny(), PlacementConfig::all(), 4);
  set_rho(model, -1000.0f);  // softplus underflows to exactly 0
  const auto images = tiny_images(4, 4);
  const auto mean = softmax(model.forward(images, ForwardOptions{}));
  Rng rng(4);
  EXPECT_TRUE(bitwise_equal(predictive_distribution(model, images, 8, rng), mean));
}

TEST(PredictiveDistribution, SingleSampleIsOneSampledPass) {
  Model a = Model::build(ArchSpec::tiny(), PlacementConfig::single(5), 5);
  set_rho(a, -1.0f);
  Model b = a;
  const auto images = tiny_images(3, 5);
  Rng ra(77), rb(77);
  const auto pd = predictive_distribution(a, images, 1, ra);
  const auto direct = softmax(b.forward(images, ForwardOptions{WeightMode::Sampled, false, false}, &rb));
  EXPECT_TRUE(bitwise_equal(pd, direct));
}

TEST(PredictiveDistribution, RowsSumToOneAndConcentrate) {
  Model model = Model::build(ArchSpec::tiny(), PlacementConfig::all(), 6);
  set_rho(model, -2.0f);
  const auto images = tiny_images(6, 6);
  Rng r1(1), r2(2);
  const auto p1 = predictive_distribution(model, images, 100, r1);
  const auto p2 = predictive_distribution(model, images, 100, r2);
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 7; ++j) {
      s += p1.at(i, j);
      EXPECT_NEAR(p1.at(i, j), p2.at(i, j), 0.05);
    }
    EXPECT_NEAR(s, 1.0, 1e-5);
  }
  EXPECT_THROW(predictive_distribution(model, images, 0, r1), ConfigError);
}
