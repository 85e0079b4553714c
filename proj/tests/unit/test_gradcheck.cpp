#include <gtest/gtest.h>

#include <cmath>

#include "pbcnn/gradcheck.hpp"

using namespace pbcnn;

TEST(Gradcheck, LinearSingleWeight) {
  double w = 0.7;
  std::vector<Probe> probes{{"linear", "w", &w, 3.0}};
  const auto report = run_gradcheck(probes, [&] { return 3.0 * w - 1.0; }, GradcheckOptions{});
  ASSERT_EQ(report.probes.size(), 1u);
  EXPECT_LE(report.probes[0].rel_error, 1e-4);
  EXPECT_TRUE(report.passed());
  EXPECT_EQ(w, 0.7);  // restored
}

TEST(Gradcheck, ZeroGradientUsesAbsoluteFloor) {
  double w = 0.0;
  std::vector<Probe> probes{{"flat", "w", &w, 0.0}};
  const auto report = run_gradcheck(probes, [&] { return 5.0; }, GradcheckOptions{});
  EXPECT_TRUE(report.probes[0].absolute);
  EXPECT_LE(report.probes[0].abs_error, 1e-6);
  EXPECT_TRUE(report.passed());
}

TEST(Gradcheck, WrongAnalyticGradientFails) {
  double w = 1.0;
  std::vector<Probe> probes{{"square", "w", &w, 2.1}};
  const auto report = run_gradcheck(probes, [&] { return w * w; }, GradcheckOptions{});
  EXPECT_FALSE(report.passed());
  ASSERT_NE(report.worst(), nullptr);
  EXPECT_EQ(report.worst()->name, "w");
  EXPECT_NEAR(report.worst()->numeric, 2.0, 1e-6);
}

TEST(Gradcheck, MatchRule) {
  GradcheckOptions o;
  double rel = 0.0;
  bool absolute = false;
  EXPECT_TRUE(gradient_matches(1.0, 1.0005, o, &rel, &absolute));
  EXPECT_NEAR(rel, 0.0005 / 1.0005, 1e-12);
  EXPECT_FALSE(absolute);
  EXPECT_FALSE(gradient_matches(1.0, 1.01, o));
  EXPECT_TRUE(gradient_matches(1e-8, -5e-7, o, &rel, &absolute));
  EXPECT_TRUE(absolute);
  EXPECT_FALSE(gradient_matches(0.0, 1e-3, o));
}

TEST(Gradcheck, RichardsonRemovesCubicError) {
  double w = 0.5;
  std::vector<Probe> probes{{"cubic", "w", &w, 3.0 * 0.25}};
  GradcheckOptions o;
  o.step = 0.1;
  o.tolerance = 1e-12;
  EXPECT_FALSE(run_gradcheck(probes, [&] { return w * w * w; }, o).passed());
  o.richardson = true;
  o.tolerance = 1e-9;
  EXPECT_TRUE(run_gradcheck(probes, [&] { return w * w * w; }, o).passed());
}

TEST(Gradcheck, KinkIsAvoidedByShrinkingStep) {
  double w = 5e-4;
  std::vector<Probe> probes{{"relu", "w", &w, 1.0}};
  auto loss = [&] { return std::max(w, 0.0); };
  auto pattern = [&]() -> std::uint64_t { return w > 0.0 ? 1 : 0; };
  const auto report = run_gradcheck(probes, loss, GradcheckOptions{}, pattern);
  EXPECT_TRUE(report.probes[0].kink_adjusted);
  EXPECT_LT(report.probes[0].step, 5e-4);
  EXPECT_TRUE(report.passed());
}

TEST(Gradcheck, LayerFilterParsing) {
  EXPECT_EQ(parse_gradcheck_layers("all"), GradcheckLayers::All);
  EXPECT_EQ(parse_gradcheck_layers("bayes-only"), GradcheckLayers::BayesOnly);
  EXPECT_EQ(parse_gradcheck_layers("certain-only"), GradcheckLayers::CertainOnly);
  EXPECT_EQ(to_string(GradcheckLayers::BayesOnly), "bayes-only");
  EXPECT_THROW(parse_gradcheck_layers("bayes"), ConfigError);
}

TEST(ModelGradcheck, TinyModelRandomParameters) {
  ModelGradcheckSetup setup;
  auto options = model_gradcheck_defaults();
  options.max_per_group = 20;  // 5 groups, 100 parameters
  const auto report = gradcheck_model(setup, options);
  std::size_t judged = 0;
  for (const auto& p : report.probes) judged += p.kink_unresolved ? 0 : 1;
  EXPECT_GE(report.probes.size(), 100u);
  EXPECT_GE(judged, 90u);
  for (const auto& g : report.groups) {
    EXPECT_TRUE(g.passed) << g.group << " worst " << g.worst << " rel " << g.max_rel_error;
  }
  EXPECT_TRUE(report.passed());
}

TEST(ModelGradcheck, BayesOnlyFilter) {
  ModelGradcheckSetup setup;
  setup.layers = GradcheckLayers::BayesOnly;
  auto options = model_gradcheck_defaults();
  options.max_per_group = 10;
  const auto report = gradcheck_model(setup, options);
  ASSERT_FALSE(report.groups.empty());
  for (const auto& g : report.groups) EXPECT_TRUE(g.group.starts_with("uncertain.")) << g.group;
  EXPECT_TRUE(report.passed());
}

TEST(ModelGradcheck, ImpossibleToleranceFails) {
  ModelGradcheckSetup setup;
  auto options = model_gradcheck_defaults();
  options.max_per_group = 10;
  options.tolerance = 1e-14;
  options.absolute_floor = 0.0;
  EXPECT_FALSE(gradcheck_model(setup, options).passed());
}
