#include <gtest/gtest.h>

#include <random>

#include "pbcnn/evaluate.hpp"
#include "pbcnn/sweep.hpp"

using namespace pbcnn;

namespace {

ArchSpec narrow() {
  ArchSpec a;
  a.group_channels = {4, 4, 6, 6, 8};
  a.blocks_per_group = 1;
  return a;
}

// Zero FC weights: every image gets the bias argmax.
void make_constant(Model& m, int cls) {
  m.fc_weight().fill(0.0f);
  m.fc_bias().fill(0.0f);
  m.fc_bias()[static_cast<std::size_t>(cls)] = 1.0f;
}

}  // namespace

TEST(Evaluate, ConstantPredictorScoresClassFrequency) {
  const Dataset data = make_synthetic(20, 0.05, 1);
  Model m = Model::build(narrow(), PlacementConfig::none(), 1);
  for (int cls : {0, 4}) {
    make_constant(m, cls);
    for (Split s : {Split::PublicTest, Split::PrivateTest}) {
      std::size_t hits = 0;
      for (std::size_t i : data.indices(s)) hits += data.images[i].label == cls ? 1 : 0;
      const auto r = evaluate(m, data, s);
      EXPECT_EQ(r.n_total, data.count(s));
      EXPECT_EQ(r.n_correct, hits);
      EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(hits) / data.count(s));
      EXPECT_EQ(r.split, split_name(s));
    }
  }
}

TEST(Evaluate, ChanceLevelOnRandomLabels) {
  Dataset data;
  std::mt19937_64 rng(7);
  for (int i = 0; i < 10000; ++i) {
    data.images.push_back(LabeledImage{std::vector<float>(kImagePixels, 0.0f), static_cast<int>(rng() % 7),
                                       Split::PublicTest});
  }
  Model m = Model::build(narrow(), PlacementConfig::none(), 2);
  make_constant(m, 2);
  const auto r = evaluate(m, data, Split::PublicTest);
  EXPECT_NEAR(r.accuracy, 1.0 / 7.0, 0.03);
}

TEST(Evaluate, MeanModeIsDeterministic) {
  const Dataset data = make_synthetic(10, 0.05, 2);
  Model m = Model::build(narrow(), PlacementConfig{{2, 5}}, 3);
  const auto a = evaluate(m, data, Split::PublicTest);
  const auto b = evaluate(m, data, Split::PublicTest);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.mode, EvalMode::mean());
  EXPECT_GT(a.mean_predictive_entropy, 0.0);
}

TEST(Evaluate, MonteCarloAgreesWithManySamples) {
  const Dataset data = make_synthetic(20, 0.05, 3);
  Model m = Model::build(narrow(), PlacementConfig::single(5), 4);
  Rng r1(1), r64(64);
  const auto one = evaluate(m, data, Split::PublicTest, EvalMode::mc(1), &r1);
  const auto many = evaluate(m, data, Split::PublicTest, EvalMode::mc(64), &r64);
  EXPECT_NEAR(one.accuracy, many.accuracy, 0.05);
  EXPECT_EQ(many.mode.to_string(), "mc(64)");
  EXPECT_THROW(evaluate(m, data, Split::PublicTest, EvalMode::mc(4)), StateError);
}

TEST(Evaluate, EmptySplit) {
  Dataset data = make_synthetic(5, 0.05, 1);
  std::erase_if(data.images, [](const LabeledImage& i) { return i.split == Split::PrivateTest; });
  Model m = Model::build(narrow(), PlacementConfig::none(), 1);
  EXPECT_THROW(evaluate(m, data, Split::PrivateTest), ConfigError);
}

TEST(EvalMode, ParseAndPrint) {
  EXPECT_EQ(EvalMode::parse("mean"), EvalMode::mean());
  EXPECT_EQ(EvalMode::parse("mc(32)"), EvalMode::mc(32));
  EXPECT_EQ(EvalMode::mc(32).to_string(), "mc(32)");
  for (const char* bad : {"mc", "mc()", "mc(0)", "mc(3x)", "median"}) EXPECT_THROW(EvalMode::parse(bad), ConfigError) << bad;
}

TEST(SigmaProfile, FreshModelAtDefaultRho) {
  Model m = Model::build(ArchSpec::desk(), PlacementConfig::single(5), 1);
  const auto profile = sigma_profile(m);
  ASSERT_EQ(profile.size(), 5u);
  for (const auto& s : profile) {
    EXPECT_NEAR(s.mean, 6.7153e-3, 1e-7);
    EXPECT_NEAR(s.min, s.max, 1e-12);
    EXPECT_NEAR(s.std, 0.0, 1e-7);
  }
  for (std::size_t i = 1; i < profile.size(); ++i) EXPECT_LE(profile[i - 1].depth, profile[i].depth);
}

TEST(SigmaProfile, SingleLayerStatistics) {
  Model m = Model::build(ArchSpec::tiny(), PlacementConfig::single(1), 1);
  auto* unit = m.variational_units()[0];
  auto& rho = unit->var.rho;
  for (std::size_t i = 0; i < rho.size(); ++i) rho[i] = i % 2 ? 0.0f : -1000.0f;
  const auto profile = sigma_profile(m);
  ASSERT_EQ(profile.size(), 1u);
  EXPECT_EQ(profile[0].layer, unit->name);
  EXPECT_EQ(profile[0].min, 0.0);
  EXPECT_NEAR(profile[0].max, std::log(2.0), 1e-12);
  const double odd = static_cast<double>(rho.size() / 2) / rho.size();
  EXPECT_NEAR(profile[0].mean, odd * std::log(2.0), 1e-12);

  Model none = Model::build(ArchSpec::tiny(), PlacementConfig::none(), 1);
  EXPECT_THROW(sigma_profile(none), StateError);
}

TEST(Sweep, SharedInitRankingAndDeterminism) {
  const Dataset data = make_synthetic(10, 0.05, 5);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  const std::vector<PlacementConfig> placements{PlacementConfig::none(), PlacementConfig::single(5)};
  const auto a = placement_sweep(narrow(), placements, data, cfg);
  const auto b = placement_sweep(narrow(), placements, data, cfg);
  ASSERT_EQ(a.entries.size(), 2u);
  EXPECT_EQ(a.records(), b.records());

  const auto rank = a.ranking();
  ASSERT_EQ(rank.size(), 2u);
  EXPECT_GE(a.entries[rank[0]].final_eval.accuracy, a.entries[rank[1]].final_eval.accuracy);

  const auto rows = a.records();
  std::size_t finals = 0;
  for (const auto& r : rows) {
    finals += r.kind == TrainRecord::Kind::Final ? 1 : 0;
    EXPECT_FALSE(r.placement.empty());
  }
  EXPECT_EQ(finals, 2u);
  EXPECT_EQ(rows.back().placement, "{5}");

  // The same seed means the none-model is what a plain train() would produce.
  Model m = Model::build(narrow(), PlacementConfig::none(), cfg.seed);
  train(m, data, cfg);
  EXPECT_EQ(evaluate(m, data, Split::PublicTest), a.entries[0].final_eval);
}

TEST(Sweep, SinglePlacement) {
  const Dataset data = make_synthetic(10, 0.05, 6);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  const auto s = placement_sweep(narrow(), {PlacementConfig::single(3)}, data, cfg);
  ASSERT_EQ(s.entries.size(), 1u);
  EXPECT_EQ(s.ranking(), std::vector<std::size_t>{0});
  EXPECT_EQ(s.entries[0].curve.size(), 2u);
}
