#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "pbcnn/checkpoint.hpp"
#include "pbcnn/cli.hpp"
#include "temp_dir.hpp"

using namespace pbcnn;
using namespace pbcnn::testing;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Small synthetic set so a desk-sized epoch runs in well under a second.
std::string small_config(const TempDir& dir, const std::string& extra = "") {
  const auto path = dir / "small.cfg";
  std::ofstream cfg(path);
  cfg << "# small run\nsynthetic = true\nsynthetic_per_class = 10\nbatch_size = 14\nepochs = 1\n" << extra;
  return path.string();
}

}  // namespace

TEST(Cli, TrainWritesCheckpointAndReport) {
  TempDir dir;
  const auto r = cli({"train", "--config", small_config(dir), "--out", (dir / "run").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "model.pbnn"));
  const auto report = parse_report(dir / "run" / "train.jsonl", ReportFormat::JsonLines);
  ASSERT_TRUE(report.config);
  EXPECT_EQ(report.config->at("train").at("epochs"), 1);
  ASSERT_EQ(report.records.size(), 4u);  // epoch, eval, two finals
  EXPECT_EQ(report.records.back().kind, TrainRecord::Kind::Final);
  EXPECT_EQ(report.records.back().placement, "{5}");
  EXPECT_TRUE(r.out.starts_with("config {"));
}

TEST(Cli, IdenticalRunsGiveIdenticalReports) {
  TempDir dir;
  for (const char* name : {"a", "b"}) {
    const auto r = cli({"train", "--config", small_config(dir), "--out", (dir / "x").string(), "--format", "csv"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    std::filesystem::rename(dir / "x" / "train.csv", dir / (std::string(name) + ".csv"));
    std::filesystem::rename(dir / "x" / "model.pbnn", dir / (std::string(name) + ".pbnn"));
  }
  EXPECT_EQ(read_file(dir / "a.csv"), read_file(dir / "b.csv"));
  EXPECT_EQ(read_file(dir / "a.pbnn"), read_file(dir / "b.pbnn"));
}

TEST(Cli, EvalReproducesFinalEvaluation) {
  TempDir dir;
  const auto out = (dir / "run").string();
  ASSERT_EQ(cli({"train", "--config", small_config(dir), "--out", out}).code, kExitOk);
  const auto trained = parse_report(dir / "run" / "train.jsonl", ReportFormat::JsonLines);

  const auto r = cli({"eval", "--out", out});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto evaluated = parse_report(dir / "run" / "eval.jsonl", ReportFormat::JsonLines);
  ASSERT_EQ(evaluated.records.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(*evaluated.records[i].eval, *trained.records[2 + i].eval);
  }

  const auto mc = cli({"eval", "--out", out, "--mode", "mc", "--samples", "32", "--splits", "PublicTest"});
  ASSERT_EQ(mc.code, kExitOk) << mc.err;
  const auto mc_report = parse_report(dir / "run" / "eval.jsonl", ReportFormat::JsonLines);
  ASSERT_EQ(mc_report.records.size(), 1u);
  EXPECT_EQ(mc_report.records[0].eval->mode.to_string(), "mc(32)");
  EXPECT_NE(mc.out.find("mc(32)"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  TempDir dir;
  const auto bad_epochs = cli({"train", "--synthetic", "--epochs", "-3", "--out", dir.path().string()});
  EXPECT_EQ(bad_epochs.code, kExitUsage);
  EXPECT_NE(bad_epochs.err.find("epochs"), std::string::npos) << bad_epochs.err;

  const auto bad_groups = cli({"sweep", "--synthetic", "--groups", "9", "--out", dir.path().string()});
  EXPECT_EQ(bad_groups.code, kExitUsage);
  EXPECT_NE(bad_groups.err.find("groups"), std::string::npos);

  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"fly"}).code, kExitUsage);
  EXPECT_EQ(cli({"train", "--no-such-flag"}).code, kExitUsage);
  EXPECT_EQ(cli({"train", "--out", dir.path().string()}).code, kExitUsage);  // no data source
  EXPECT_EQ(cli({"train", "--synthetic", "--data", "x.csv"}).code, kExitUsage);
  EXPECT_EQ(cli({"train", "--synthetic", "--arch", "vgg"}).code, kExitUsage);
  EXPECT_EQ(cli({"eval", "--mode", "median"}).code, kExitUsage);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

TEST(Cli, RuntimeFailuresExitOne) {
  TempDir dir;
  const auto r = cli({"eval", "--checkpoint", (dir / "missing.pbnn").string(), "--out", dir.path().string()});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find("missing.pbnn"), std::string::npos) << r.err;
  EXPECT_EQ(cli({"train", "--data", (dir / "absent.csv").string(), "--out", dir.path().string()}).code,
            kExitUsage);
}

TEST(Cli, SweepSinglePlacement) {
  TempDir dir;
  const auto r = cli({"sweep", "--config", small_config(dir), "--groups", "none,5", "--out", dir.path().string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto report = parse_report(dir / "sweep.jsonl", ReportFormat::JsonLines);
  std::size_t finals = 0;
  for (const auto& rec : report.records) finals += rec.kind == TrainRecord::Kind::Final ? 1 : 0;
  EXPECT_EQ(finals, 2u);
  EXPECT_NE(r.out.find("best first"), std::string::npos);
}

TEST(Cli, Gradcheck) {
  const auto ok = cli({"gradcheck"});
  EXPECT_EQ(ok.code, kExitOk) << ok.err;
  EXPECT_NE(ok.out.find("gradcheck passed"), std::string::npos);

  const auto strict = cli({"gradcheck", "--tolerance", "1e-12"});
  EXPECT_EQ(strict.code, kExitFailure);
  EXPECT_NE(strict.err.find("worst offender"), std::string::npos);

  const auto bayes = cli({"gradcheck", "--layer", "bayes-only"});
  EXPECT_EQ(bayes.code, kExitOk);
  EXPECT_NE(bayes.out.find("uncertain.mu"), std::string::npos);
  EXPECT_EQ(bayes.out.find("certain.fc"), std::string::npos);
}

TEST(ConfigFile, KeysCommentsAndUnknownKeys) {
  std::istringstream good("# comment\nseed = 7\n\nlearning_rate=0.01  # trailing\nkl_weight = auto\n");
  const auto s = parse_config_file(good);
  EXPECT_EQ(s.at("seed"), "7");
  EXPECT_EQ(s.at("learning_rate"), "0.01");
  const auto c = resolve_config("train", s);
  EXPECT_EQ(c.train.seed, 7u);
  EXPECT_EQ(c.train.learning_rate, 0.01);
  EXPECT_FALSE(c.train.kl_weight);

  std::istringstream unknown("seed = 1\nlearning_rat = 0.1\n");
  try {
    parse_config_file(unknown);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "learning_rat");
  }
  std::istringstream malformed("seed 1\n");
  EXPECT_THROW(parse_config_file(malformed), ConfigError);
  EXPECT_THROW(resolve_config("train", Settings{{"bogus", "1"}}), ConfigError);
}

TEST(ConfigFile, FlagsOverrideFileAndConfigIsEchoed) {
  TempDir dir;
  const auto r = cli({"train", "--config", small_config(dir, "seed = 11\n"), "--seed", "12", "--out",
                      dir.path().string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto first = r.out.substr(0, r.out.find('\n'));
  const auto echoed = nlohmann::json::parse(first.substr(std::string("config ").size()));
  EXPECT_EQ(echoed.at("train").at("seed"), 12);
  EXPECT_EQ(echoed.at("data").at("per_class"), 10);
  const auto ckpt = load_checkpoint(dir / "model.pbnn");
  EXPECT_EQ(ckpt.model.seed(), 12u);
}

TEST(ConfigFile, Defaults) {
  const auto c = resolve_config("sweep", {});
  EXPECT_EQ(c.groups, "1,2,3,4,5");
  EXPECT_EQ(c.train.seed, kDefaultSeed);
  EXPECT_EQ(c.train.epochs, 30);
  EXPECT_EQ(c.arch, ArchSpec::desk());
  EXPECT_FALSE(c.data);
  EXPECT_EQ(resolve_config("train", {}).groups, "5");
}
