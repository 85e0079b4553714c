#include "pbcnn/cli.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <list>
#include <ostream>
#include <sstream>

#include "pbcnn/checkpoint.hpp"
#include "pbcnn/error.hpp"
#include "pbcnn/evaluate.hpp"
#include "pbcnn/gradcheck.hpp"
#include "pbcnn/sweep.hpp"

namespace pbcnn {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <typename Number>
Number parse_number(const std::string& key, const std::string& text) {
  Number value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
    throw ConfigError(key, "expected a number, got '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(key, "expected true or false, got '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  return out;
}

int parse_group(const std::string& token) {
  int g = 0;
  const auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), g);
  if (ec != std::errc() || end != token.data() + token.size() || g < 1 || g > kNumGroups) {
    throw ConfigError("groups", "invalid group index '" + token + "' (expected 1-5)");
  }
  return g;
}

/// One placement: "none", or group indices joined by ',' or '+'.
PlacementConfig parse_placement(const std::string& text) {
  PlacementConfig p;
  if (trim(text) == "none") return p;
  for (const auto& part : split_list(text, ',')) {
    for (const auto& token : split_list(part, '+')) p.bayesian_groups.insert(parse_group(token));
  }
  return p;
}

/// Sweep list: comma-separated placements, each "none" or "a+b".
std::vector<PlacementConfig> parse_placement_list(const std::string& text) {
  std::vector<PlacementConfig> out;
  for (const auto& item : split_list(text, ',')) out.push_back(parse_placement(item));
  if (out.empty()) throw ConfigError("groups", "no placements given");
  return out;
}

std::string format_line(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

void print_record(std::ostream& out, const TrainRecord& r, int epochs) {
  if (r.kind == TrainRecord::Kind::Epoch) {
    out << format_line("epoch %d/%d step %lld  l_cen %.6f  l_unc %.6f  (kl %.4g nll %.6f)  train_acc %.4f",
                       r.epoch, epochs, static_cast<long long>(r.step), r.l_cen, r.l_unc, r.kl_term, r.nll_term,
                       r.train_accuracy);
    if (!r.sigma.empty()) out << format_line("  sigma_mean[last] %.4g", r.sigma.back().mean);
  } else {
    out << format_line("  %s %s accuracy %.4f (%zu/%zu)  entropy %.4f", r.eval->split.c_str(),
                       r.eval->mode.to_string().c_str(), r.eval->accuracy, r.eval->n_correct, r.eval->n_total,
                       r.eval->mean_predictive_entropy);
  }
  if (!r.placement.empty()) out << "  [" << r.placement << "]";
  out << '\n';
}

fs::path report_path(const CliConfig& c, const std::string& stem) {
  return fs::path(c.out) / (stem + std::string(report_extension(c.format)));
}

fs::path checkpoint_path(const CliConfig& c) {
  return c.checkpoint.empty() ? fs::path(c.out) / "model.pbnn" : fs::path(c.checkpoint);
}

void ensure_out_dir(const CliConfig& c) {
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw IoError(c.out, "cannot create output directory: " + ec.message());
}

const DataSource& require_data(const CliConfig& c) {
  if (!c.data) throw ConfigError("data", "pass --data PATH (FER2013 CSV) or --synthetic");
  return *c.data;
}

void describe(std::ostream& out, const Dataset& ds) {
  out << "dataset: Training " << ds.count(Split::Training) << ", PublicTest " << ds.count(Split::PublicTest)
      << ", PrivateTest " << ds.count(Split::PrivateTest) << '\n';
}

int cmd_train(const CliConfig& c, std::ostream& out) {
  const Dataset ds = require_data(c).load();
  describe(out, ds);
  ensure_out_dir(c);
  const PlacementConfig placement = parse_placement(c.groups);
  Model model = Model::build(c.arch, placement, c.train.seed);
  out << "model: placement " << placement.to_string() << ", " << model.parameter_count() << " parameters\n";

  TrainHooks hooks;
  hooks.timing = c.timing;
  hooks.on_record = [&](const TrainRecord& r) { print_record(out, r, c.train.epochs); };
  auto records = train(model, ds, c.train, hooks);

  nlohmann::json extra;
  extra["data"] = c.data->to_json();
  extra["train"] = c.train.to_json();
  const fs::path ckpt = checkpoint_path(c);
  save_checkpoint(model, ckpt, extra);

  for (Split split : {Split::PublicTest, Split::PrivateTest}) {
    if (ds.count(split) == 0) continue;
    TrainRecord row;
    row.kind = TrainRecord::Kind::Final;
    row.epoch = c.train.epochs;
    row.step = model.step();
    row.eval = evaluate(model, ds, split);
    print_record(out, row, c.train.epochs);
    records.push_back(std::move(row));
  }
  for (auto& r : records) r.placement = placement.to_string();

  const fs::path report = report_path(c, "train");
  export_report(Report{c.to_json(), records}, report, c.format);
  out << "checkpoint: " << ckpt.string() << "\nreport: " << report.string() << '\n';
  return kExitOk;
}

int cmd_eval(const CliConfig& c, std::ostream& out) {
  const fs::path ckpt = checkpoint_path(c);
  LoadedCheckpoint loaded = load_checkpoint(ckpt);
  DataSource source;
  if (c.data) {
    source = *c.data;
  } else {
    const auto& extra = loaded.metadata.at("extra");
    if (!extra.contains("data")) throw ConfigError("data", "checkpoint does not record its dataset; pass --data");
    source = DataSource::from_json(extra.at("data"));
  }
  const Dataset ds = source.load();
  describe(out, ds);
  ensure_out_dir(c);

  Rng rng = make_rng(c.train.seed, Stream::Evaluation);
  const EvalMode mode = c.mode.kind == EvalMode::Kind::Mean ? EvalMode::mean() : EvalMode::mc(c.samples);
  std::vector<TrainRecord> records;
  for (Split split : c.splits) {
    TrainRecord row;
    row.kind = TrainRecord::Kind::Eval;
    row.placement = loaded.model.placement().to_string();
    row.step = loaded.model.step();
    row.eval = evaluate(loaded.model, ds, split, mode, &rng);
    print_record(out, row, 0);
    records.push_back(std::move(row));
  }
  const fs::path report = report_path(c, "eval");
  export_report(Report{c.to_json(), records}, report, c.format);
  out << "report: " << report.string() << '\n';
  return kExitOk;
}

int cmd_sweep(const CliConfig& c, std::ostream& out) {
  const auto placements = parse_placement_list(c.groups);
  const Dataset ds = require_data(c).load();
  describe(out, ds);
  ensure_out_dir(c);

  SweepOptions options;
  options.jobs = c.jobs;
  options.timing = c.timing;
  options.on_record = [&](const PlacementConfig&, const TrainRecord& r) { print_record(out, r, c.train.epochs); };
  const SweepReport sweep = placement_sweep(c.arch, placements, ds, c.train, options);

  out << "final PublicTest accuracy (best first):\n";
  for (std::size_t rank = 0; const std::size_t i : sweep.ranking()) {
    const auto& e = sweep.entries[i];
    out << format_line("  %zu. %-12s %.4f (%zu/%zu)\n", ++rank, e.placement.to_string().c_str(), e.final_eval.accuracy,
                       e.final_eval.n_correct, e.final_eval.n_total);
  }
  const fs::path report = report_path(c, "sweep");
  export_report(Report{c.to_json(), sweep.records()}, report, c.format);
  out << "report: " << report.string() << '\n';
  return kExitOk;
}

int cmd_gradcheck(const CliConfig& c, std::ostream& out, std::ostream& err) {
  ModelGradcheckSetup setup;
  setup.placement = parse_placement(c.groups);
  setup.layers = parse_gradcheck_layers(c.layer);
  GradcheckOptions options = model_gradcheck_defaults();
  options.tolerance = c.tolerance;
  options.seed = c.train.seed;

  const GradcheckReport report = gradcheck_model(setup, options);
  for (const auto& g : report.groups) {
    out << format_line("%-14s checked %5zu  max_rel %.3e  max_abs %.3e  kink-adjusted %zu  %s\n", g.group.c_str(),
                       g.checked, g.max_rel_error, g.max_abs_error, g.kink_adjusted, g.passed ? "ok" : "FAIL");
  }
  if (report.groups.empty()) {
    err << "gradcheck: nothing to check for this placement and --layer\n";
    return kExitFailure;
  }
  if (!report.passed()) {
    const ProbeResult* w = report.worst();
    err << format_line("gradcheck failed: worst offender %s (analytic %.9g, numeric %.9g, rel %.3e > %.3e)\n",
                       w->name.c_str(), w->analytic, w->numeric, w->rel_error, c.tolerance);
    return kExitFailure;
  }
  out << "gradcheck passed\n";
  return kExitOk;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "seed",       "epochs",      "batch_size", "learning_rate", "mc_samples",          "kl_weight",
      "eval_every", "momentum",    "prior_sigma", "augment_flip", "arch",                "groups",
      "data",       "synthetic",   "synthetic_per_class", "synthetic_noise", "max_rows", "standardize",
      "out",        "format",      "checkpoint", "splits",        "mode",                "samples",
      "jobs",       "tolerance",   "layer",      "timing"};
  return keys;
}

Settings parse_config_file(std::istream& in) {
  Settings settings;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("config", "line " + std::to_string(n) + ": expected key = value");
    const std::string key = trim(body.substr(0, eq));
    const auto& keys = config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError(key, "unknown config key (line " + std::to_string(n) + ")");
    }
    settings[key] = trim(body.substr(eq + 1));
  }
  return settings;
}

Settings load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path);
  return parse_config_file(in);
}

Dataset DataSource::load() const {
  Dataset ds = synthetic ? make_synthetic(synthetic_per_class, synthetic_noise, synthetic_seed)
                         : load_fer2013(path, max_rows);
  if (standardize) ds.standardize();
  return ds;
}

nlohmann::json DataSource::to_json() const {
  nlohmann::json doc;
  if (synthetic) {
    doc["kind"] = "synthetic";
    doc["per_class"] = synthetic_per_class;
    doc["noise"] = synthetic_noise;
    doc["seed"] = synthetic_seed;
  } else {
    doc["kind"] = "fer2013";
    doc["path"] = path;
    doc["max_rows"] = max_rows;
  }
  doc["standardize"] = standardize;
  return doc;
}

DataSource DataSource::from_json(const nlohmann::json& doc) {
  DataSource s;
  try {
    s.synthetic = doc.at("kind") == "synthetic";
    if (s.synthetic) {
      s.synthetic_per_class = doc.at("per_class").get<std::size_t>();
      s.synthetic_noise = doc.at("noise").get<double>();
      s.synthetic_seed = doc.at("seed").get<std::uint64_t>();
    } else {
      s.path = doc.at("path").get<std::string>();
      s.max_rows = doc.at("max_rows").get<std::size_t>();
    }
    s.standardize = doc.at("standardize").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("data", std::string("bad data source record: ") + e.what());
  }
  return s;
}

nlohmann::json CliConfig::to_json() const {
  nlohmann::json doc;
  doc["command"] = command;
  doc["train"] = train.to_json();
  doc["arch"] = arch_name;
  doc["arch_spec"] = arch.to_json();
  doc["groups"] = groups;
  doc["data"] = data ? data->to_json() : nlohmann::json(nullptr);
  doc["out"] = out;
  doc["format"] = format == ReportFormat::Csv ? "csv" : "jsonl";
  doc["checkpoint"] = checkpoint;
  auto splits_json = nlohmann::json::array();
  for (Split s : splits) splits_json.push_back(std::string(split_name(s)));
  doc["splits"] = splits_json;
  doc["mode"] = mode.kind == EvalMode::Kind::Mean ? "mean" : "mc";
  doc["samples"] = samples;
  doc["jobs"] = jobs;
  doc["tolerance"] = tolerance;
  doc["layer"] = layer;
  doc["timing"] = timing;
  return doc;
}

CliConfig resolve_config(const std::string& command, const Settings& settings) {
  for (const auto& [key, value] : settings) {
    const auto& keys = config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw ConfigError(key, "unknown config key");
  }
  auto get = [&](const std::string& key) -> std::optional<std::string> {
    auto it = settings.find(key);
    return it == settings.end() ? std::nullopt : std::optional<std::string>(it->second);
  };

  CliConfig c;
  c.command = command;
  TrainConfig& t = c.train;
  if (auto v = get("seed")) t.seed = parse_number<std::uint64_t>("seed", *v);
  if (auto v = get("epochs")) t.epochs = parse_number<int>("epochs", *v);
  if (auto v = get("batch_size")) t.batch_size = parse_number<int>("batch_size", *v);
  if (auto v = get("learning_rate")) t.learning_rate = parse_number<double>("learning_rate", *v);
  if (auto v = get("mc_samples")) t.mc_samples = parse_number<int>("mc_samples", *v);
  if (auto v = get("kl_weight")) {
    if (*v == "auto") {
      t.kl_weight.reset();
    } else {
      t.kl_weight = parse_number<double>("kl_weight", *v);
    }
  }
  if (auto v = get("eval_every")) t.eval_every = parse_number<int>("eval_every", *v);
  if (auto v = get("momentum")) t.momentum = parse_number<double>("momentum", *v);
  if (auto v = get("prior_sigma")) {
    const double sigma = parse_number<double>("prior_sigma", *v);
    t.prior = sigma == 1.0 ? PriorSpec::unit() : PriorSpec::scaled(sigma);
  }
  if (auto v = get("augment_flip")) t.augment_flip = parse_bool("augment_flip", *v);
  t.validate();

  if (auto v = get("arch")) c.arch_name = *v;
  if (c.arch_name == "desk") {
    c.arch = ArchSpec::desk();
  } else if (c.arch_name == "resnet18") {
    c.arch = ArchSpec::full_resnet18();
  } else {
    throw ConfigError("arch", "expected desk or resnet18, got '" + c.arch_name + "'");
  }

  if (command == "sweep") {
    c.groups = get("groups").value_or("1,2,3,4,5");
    parse_placement_list(c.groups);
  } else if (command == "gradcheck") {
    c.groups = get("groups").value_or("1,3,5");
    parse_placement(c.groups);
  } else {
    c.groups = get("groups").value_or("5");
    parse_placement(c.groups);
  }

  const bool synthetic = get("synthetic") ? parse_bool("synthetic", *get("synthetic")) : false;
  const auto data_path = get("data");
  if (synthetic && data_path && !data_path->empty()) {
    throw ConfigError("data", "choose either --data or --synthetic, not both");
  }
  if (synthetic || (data_path && !data_path->empty())) {
    DataSource s;
    s.synthetic = synthetic;
    s.path = data_path.value_or("");
    s.synthetic_seed = t.seed;
    if (auto v = get("synthetic_per_class")) s.synthetic_per_class = parse_number<std::size_t>("synthetic_per_class", *v);
    if (s.synthetic_per_class == 0) throw ConfigError("synthetic_per_class", "must be at least 1");
    if (auto v = get("synthetic_noise")) s.synthetic_noise = parse_number<double>("synthetic_noise", *v);
    if (!(s.synthetic_noise >= 0.0)) throw ConfigError("synthetic_noise", "must be non-negative");
    if (auto v = get("max_rows")) s.max_rows = parse_number<std::size_t>("max_rows", *v);
    if (auto v = get("standardize")) s.standardize = parse_bool("standardize", *v);
    c.data = s;
  }

  if (auto v = get("out")) c.out = *v;
  if (c.out.empty()) throw ConfigError("out", "must not be empty");
  if (auto v = get("format")) c.format = parse_report_format(*v);
  if (auto v = get("checkpoint")) c.checkpoint = *v;
  if (auto v = get("splits")) {
    c.splits.clear();
    for (const auto& name : split_list(*v, ',')) {
      const auto split = parse_split(name);
      if (!split) throw ConfigError("splits", "unknown split '" + name + "'");
      c.splits.push_back(*split);
    }
    if (c.splits.empty()) throw ConfigError("splits", "no splits given");
  }
  if (auto v = get("mode")) {
    if (*v == "mean") {
      c.mode = EvalMode::mean();
    } else if (*v == "mc") {
      c.mode = EvalMode::mc(1);
    } else {
      throw ConfigError("mode", "expected mean or mc, got '" + *v + "'");
    }
  }
  if (auto v = get("samples")) c.samples = parse_number<int>("samples", *v);
  if (c.samples < 1) throw ConfigError("samples", "must be at least 1");
  if (c.mode.kind == EvalMode::Kind::MonteCarlo) c.mode.samples = c.samples;
  if (auto v = get("jobs")) c.jobs = parse_number<int>("jobs", *v);
  if (c.jobs < 1) throw ConfigError("jobs", "must be at least 1");
  if (auto v = get("tolerance")) c.tolerance = parse_number<double>("tolerance", *v);
  if (!(c.tolerance > 0.0)) throw ConfigError("tolerance", "must be positive");
  if (auto v = get("layer")) c.layer = *v;
  parse_gradcheck_layers(c.layer);
  if (auto v = get("timing")) c.timing = parse_bool("timing", *v);
  return c;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Partially Bayesian CNN: training, evaluation, placement sweep and gradient checks", "pbcnn"};
  app.require_subcommand(1);

  struct Binding {
    CLI::App* sub;
    CLI::Option* option;
    std::string key;
    std::string* value;
    bool flag;
  };
  std::list<std::string> storage;
  std::vector<Binding> bindings;

  auto value_option = [&](CLI::App* sub, const std::string& name, const std::string& key, const std::string& help) {
    std::string& slot = storage.emplace_back();
    bindings.push_back({sub, sub->add_option(name, slot, help), key, &slot, false});
  };
  auto flag_option = [&](CLI::App* sub, const std::string& name, const std::string& key, const std::string& help) {
    bindings.push_back({sub, sub->add_flag(name, help), key, nullptr, true});
  };

  auto add_common = [&](CLI::App* sub) {
    std::string& cfg = storage.emplace_back();
    bindings.push_back({sub, sub->add_option("--config", cfg, "flat key = value config file"), "", &cfg, false});
    value_option(sub, "--seed", "seed", "random seed (default 20211015)");
    value_option(sub, "--out", "out", "output directory");
    flag_option(sub, "--synthetic", "synthetic", "use the synthetic 7-class dataset");
    value_option(sub, "--data", "data", "FER2013 CSV file");
    value_option(sub, "--epochs", "epochs", "training epochs");
    value_option(sub, "--batch-size", "batch_size", "minibatch size");
    value_option(sub, "--lr", "learning_rate", "SGD learning rate");
    value_option(sub, "--groups", "groups", "uncertain groups, e.g. 5 or 1,5; for sweep one placement per item");
    value_option(sub, "--mode", "mode", "evaluation mode: mean or mc");
    value_option(sub, "--samples", "samples", "Monte-Carlo samples for --mode mc");
    value_option(sub, "--mc-samples", "mc_samples", "weight draws per training step");
    value_option(sub, "--kl-weight", "kl_weight", "KL weight per minibatch or 'auto'");
    value_option(sub, "--jobs", "jobs", "sweep configurations trained concurrently");
    value_option(sub, "--format", "format", "report format: jsonl or csv");
    value_option(sub, "--checkpoint", "checkpoint", "checkpoint path (default <out>/model.pbnn)");
    value_option(sub, "--arch", "arch", "desk or resnet18");
    flag_option(sub, "--timing", "timing", "record wall-clock seconds in reports");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train one model and write checkpoint and report");
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on test splits");
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "train one model per uncertainty placement");
  CLI::App* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference check of all gradients");
  for (auto* sub : {train_cmd, eval_cmd, sweep_cmd, gradcheck_cmd}) add_common(sub);
  value_option(eval_cmd, "--splits", "splits", "comma-separated splits (default PublicTest,PrivateTest)");
  value_option(gradcheck_cmd, "--tolerance", "tolerance", "relative tolerance (default 1e-3)");
  value_option(gradcheck_cmd, "--layer", "layer", "all, bayes-only or certain-only");

  std::vector<const char*> argv{"pbcnn"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    Settings settings;
    for (const auto& b : bindings) {
      if (b.sub == sub && b.key.empty() && b.option->count() > 0) settings = load_config_file(*b.value);
    }
    for (const auto& b : bindings) {
      if (b.sub != sub || b.key.empty() || b.option->count() == 0) continue;
      settings[b.key] = b.flag ? "true" : *b.value;
    }
    const CliConfig config = resolve_config(sub->get_name(), settings);
    out << "config " << config.to_json().dump() << '\n';

    if (sub == train_cmd) return cmd_train(config, out);
    if (sub == eval_cmd) return cmd_eval(config, out);
    if (sub == sweep_cmd) return cmd_sweep(config, out);
    return cmd_gradcheck(config, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace pbcnn
