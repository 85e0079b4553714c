#include "pbcnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "pbcnn/error.hpp"
#include "pbcnn/trainer.hpp"

namespace pbcnn {

namespace {

constexpr int kMaxHalvings = 6;

std::string certain_group(const std::string& name) {
  if (name.starts_with("fc.")) return "certain.fc";
  if (name.ends_with(".weight")) return "certain.conv";
  return "certain.bn";
}

std::vector<Probe> subsample(std::vector<Probe> probes, const GradcheckOptions& options) {
  if (options.max_per_group == 0) return probes;
  std::map<std::string, std::vector<std::size_t>> by_group;
  for (std::size_t i = 0; i < probes.size(); ++i) by_group[probes[i].group].push_back(i);
  Rng rng = make_rng(options.seed, Stream::Gradcheck, 1);
  std::vector<std::size_t> keep;
  for (auto& [group, idx] : by_group) {
    if (idx.size() > options.max_per_group) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(options.max_per_group);
    }
    keep.insert(keep.end(), idx.begin(), idx.end());
  }
  std::sort(keep.begin(), keep.end());
  std::vector<Probe> out;
  out.reserve(keep.size());
  for (std::size_t i : keep) out.push_back(std::move(probes[i]));
  return out;
}

void summarize(GradcheckReport& report) {
  report.groups.clear();
  for (const auto& p : report.probes) {
    auto it = std::find_if(report.groups.begin(), report.groups.end(),
                           [&](const GroupSummary& g) { return g.group == p.group; });
    if (it == report.groups.end()) {
      report.groups.push_back(GroupSummary{});
      report.groups.back().group = p.group;
      it = std::prev(report.groups.end());
    }
    ++it->checked;
    it->kink_adjusted += p.kink_adjusted ? 1 : 0;
    it->kink_unresolved += p.kink_unresolved ? 1 : 0;
    if (p.kink_unresolved) continue;
    it->max_abs_error = std::max(it->max_abs_error, p.abs_error);
    if (!p.absolute && p.rel_error >= it->max_rel_error) {
      it->max_rel_error = p.rel_error;
      if (it->passed) it->worst = p.name;
    }
    if (!p.passed && it->passed) {
      it->passed = false;
      it->worst = p.name;
    }
  }
}

}  // namespace

GradcheckLayers parse_gradcheck_layers(const std::string& text) {
  if (text == "all") return GradcheckLayers::All;
  if (text == "bayes-only") return GradcheckLayers::BayesOnly;
  if (text == "certain-only") return GradcheckLayers::CertainOnly;
  throw ConfigError("layer", "expected all, bayes-only or certain-only, got '" + text + "'");
}

std::string to_string(GradcheckLayers layers) {
  switch (layers) {
    case GradcheckLayers::All:
      return "all";
    case GradcheckLayers::BayesOnly:
      return "bayes-only";
    case GradcheckLayers::CertainOnly:
      return "certain-only";
  }
  return "?";
}

bool GradcheckReport::passed() const {
  return std::all_of(groups.begin(), groups.end(), [](const GroupSummary& g) { return g.passed; });
}

const ProbeResult* GradcheckReport::worst() const {
  const ProbeResult* worst = nullptr;
  for (const auto& p : probes) {
    if (p.kink_unresolved) continue;
    if (!worst || (!p.passed && worst->passed) ||
        (p.passed == worst->passed && p.rel_error > worst->rel_error)) {
      worst = &p;
    }
  }
  return worst;
}

bool gradient_matches(double analytic, double numeric, const GradcheckOptions& options, double* rel_error,
                      bool* absolute) {
  const double diff = std::abs(analytic - numeric);
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  const bool use_abs = scale < options.absolute_floor;
  const double rel = scale > 0.0 ? diff / scale : 0.0;
  if (rel_error) *rel_error = rel;
  if (absolute) *absolute = use_abs;
  if (!std::isfinite(analytic) || !std::isfinite(numeric)) return false;
  return use_abs ? diff <= options.absolute_floor : rel <= options.tolerance;
}

GradcheckReport run_gradcheck(std::vector<Probe> probes, const std::function<double()>& loss,
                              const GradcheckOptions& options, const std::function<std::uint64_t()>& pattern) {
  if (!(options.step > 0.0)) throw ConfigError("step", "finite-difference step must be positive");
  probes = subsample(std::move(probes), options);

  std::uint64_t base_pattern = 0;
  if (pattern) {
    loss();
    base_pattern = pattern();
  }

  GradcheckReport report;
  report.probes.reserve(probes.size());
  for (const auto& probe : probes) {
    ProbeResult r;
    r.group = probe.group;
    r.name = probe.name;
    r.analytic = probe.analytic;
    const double original = *probe.slot;
    double h = options.step;
    for (int attempt = 0;; ++attempt) {
      bool same = true;
      auto central = [&](double step) {
        *probe.slot = original + step;
        const double up = loss();
        same = same && (!pattern || pattern() == base_pattern);
        *probe.slot = original - step;
        const double down = loss();
        same = same && (!pattern || pattern() == base_pattern);
        *probe.slot = original;
        return (up - down) / (2.0 * step);
      };
      const double coarse = central(h);
      r.numeric = options.richardson ? (4.0 * central(0.5 * h) - coarse) / 3.0 : coarse;
      r.step = h;
      if (same) break;
      if (attempt == kMaxHalvings) {
        r.kink_unresolved = true;
        break;
      }
      r.kink_adjusted = true;
      h *= 0.5;
    }
    r.abs_error = std::abs(r.analytic - r.numeric);
    r.passed = gradient_matches(r.analytic, r.numeric, options, &r.rel_error, &r.absolute) || r.kink_unresolved;
    report.probes.push_back(std::move(r));
  }
  summarize(report);
  return report;
}

GradcheckOptions model_gradcheck_defaults() {
  GradcheckOptions options;
  options.step = 1e-4;
  options.richardson = true;
  return options;
}

GradcheckReport gradcheck_model(const ModelGradcheckSetup& setup, const GradcheckOptions& options) {
  Rng rng = make_rng(options.seed, Stream::Gradcheck);
  ModelD model = ModelD::build(setup.arch, setup.placement, options.seed);
  std::uniform_real_distribution<double> rho_dist(setup.rho_low, setup.rho_high);
  for (auto* unit : model.variational_units()) {
    for (auto& r : unit->var.rho.values()) r = rho_dist(rng);
  }

  TensorD images({setup.batch, setup.arch.channels, setup.arch.height, setup.arch.width});
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : images.values()) v = normal(rng);
  std::vector<int> labels(setup.batch);
  std::uniform_int_distribution<int> label_dist(0, static_cast<int>(setup.arch.num_classes) - 1);
  for (auto& l : labels) l = label_dist(rng);

  model.set_track_activation_pattern(true);
  auto pattern = [&] { return model.activation_pattern(); };

  GradcheckReport merged;
  auto append = [&](GradcheckReport part) {
    for (auto& p : part.probes) merged.probes.push_back(std::move(p));
  };

  const auto units = model.variational_units();
  if (setup.layers != GradcheckLayers::CertainOnly && !units.empty()) {
    const auto grads =
        uncertain_gradients(model, images, labels, setup.prior, setup.kl_weight, WeightMode::Sampled, &rng).grads;
    std::vector<Probe> probes;
    for (std::size_t u = 0; u < units.size(); ++u) {
      auto& var = units[u]->var;
      for (std::size_t i = 0; i < var.mu.size(); ++i) {
        probes.push_back({"uncertain.mu", units[u]->name + ".mu[" + std::to_string(i) + "]", &var.mu[i],
                          grads[u].delta_mu[i]});
      }
      for (std::size_t i = 0; i < var.rho.size(); ++i) {
        probes.push_back({"uncertain.rho", units[u]->name + ".rho[" + std::to_string(i) + "]", &var.rho[i],
                          grads[u].delta_rho[i]});
      }
    }
    auto loss = [&] {
      return uncertain_loss_value(model, images, labels, setup.prior, setup.kl_weight, WeightMode::FrozenNoise,
                                  nullptr);
    };
    append(run_gradcheck(std::move(probes), loss, options, pattern));
  }

  if (setup.layers != GradcheckLayers::BayesOnly) {
    certain_gradients(model, images, labels, false);
    std::vector<Probe> probes;
    for (const auto& t : model.partition().certain) {
      const std::string group = certain_group(t.name);
      for (std::size_t i = 0; i < t.value->size(); ++i) {
        probes.push_back({group, t.name + "[" + std::to_string(i) + "]", &(*t.value)[i], (*t.grad)[i]});
      }
    }
    auto loss = [&] { return certain_loss_value(model, images, labels); };
    append(run_gradcheck(std::move(probes), loss, options, pattern));
  }

  summarize(merged);
  return merged;
}

}  // namespace pbcnn
