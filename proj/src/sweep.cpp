#include "pbcnn/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <thread>

#include "pbcnn/error.hpp"
#include "pbcnn/evaluate.hpp"

namespace pbcnn {

std::vector<TrainRecord> SweepReport::records() const {
  std::vector<TrainRecord> out;
  for (const auto& entry : entries) {
    out.insert(out.end(), entry.curve.begin(), entry.curve.end());
  }
  for (const auto& entry : entries) {
    TrainRecord row;
    row.kind = TrainRecord::Kind::Final;
    row.placement = entry.placement.to_string();
    row.epoch = config.epochs;
    row.step = entry.curve.empty() ? 0 : entry.curve.back().step;
    row.eval = entry.final_eval;
    row.wall_seconds = entry.wall_seconds;
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<std::size_t> SweepReport::ranking() const {
  std::vector<std::size_t> order(entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return entries[a].final_eval.accuracy > entries[b].final_eval.accuracy;
  });
  return order;
}

SweepReport placement_sweep(const ArchSpec& arch, const std::vector<PlacementConfig>& placements,
                            const Dataset& dataset, const TrainConfig& config, const SweepOptions& options) {
  if (placements.empty()) throw ConfigError("groups", "sweep needs at least one placement");
  if (options.jobs < 1) throw ConfigError("jobs", "must be at least 1");
  arch.validate();
  config.validate();
  for (const auto& p : placements) p.validate();

  SweepReport report;
  report.arch = arch;
  report.config = config;
  report.entries.resize(placements.size());

  std::mutex callback_mutex;
  auto run_one = [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    SweepEntry& entry = report.entries[i];
    entry.placement = placements[i];
    const std::string label = placements[i].to_string();

    Model model = Model::build(arch, placements[i], config.seed);
    TrainHooks hooks;
    hooks.timing = options.timing;
    if (options.on_record) {
      hooks.on_record = [&](const TrainRecord& r) {
        TrainRecord tagged = r;
        tagged.placement = label;
        std::lock_guard lock(callback_mutex);
        options.on_record(placements[i], tagged);
      };
    }
    entry.curve = train(model, dataset, config, hooks);
    for (auto& r : entry.curve) r.placement = label;
    entry.final_eval = evaluate(model, dataset, Split::PublicTest);
    if (options.timing) {
      entry.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  };

  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(options.jobs), placements.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < placements.size(); ++i) run_one(i);
    return report;
  }

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(placements.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < placements.size(); i = next++) {
        try {
          run_one(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return report;
}

}  // namespace pbcnn
