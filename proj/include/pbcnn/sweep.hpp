#pragma once

// Trains one model per placement from the same seed and config.

#include <functional>
#include <optional>
#include <vector>

#include "pbcnn/data.hpp"
#include "pbcnn/model.hpp"
#include "pbcnn/records.hpp"
#include "pbcnn/trainer.hpp"

namespace pbcnn {

struct SweepEntry {
  PlacementConfig placement;
  std::vector<TrainRecord> curve;  // epoch and eval rows
  EvalResult final_eval;           // PublicTest, mean mode
  std::optional<double> wall_seconds;
};

struct SweepReport {
  ArchSpec arch;
  TrainConfig config;
  std::vector<SweepEntry> entries;

  /// Curves followed by one Final row per entry, placement filled in.
  std::vector<TrainRecord> records() const;
  /// Entry indices by final accuracy, best first (ties keep sweep order).
  std::vector<std::size_t> ranking() const;
};

struct SweepOptions {
  int jobs = 1;         // configurations trained concurrently
  bool timing = false;  // fill wall_seconds
  /// Called from worker threads; serialized by the sweep.
  std::function<void(const PlacementConfig&, const TrainRecord&)> on_record;
};

/// Every model is built with config.seed, so all placements share the
/// initial certain weights and mu.
SweepReport placement_sweep(const ArchSpec& arch, const std::vector<PlacementConfig>& placements,
                            const Dataset& dataset, const TrainConfig& config, const SweepOptions& options = {});

}  // namespace pbcnn
