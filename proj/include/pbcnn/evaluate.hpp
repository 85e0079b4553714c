#pragma once

#include "pbcnn/data.hpp"
#include "pbcnn/model.hpp"
#include "pbcnn/records.hpp"

namespace pbcnn {

inline constexpr std::size_t kEvalBatchSize = 128;

/// Accuracy on one split with BN in eval mode. Mean mode uses w2 = mu; mc mode
/// averages softmax over `mode.samples` draws and needs `rng`.
EvalResult evaluate(Model& model, const Dataset& dataset, Split split, const EvalMode& mode = EvalMode::mean(),
                    Rng* rng = nullptr);

/// softplus(rho) statistics per variational layer, shallowest first.
SigmaProfile sigma_profile(const Model& model);

}  // namespace pbcnn
