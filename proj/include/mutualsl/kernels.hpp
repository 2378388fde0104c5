// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "mutualsl/network.hpp"
#include "mutualsl/objective.hpp"
#include "mutualsl/timeline.hpp"

namespace mutualsl {

/// Per-sample data derived once from a Sample: token layout, look-up table, targets.
struct PreparedSample {
    const Sample* sample = nullptr;
    TokenLayout layout;
    TimelineTable table;
    GroundTruth truth;
};

PreparedSample prepare(const Sample& s);
std::vector<PreparedSample> prepare_all(std::span<const Sample> corpus);

enum class Exec { serial, parallel };

enum class Predictor {
    textual,  // textual span mapped through the look-up table; visual fallback without subtitles
    visual
};

struct BatchGradient {
    ParamVector grad;  // mean over the batch
    std::vector<LossBundle> losses;
    std::vector<TransferState> transfers;
};

/// Mean gradient of the per-sample objective over `indices`. The parallel path
/// computes samples concurrently and reduces in index order, so both paths are
/// bitwise identical.
BatchGradient batch_gradient(const ModelParams& p, std::span<const PreparedSample> data,
                             std::span<const std::size_t> indices, MutualMode mode, std::optional<int> max_len,
                             Exec exec);

/// Decoded frame span for every sample.
std::vector<FrameSpan> predict_spans(const ModelParams& p, std::span<const PreparedSample> data, Predictor which,
                                     std::optional<int> max_len, Exec exec);

FrameSpan predicted_span(const SpanLogits& logits, const TimelineTable& tbl, Predictor which,
                         std::optional<int> max_len);

}  // namespace mutualsl
