// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>

#include "mutualsl/network.hpp"
#include "mutualsl/timeline.hpp"

namespace mutualsl {

/// Cross-entropy of softmax(start) at ts plus softmax(end) at te. Positions with
/// mask == 0 are excluded from the normalization; an empty mask means all positions.
double span_ce(const Vec& start_logits, const Vec& end_logits, int target_start, int target_end,
               std::span<const std::uint8_t> mask = {});

/// Same loss and its gradient w.r.t. both logit vectors (zero on masked positions).
double span_ce_grad(const Vec& start_logits, const Vec& end_logits, int target_start, int target_end,
                    std::span<const std::uint8_t> mask, Vec& d_start, Vec& d_end);

/// argmax over unmasked pairs s <= e (and e - s <= max_len) of start[s] + end[e];
/// ties go to the smallest s, then the smallest e.
std::pair<int, int> decode_span(const Vec& start_logits, const Vec& end_logits, std::span<const std::uint8_t> mask = {},
                                std::optional<int> max_len = std::nullopt);

/// Decoded spans, converted pseudo labels and ODL weights for one sample.
struct TransferState {
    FrameIndexSpan visual_pred;          // decoded frame buckets
    std::optional<TokenSpan> textual_pred;
    std::optional<FrameIndexSpan> pseudo_visual;   // from the textual prediction
    std::optional<TokenSpan> pseudo_textual;       // from the visual prediction
    double alpha = 0.0;
    double beta = 0.0;

    bool has_pseudo() const { return pseudo_visual.has_value() && pseudo_textual.has_value(); }
};

/// Pseudo labels are plain indices, so nothing produced here can carry gradient.
TransferState build_pseudo_labels(const SpanLogits& logits, const TimelineTable& tbl,
                                  std::optional<int> max_len = std::nullopt);

/// alpha = temporal IoU of the visual pseudo label against the answer,
/// beta = token-index IoU of the textual pseudo label against the ground-truth token span.
std::pair<double, double> odl_weights(const TransferState& state, const FrameSpan& gt_frames,
                                      const TokenSpan& gt_tokens);

std::pair<double, double> mutual_losses(const SpanLogits& logits, const TransferState& state, double alpha,
                                        double beta);

struct LossBundle {
    double loss_visual = 0.0;
    double loss_textual = 0.0;
    double loss_visual_mutual = 0.0;
    double loss_textual_mutual = 0.0;
    double total = 0.0;
};

LossBundle total_loss(double loss_visual, double loss_textual, double loss_visual_mutual, double loss_textual_mutual);
/// Mean over samples, component-wise.
LossBundle mean_bundle(std::span<const LossBundle> bundles);

enum class MutualMode {
    off,        // supervised only
    odl,        // alpha/beta from IoU against ground truth
    zero_weights  // mutual terms built but weighted by 0
};

/// Full per-sample objective: losses, transfer state and logit gradients.
struct SampleObjective {
    LossBundle losses;
    TransferState transfer;
    LogitGrads grads;
};

SampleObjective sample_objective(const SpanLogits& logits, const TimelineTable& tbl, const GroundTruth& gt,
                                 const FrameSpan& answer, MutualMode mode, std::optional<int> max_len = std::nullopt);

}  // namespace mutualsl
