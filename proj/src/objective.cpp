// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#include "mutualsl/objective.hpp"

#include <cmath>
#include <limits>

#include "mutualsl/errors.hpp"

namespace mutualsl {

namespace {

bool active(std::span<const std::uint8_t> mask, Eigen::Index i) {
    return mask.empty() || mask[static_cast<std::size_t>(i)] != 0;
}

void check_target(const Vec& logits, int target, std::span<const std::uint8_t> mask) {
    if (!mask.empty() && static_cast<Eigen::Index>(mask.size()) != logits.size())
        throw ShapeError("span_ce: mask length differs from logits");
    if (target < 0 || target >= logits.size())
        throw Error("span_ce: target " + std::to_string(target) + " outside logits of length " +
                    std::to_string(logits.size()));
    if (!active(mask, target)) throw Error("span_ce: target " + std::to_string(target) + " is a masked position");
}

// -log softmax(x)[target] over active positions; fills dx with softmax - onehot when given.
double masked_ce(const Vec& x, int target, std::span<const std::uint8_t> mask, Vec* dx) {
    check_target(x, target, mask);
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (active(mask, i)) m = std::max(m, x[i]);
    double z = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (active(mask, i)) z += std::exp(x[i] - m);
    const double lse = m + std::log(z);
    if (dx) {
        dx->setZero(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i)
            if (active(mask, i)) (*dx)[i] = std::exp(x[i] - lse);
        (*dx)[target] -= 1.0;
    }
    return lse - x[target];
}

}  // namespace

double span_ce(const Vec& start_logits, const Vec& end_logits, int target_start, int target_end,
               std::span<const std::uint8_t> mask) {
    return masked_ce(start_logits, target_start, mask, nullptr) + masked_ce(end_logits, target_end, mask, nullptr);
}

double span_ce_grad(const Vec& start_logits, const Vec& end_logits, int target_start, int target_end,
                    std::span<const std::uint8_t> mask, Vec& d_start, Vec& d_end) {
    return masked_ce(start_logits, target_start, mask, &d_start) + masked_ce(end_logits, target_end, mask, &d_end);
}

std::pair<int, int> decode_span(const Vec& start_logits, const Vec& end_logits, std::span<const std::uint8_t> mask,
                                std::optional<int> max_len) {
    const Eigen::Index L = start_logits.size();
    if (end_logits.size() != L) throw ShapeError("decode_span: start and end lengths differ");
    if (!mask.empty() && static_cast<Eigen::Index>(mask.size()) != L) throw ShapeError("decode_span: mask length");
    if (max_len && *max_len < 0) throw Error("decode_span: max_len must be >= 0");

    int best_s = -1;
    int best_e = -1;
    double best = -std::numeric_limits<double>::infinity();
    auto consider = [&](int s, int e) {
        const double v = start_logits[s] + end_logits[e];
        if (best_s < 0 || v > best || (v == best && s < best_s)) {
            best = v;
            best_s = s;
            best_e = e;
        }
    };

    if (!max_len) {
        // Running first-occurrence argmax of start over the prefix.
        int arg = -1;
        for (Eigen::Index e = 0; e < L; ++e) {
            if (!active(mask, e)) continue;
            if (arg < 0 || start_logits[e] > start_logits[arg]) arg = static_cast<int>(e);
            consider(arg, static_cast<int>(e));
        }
    } else {
        for (Eigen::Index e = 0; e < L; ++e) {
            if (!active(mask, e)) continue;
            int arg = -1;
            for (Eigen::Index s = std::max<Eigen::Index>(0, e - *max_len); s <= e; ++s)
                if (active(mask, s) && (arg < 0 || start_logits[s] > start_logits[arg])) arg = static_cast<int>(s);
            consider(arg, static_cast<int>(e));
        }
    }
    if (best_s < 0) throw Error("decode_span: every position is masked");
    return {best_s, best_e};
}

TransferState build_pseudo_labels(const SpanLogits& logits, const TimelineTable& tbl, std::optional<int> max_len) {
    TransferState st;
    const auto [vs, ve] = decode_span(logits.v_start, logits.v_end, {}, max_len);
    st.visual_pred = {vs, ve};
    if (!logits.has_text || tbl.empty()) return st;

    const auto [ts, te] = decode_span(logits.t_start, logits.t_end, logits.t_mask, max_len);
    st.textual_pred = TokenSpan{ts, te};

    const SubtitleSpan from_visual = frame_to_subtitle(bucket_extent(st.visual_pred), tbl);
    st.pseudo_textual = token_span_of_subtitles(from_visual, tbl);

    const SubtitleSpan from_textual = subtitle_span_of_tokens(*st.textual_pred, tbl);
    st.pseudo_visual = frame_buckets(subtitle_to_frame(from_textual, tbl), tbl.duration_k);
    return st;
}

std::pair<double, double> odl_weights(const TransferState& state, const FrameSpan& gt_frames,
                                      const TokenSpan& gt_tokens) {
    if (!state.has_pseudo()) throw Error("odl_weights: pseudo labels absent");
    const double alpha = temporal_iou(bucket_extent(*state.pseudo_visual), gt_frames);
    const double beta = index_iou(*state.pseudo_textual, gt_tokens);
    return {alpha, beta};
}

std::pair<double, double> mutual_losses(const SpanLogits& logits, const TransferState& state, double alpha,
                                        double beta) {
    if (!(alpha >= 0.0 && alpha <= 1.0 && beta >= 0.0 && beta <= 1.0))
        throw Error("mutual_losses: weights must lie in [0, 1]");
    if (!state.has_pseudo()) return {0.0, 0.0};
    const auto& pv = *state.pseudo_visual;
    const auto& pt = *state.pseudo_textual;
    const double lv = alpha * span_ce(logits.v_start, logits.v_end, pv.start, pv.end);
    const double lt = beta * span_ce(logits.t_start, logits.t_end, pt.start_tok, pt.end_tok, logits.t_mask);
    return {lv, lt};
}

LossBundle total_loss(double loss_visual, double loss_textual, double loss_visual_mutual, double loss_textual_mutual) {
    LossBundle b{loss_visual, loss_textual, loss_visual_mutual, loss_textual_mutual, 0.0};
    b.total = loss_visual + loss_textual + loss_visual_mutual + loss_textual_mutual;
    return b;
}

LossBundle mean_bundle(std::span<const LossBundle> bundles) {
    LossBundle m;
    if (bundles.empty()) return m;
    for (const auto& b : bundles) {
        m.loss_visual += b.loss_visual;
        m.loss_textual += b.loss_textual;
        m.loss_visual_mutual += b.loss_visual_mutual;
        m.loss_textual_mutual += b.loss_textual_mutual;
    }
    const double n = static_cast<double>(bundles.size());
    return total_loss(m.loss_visual / n, m.loss_textual / n, m.loss_visual_mutual / n, m.loss_textual_mutual / n);
}

SampleObjective sample_objective(const SpanLogits& logits, const TimelineTable& tbl, const GroundTruth& gt,
                                 const FrameSpan& answer, MutualMode mode, std::optional<int> max_len) {
    SampleObjective out;
    auto& g = out.grads;
    const double lv = span_ce_grad(logits.v_start, logits.v_end, gt.frames.start, gt.frames.end, {}, g.v_start,
                                   g.v_end);
    double lt = 0.0;
    const bool text = logits.has_text && gt.tokens.has_value();
    if (text)
        lt = span_ce_grad(logits.t_start, logits.t_end, gt.tokens->start_tok, gt.tokens->end_tok, logits.t_mask,
                          g.t_start, g.t_end);

    double lvm = 0.0;
    double ltm = 0.0;
    if (mode != MutualMode::off && text) {
        out.transfer = build_pseudo_labels(logits, tbl, max_len);
        auto& st = out.transfer;
        if (st.has_pseudo()) {
            if (mode == MutualMode::odl) std::tie(st.alpha, st.beta) = odl_weights(st, answer, *gt.tokens);
            const auto& pv = *st.pseudo_visual;
            const auto& pt = *st.pseudo_textual;
            Vec ds, de;
            lvm = st.alpha * span_ce_grad(logits.v_start, logits.v_end, pv.start, pv.end, {}, ds, de);
            g.v_start += st.alpha * ds;
            g.v_end += st.alpha * de;
            ltm = st.beta *
                  span_ce_grad(logits.t_start, logits.t_end, pt.start_tok, pt.end_tok, logits.t_mask, ds, de);
            g.t_start += st.beta * ds;
            g.t_end += st.beta * de;
        }
    }
    out.losses = total_loss(lv, lt, lvm, ltm);
    return out;
}

}  // namespace mutualsl
