// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#include "mutualsl/kernels.hpp"

#include <algorithm>

namespace mutualsl {

PreparedSample prepare(const Sample& s) {
    PreparedSample ps;
    ps.sample = &s;
    ps.layout = token_layout(s);
    ps.table = build_table(s, ps.layout);
    ps.truth = ground_truth_targets(s, ps.table);
    return ps;
}

std::vector<PreparedSample> prepare_all(std::span<const Sample> corpus) {
    std::vector<PreparedSample> out;
    out.reserve(corpus.size());
    for (const auto& s : corpus) out.push_back(prepare(s));
    return out;
}

namespace {

struct SampleGrad {
    LossBundle losses;
    TransferState transfer;
};

SampleGrad sample_gradient(const ModelParams& p, const PreparedSample& ps, MutualMode mode,
                           std::optional<int> max_len, ParamVector& grad) {
    const ForwardResult fr = forward(*ps.sample, ps.layout, p);
    SampleObjective obj =
        sample_objective(fr.logits, ps.table, ps.truth, ps.sample->answer_frames, mode, max_len);
    backward(fr, obj.grads, p, grad);
    return {obj.losses, std::move(obj.transfer)};
}

void accumulate(std::span<double> dst, std::span<const double> src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

BatchGradient batch_gradient(const ModelParams& p, std::span<const PreparedSample> data,
                             std::span<const std::size_t> indices, MutualMode mode, std::optional<int> max_len,
                             Exec exec) {
    BatchGradient out{p.values.zeros_like(), {}, {}};
    const int count = static_cast<int>(indices.size());
    out.losses.resize(indices.size());
    out.transfers.resize(indices.size());
    if (count == 0) return out;

    if (exec == Exec::serial) {
        ParamVector scratch = p.values.zeros_like();
        for (int i = 0; i < count; ++i) {
            scratch.set_zero();
            auto r = sample_gradient(p, data[indices[i]], mode, max_len, scratch);
            out.losses[i] = r.losses;
            out.transfers[i] = std::move(r.transfer);
            accumulate(out.grad.values(), scratch.values());
        }
    } else {
        std::vector<ParamVector> per_sample(indices.size(), p.values.zeros_like());
#pragma omp parallel for schedule(dynamic)
        for (int i = 0; i < count; ++i) {
            auto r = sample_gradient(p, data[indices[i]], mode, max_len, per_sample[i]);
            out.losses[i] = r.losses;
            out.transfers[i] = std::move(r.transfer);
        }
        for (int i = 0; i < count; ++i) accumulate(out.grad.values(), per_sample[i].values());
    }
    const double inv = 1.0 / static_cast<double>(count);
    for (double& g : out.grad.values()) g *= inv;
    return out;
}

FrameSpan predicted_span(const SpanLogits& logits, const TimelineTable& tbl, Predictor which,
                         std::optional<int> max_len) {
    if (which == Predictor::textual && logits.has_text && !tbl.empty()) {
        const auto [ts, te] = decode_span(logits.t_start, logits.t_end, logits.t_mask, max_len);
        return subtitle_to_frame(subtitle_span_of_tokens({ts, te}, tbl), tbl);
    }
    const auto [vs, ve] = decode_span(logits.v_start, logits.v_end, {}, max_len);
    return bucket_extent({vs, ve});
}

std::vector<FrameSpan> predict_spans(const ModelParams& p, std::span<const PreparedSample> data, Predictor which,
                                     std::optional<int> max_len, Exec exec) {
    std::vector<FrameSpan> out(data.size());
    const int count = static_cast<int>(data.size());
    auto one = [&](int i) {
        const ForwardResult fr = forward(*data[i].sample, data[i].layout, p);
        out[i] = predicted_span(fr.logits, data[i].table, which, max_len);
    };
    if (exec == Exec::serial) {
        for (int i = 0; i < count; ++i) one(i);
    } else {
#pragma omp parallel for schedule(dynamic)
        for (int i = 0; i < count; ++i) one(i);
    }
    return out;
}

}  // namespace mutualsl
