// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#include <omp.h>

#include "doctest.h"
#include "mutualsl/kernels.hpp"
#include "mutualsl/synthgen.hpp"
#include "test_util.hpp"

using namespace mutualsl;
using namespace mutualsl::testing;

namespace {

struct Fixture {
    std::vector<Sample> corpus;
    std::vector<PreparedSample> data;
    ModelParams params;

    explicit Fixture(int n = 12) {
        GenConfig g;
        g.num_samples = n;
        g.k = 16;
        g.d_in = 6;
        g.vocab_size = 64;
        g.answer_len_range = {2, 8};
        g.seed = 21;
        corpus = generate_corpus(g);
        // Keep one subtitle-free sample in the mix.
        corpus[3].subtitles.clear();
        data = prepare_all(corpus);
        params = init_params({8, 6, 64, 1, 4});
    }
};

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = n - 1 - i;
    return idx;
}

}  // namespace

TEST_CASE("serial and parallel batch gradients are bitwise identical") {
    const Fixture fx;
    const auto idx = all_indices(fx.data.size());
    omp_set_num_threads(4);
    for (MutualMode mode : {MutualMode::off, MutualMode::odl, MutualMode::zero_weights}) {
        const auto s = batch_gradient(fx.params, fx.data, idx, mode, std::nullopt, Exec::serial);
        const auto p = batch_gradient(fx.params, fx.data, idx, mode, std::nullopt, Exec::parallel);
        CHECK(s.grad == p.grad);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            CHECK(s.losses[i].total == p.losses[i].total);
            CHECK(s.transfers[i].alpha == p.transfers[i].alpha);
        }
    }
    const auto ps = predict_spans(fx.params, fx.data, Predictor::textual, std::nullopt, Exec::serial);
    const auto pp = predict_spans(fx.params, fx.data, Predictor::textual, std::nullopt, Exec::parallel);
    CHECK(ps == pp);
}

TEST_CASE("batch gradient is the mean of per-sample gradients") {
    const Fixture fx(5);
    const auto idx = all_indices(fx.data.size());
    const auto batch = batch_gradient(fx.params, fx.data, idx, MutualMode::odl, std::nullopt, Exec::serial);
    std::vector<double> sum(batch.grad.values().size(), 0.0);
    for (std::size_t i : idx) {
        const std::size_t one[] = {i};
        const auto g = batch_gradient(fx.params, fx.data, one, MutualMode::odl, std::nullopt, Exec::serial);
        for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += g.grad.values()[j];
    }
    for (std::size_t j = 0; j < sum.size(); ++j)
        CHECK(batch.grad.values()[j] == doctest::Approx(sum[j] / 5.0).epsilon(1e-12));
    const auto empty = batch_gradient(fx.params, fx.data, {}, MutualMode::odl, std::nullopt, Exec::serial);
    CHECK(empty.losses.empty());
}

TEST_CASE("zero ODL weights reproduce the supervised-only gradient exactly") {
    const Fixture fx;
    const auto idx = all_indices(fx.data.size());
    const auto off = batch_gradient(fx.params, fx.data, idx, MutualMode::off, std::nullopt, Exec::serial);
    const auto zero = batch_gradient(fx.params, fx.data, idx, MutualMode::zero_weights, std::nullopt, Exec::serial);
    CHECK(off.grad == zero.grad);
}

TEST_CASE("mutual terms only reach their own predictor") {
    const Fixture fx;
    int checked = 0;
    for (const auto& ps : fx.data) {
        const auto fr = forward(*ps.sample, ps.layout, fx.params);
        const auto st = build_pseudo_labels(fr.logits, ps.table);
        if (!st.has_pseudo()) continue;
        ++checked;
        const auto& pv = *st.pseudo_visual;
        const auto& pt = *st.pseudo_textual;

        LogitGrads visual_only;
        span_ce_grad(fr.logits.v_start, fr.logits.v_end, pv.start, pv.end, {}, visual_only.v_start,
                     visual_only.v_end);
        ParamVector gv = fx.params.values.zeros_like();
        backward(fr, visual_only, fx.params, gv);

        LogitGrads textual_only;
        span_ce_grad(fr.logits.t_start, fr.logits.t_end, pt.start_tok, pt.end_tok, fr.logits.t_mask,
                     textual_only.t_start, textual_only.t_end);
        ParamVector gt = fx.params.values.zeros_like();
        backward(fr, textual_only, fx.params, gt);

        for (const auto& spec : gv.layout().specs()) {
            CAPTURE(spec.name);
            const auto a = gv.slice(spec.id);
            const auto b = gt.slice(spec.id);
            if (spec.group == ParamGroup::textual)
                CHECK(std::all_of(a.begin(), a.end(), [](double x) { return x == 0.0; }));
            if (spec.group == ParamGroup::visual)
                CHECK(std::all_of(b.begin(), b.end(), [](double x) { return x == 0.0; }));
        }
    }
    CHECK(checked > 5);
}

TEST_CASE("predictions fall back to the visual head without subtitles") {
    const Fixture fx;
    const auto tp = predict_spans(fx.params, fx.data, Predictor::textual, std::nullopt, Exec::serial);
    const auto vp = predict_spans(fx.params, fx.data, Predictor::visual, std::nullopt, Exec::serial);
    CHECK(tp[3] == vp[3]);
    for (std::size_t i = 0; i < tp.size(); ++i) {
        CHECK(tp[i].start < tp[i].end);
        CHECK(vp[i].end <= fx.corpus[i].duration_k);
        if (i == 3) continue;
        // Textual spans land on subtitle boundaries.
        bool start_ok = false, end_ok = false;
        for (const auto& sub : fx.corpus[i].subtitles) {
            start_ok |= sub.start_sec == tp[i].start;
            end_ok |= sub.end_sec == tp[i].end;
        }
        CHECK(start_ok);
        CHECK(end_ok);
    }
    const auto capped = predict_spans(fx.params, fx.data, Predictor::visual, 2, Exec::serial);
    for (const auto& s : capped) CHECK(s.end - s.start <= 3.0);
}
