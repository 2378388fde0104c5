// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

// Serial reference vs OpenMP kernels on the default synthetic shapes (k = 64, d = 64).

#include <benchmark/benchmark.h>

#include <numeric>

#include "mutualsl/kernels.hpp"
#include "mutualsl/synthgen.hpp"

namespace {

using namespace mutualsl;

struct Workload {
    std::vector<Sample> corpus;
    std::vector<PreparedSample> data;
    ModelParams params;
    std::vector<std::size_t> batch;

    Workload() {
        GenConfig g;
        g.num_samples = 64;
        corpus = generate_corpus(g);
        data = prepare_all(corpus);
        params = init_params(Manifest{});
        batch.resize(8);
        std::iota(batch.begin(), batch.end(), std::size_t{0});
    }
};

const Workload& workload() {
    static const Workload w;
    return w;
}

void BM_BatchGradient(benchmark::State& state) {
    const auto& w = workload();
    const Exec exec = state.range(0) ? Exec::parallel : Exec::serial;
    for (auto _ : state) {
        auto g = batch_gradient(w.params, w.data, w.batch, MutualMode::odl, std::nullopt, exec);
        benchmark::DoNotOptimize(g.grad.values().data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(w.batch.size()));
    state.SetLabel(state.range(0) ? "openmp" : "serial");
}

void BM_PredictSpans(benchmark::State& state) {
    const auto& w = workload();
    const Exec exec = state.range(0) ? Exec::parallel : Exec::serial;
    for (auto _ : state) {
        auto spans = predict_spans(w.params, w.data, Predictor::textual, std::nullopt, exec);
        benchmark::DoNotOptimize(spans.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(w.data.size()));
    state.SetLabel(state.range(0) ? "openmp" : "serial");
}

BENCHMARK(BM_BatchGradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PredictSpans)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
