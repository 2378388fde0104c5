// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mutualsl/kernels.hpp"
#include "mutualsl/network.hpp"
#include "mutualsl/objective.hpp"
#include "mutualsl/timeline.hpp"

namespace mutualsl {

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 8;
    int epochs = 30;
    double weight_decay = 0.01;
    std::uint64_t seed = 0;
    bool mkt_enabled = true;
    int d = 64;
    int d_in = 32;
    int vocab_size = 256;
    int conv_kernel = 1;
    std::optional<int> max_len;
    bool parallel = true;

    Manifest manifest() const { return {d, d_in, vocab_size, conv_kernel, seed}; }
};

std::vector<std::string> validate_train_config(const TrainConfig& cfg);

/// Decoupled weight decay Adam (beta1 0.9, beta2 0.999, eps 1e-8).
class AdamW {
public:
    AdamW(std::size_t size, double lr, double weight_decay);
    void step(std::span<double> params, std::span<const double> grad);
    long steps() const { return t_; }

private:
    double lr_, wd_;
    double b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
    long t_ = 0;
    std::vector<double> m_, v_;
};

struct EpochRecord {
    int epoch = 0;
    LossBundle losses;
    std::optional<double> mean_alpha;  // absent without mutual transfer
    std::optional<double> mean_beta;
    MetricsReport val;
};

struct TrainReport {
    TrainConfig config;
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    double best_val_miou = 0.0;
    std::string checkpoint;  // path of the best checkpoint, when saved
    double wall_clock_sec = 0.0;
};

struct TrainResult {
    TrainReport report;
    ModelParams best;
    ModelParams last;
};

/// Throws DivergenceError on a non-finite loss or gradient.
TrainResult train(const std::vector<Sample>& train_set, const std::vector<Sample>& val_set, const TrainConfig& cfg);

/// Metrics of the chosen predictor's decoded spans (textual by default).
MetricsReport evaluate(const ModelParams& p, const std::vector<Sample>& corpus, const TrainConfig& cfg,
                       Predictor which = Predictor::textual);

struct AblationRow {
    std::optional<std::uint64_t> seed;  // nullopt on the cross-seed mean rows
    Predictor predictor = Predictor::textual;
    bool mkt = false;
    MetricsReport metrics;
};

struct AblationResult {
    std::vector<AblationRow> rows;          // 4 per seed, then 4 mean rows
    std::vector<TrainReport> mkt_reports;   // one per seed, for alpha/beta traces
    std::vector<TrainReport> plain_reports;
};

AblationResult ablate(const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                      const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds);

std::string ablation_csv(const AblationResult& r);
/// Throws when the report was trained without mutual transfer.
std::string alpha_beta_trace(const TrainReport& report);
std::string losses_csv(const TrainReport& report);

std::string report_to_json(const TrainReport& report);
TrainReport report_from_json(const std::string& text);

std::string to_string(Predictor p);

}  // namespace mutualsl
