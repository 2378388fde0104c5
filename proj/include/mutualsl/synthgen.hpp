// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mutualsl/data_model.hpp"

namespace mutualsl {

struct GenConfig {
    int num_samples = 500;
    int k = 64;
    int d_in = 32;
    int vocab_size = 256;
    std::pair<int, int> num_subtitles_range{4, 10};
    std::pair<int, int> answer_len_range{4, 16};
    double subtitle_gap_prob = 0.2;
    double signal_strength = 1.0;
    double noise_std = 1.0;
    std::uint64_t seed = 0;
};

/// Number of latent topics a question can be about. Each topic owns a video
/// signal direction, a question-token cluster and an answer-token cluster.
inline constexpr int kNumTopics = 8;

std::vector<std::string> validate_gen_config(const GenConfig& cfg);

/// Probability that a subtitle token inside the answer is drawn from the
/// question's answer cluster rather than from filler.
double answer_token_prob(double signal_strength);

/// Deterministic in cfg.seed; samples are generated independently by index.
std::vector<Sample> generate_corpus(const GenConfig& cfg);

/// Disjoint seeded partition. Train size is round(train_frac * size).
std::pair<std::vector<Sample>, std::vector<Sample>> split_corpus(const std::vector<Sample>& corpus, double train_frac,
                                                                 std::uint64_t seed);

}  // namespace mutualsl
