// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace mutualsl {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

using TokenId = std::int32_t;

/// A time interval on the continuous axis [0, k], in seconds.
struct FrameSpan {
    double start = 0.0;
    double end = 0.0;
    bool operator==(const FrameSpan&) const = default;
};

/// Inclusive token-index interval into the concatenated text.
struct TokenSpan {
    int start_tok = 0;
    int end_tok = 0;
    bool operator==(const TokenSpan&) const = default;
};

struct Subtitle {
    double start_sec = 0.0;
    double end_sec = 0.0;
    std::vector<TokenId> token_ids;
    bool operator==(const Subtitle&) const = default;
};

/// One visual answer localization instance. Frame t is the bucket [t, t+1).
struct Sample {
    std::string id;
    int duration_k = 0;
    Mat video_features;  // duration_k x d_in
    std::vector<Subtitle> subtitles;
    std::vector<TokenId> question_tokens;
    FrameSpan answer_frames;

    bool operator==(const Sample& o) const {
        return id == o.id && duration_k == o.duration_k &&
               video_features.rows() == o.video_features.rows() &&
               video_features.cols() == o.video_features.cols() &&
               video_features == o.video_features && subtitles == o.subtitles &&
               question_tokens == o.question_tokens && answer_frames == o.answer_frames;
    }
};

/// Token positions of the concatenation [Q, T_1, ..., T_r].
struct TokenLayout {
    int n = 0;
    int question_len = 0;
    std::vector<std::optional<int>> token_to_subtitle;      // nullopt for question tokens
    std::vector<std::pair<int, int>> subtitle_token_range;  // inclusive

    std::vector<TokenId> tokens;  // concatenated ids, length n
    std::vector<std::uint8_t> subtitle_mask() const;
};

/// Returns the list of violated invariants; empty when the sample is valid.
std::vector<std::string> validate_sample(const Sample& s);

TokenLayout token_layout(const Sample& s);

std::vector<Sample> load_corpus(const std::filesystem::path& path);
void save_corpus(const std::vector<Sample>& corpus, const std::filesystem::path& path);

// Single-record codec used by load/save; exposed for tests.
std::string sample_to_line(const Sample& s);
Sample sample_from_line(const std::string& line, std::size_t line_no);

}  // namespace mutualsl
