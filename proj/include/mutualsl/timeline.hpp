// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mutualsl/data_model.hpp"

namespace mutualsl {

/// Inclusive range of subtitle indices.
struct SubtitleSpan {
    int start_idx = 0;
    int end_idx = 0;
    bool operator==(const SubtitleSpan&) const = default;
};

/// Frame-bucket pair [start, end], inclusive, 0-based.
struct FrameIndexSpan {
    int start = 0;
    int end = 0;
    bool operator==(const FrameIndexSpan&) const = default;
};

/// The subtitle timeline look-up table: time interval and token range per subtitle.
struct TimelineTable {
    struct Entry {
        int subtitle = 0;
        double start_sec = 0.0;
        double end_sec = 0.0;
        int first_token = 0;
        int last_token = 0;
    };
    std::vector<Entry> entries;
    int duration_k = 0;
    std::vector<std::optional<int>> token_to_subtitle;

    bool empty() const noexcept { return entries.empty(); }
    int size() const noexcept { return static_cast<int>(entries.size()); }
};

struct MetricsReport {
    std::map<double, double> iou_at;  // threshold -> percentage
    double miou = 0.0;
    std::vector<double> per_sample_iou;
};

inline constexpr double kIouThresholds[] = {0.3, 0.5, 0.7};

TimelineTable build_table(const Sample& s, const TokenLayout& layout);

double temporal_iou(const FrameSpan& a, const FrameSpan& b);
double index_iou(const SubtitleSpan& a, const SubtitleSpan& b);
double index_iou(const TokenSpan& a, const TokenSpan& b);

SubtitleSpan frame_to_subtitle(const FrameSpan& span, const TimelineTable& tbl);
FrameSpan subtitle_to_frame(const SubtitleSpan& span, const TimelineTable& tbl);
TokenSpan token_span_of_subtitles(const SubtitleSpan& span, const TimelineTable& tbl);
SubtitleSpan subtitle_span_of_tokens(const TokenSpan& span, const TimelineTable& tbl);

/// Frame buckets covered by a time span: [floor(start), min(k-1, ceil(end)-1)], clamped to [0, k-1].
FrameIndexSpan frame_buckets(const FrameSpan& span, int duration_k);
/// Time extent [s, e+1] of an inclusive frame-bucket pair.
FrameSpan bucket_extent(const FrameIndexSpan& span);

struct GroundTruth {
    FrameIndexSpan frames;
    std::optional<TokenSpan> tokens;  // absent when the sample has no subtitles
};

GroundTruth ground_truth_targets(const Sample& s, const TimelineTable& tbl);

MetricsReport compute_metrics(const std::vector<FrameSpan>& predictions, const std::vector<FrameSpan>& truths);

/// Flat key/value form: iou_0.3, iou_0.5, iou_0.7, miou.
std::vector<std::pair<std::string, double>> metrics_entries(const MetricsReport& m);
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& m);

}  // namespace mutualsl
