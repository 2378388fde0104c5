// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#include "mutualsl/timeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mutualsl/errors.hpp"

namespace mutualsl {

TimelineTable build_table(const Sample& s, const TokenLayout& layout) {
    if (layout.subtitle_token_range.size() != s.subtitles.size())
        throw ShapeError("layout does not match sample subtitles");
    TimelineTable tbl;
    tbl.duration_k = s.duration_k;
    tbl.token_to_subtitle = layout.token_to_subtitle;
    tbl.entries.reserve(s.subtitles.size());
    for (std::size_t i = 0; i < s.subtitles.size(); ++i) {
        const auto [first, last] = layout.subtitle_token_range[i];
        tbl.entries.push_back({static_cast<int>(i), s.subtitles[i].start_sec, s.subtitles[i].end_sec, first, last});
    }
    return tbl;
}

double temporal_iou(const FrameSpan& a, const FrameSpan& b) {
    if (a == b) return 1.0;
    const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
    const double uni = (a.end - a.start) + (b.end - b.start) - inter;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

namespace {

double discrete_iou(int a0, int a1, int b0, int b1) {
    const int inter = std::max(0, std::min(a1, b1) - std::max(a0, b0) + 1);
    const int uni = (a1 - a0 + 1) + (b1 - b0 + 1) - inter;
    return uni > 0 ? static_cast<double>(inter) / uni : 0.0;
}

void require_nonempty(const TimelineTable& tbl) {
    if (tbl.empty()) throw Error("timeline table is empty");
}

}  // namespace

double index_iou(const SubtitleSpan& a, const SubtitleSpan& b) {
    return discrete_iou(a.start_idx, a.end_idx, b.start_idx, b.end_idx);
}

double index_iou(const TokenSpan& a, const TokenSpan& b) {
    return discrete_iou(a.start_tok, a.end_tok, b.start_tok, b.end_tok);
}

SubtitleSpan frame_to_subtitle(const FrameSpan& span, const TimelineTable& tbl) {
    require_nonempty(tbl);
    int start_idx = 0;
    int end_idx = 0;
    double best_start = std::numeric_limits<double>::infinity();
    double best_end = std::numeric_limits<double>::infinity();
    for (int i = 0; i < tbl.size(); ++i) {
        const double ds = std::abs(span.start - tbl.entries[i].start_sec);
        const double de = std::abs(span.end - tbl.entries[i].end_sec);
        if (ds < best_start) best_start = ds, start_idx = i;
        if (de < best_end) best_end = de, end_idx = i;
    }
    if (end_idx >= start_idx) return {start_idx, end_idx};

    // Degenerate: fall back to the single subtitle overlapping the span most.
    int pick = -1;
    double best_overlap = 0.0;
    for (int i = 0; i < tbl.size(); ++i) {
        const double ov = std::min(span.end, tbl.entries[i].end_sec) - std::max(span.start, tbl.entries[i].start_sec);
        if (ov > best_overlap) best_overlap = ov, pick = i;
    }
    if (pick < 0) {
        const double mid = 0.5 * (span.start + span.end);
        double best_dist = std::numeric_limits<double>::infinity();
        for (int i = 0; i < tbl.size(); ++i) {
            const double d = std::abs(mid - 0.5 * (tbl.entries[i].start_sec + tbl.entries[i].end_sec));
            if (d < best_dist) best_dist = d, pick = i;
        }
    }
    return {pick, pick};
}

FrameSpan subtitle_to_frame(const SubtitleSpan& span, const TimelineTable& tbl) {
    if (span.start_idx < 0 || span.end_idx >= tbl.size() || span.start_idx > span.end_idx)
        throw Error("subtitle span [" + std::to_string(span.start_idx) + ", " + std::to_string(span.end_idx) +
                    "] out of range for table of " + std::to_string(tbl.size()));
    return {tbl.entries[span.start_idx].start_sec, tbl.entries[span.end_idx].end_sec};
}

TokenSpan token_span_of_subtitles(const SubtitleSpan& span, const TimelineTable& tbl) {
    if (span.start_idx < 0 || span.end_idx >= tbl.size() || span.start_idx > span.end_idx)
        throw Error("subtitle span out of range");
    return {tbl.entries[span.start_idx].first_token, tbl.entries[span.end_idx].last_token};
}

SubtitleSpan subtitle_span_of_tokens(const TokenSpan& span, const TimelineTable& tbl) {
    const int n = static_cast<int>(tbl.token_to_subtitle.size());
    if (span.start_tok < 0 || span.end_tok >= n || span.start_tok > span.end_tok)
        throw Error("token span out of range");
    const auto& s = tbl.token_to_subtitle[span.start_tok];
    const auto& e = tbl.token_to_subtitle[span.end_tok];
    if (!s || !e) throw Error("token span boundary maps to a question token");
    return {*s, *e};
}

FrameIndexSpan frame_buckets(const FrameSpan& span, int duration_k) {
    const int last = std::max(0, duration_k - 1);
    const int s = std::clamp(static_cast<int>(std::floor(span.start)), 0, last);
    int e = std::min(last, static_cast<int>(std::ceil(span.end)) - 1);
    e = std::max(e, s);
    return {s, e};
}

FrameSpan bucket_extent(const FrameIndexSpan& span) {
    return {static_cast<double>(span.start), static_cast<double>(span.end + 1)};
}

GroundTruth ground_truth_targets(const Sample& s, const TimelineTable& tbl) {
    GroundTruth gt;
    gt.frames = frame_buckets(s.answer_frames, s.duration_k);
    if (!tbl.empty()) gt.tokens = token_span_of_subtitles(frame_to_subtitle(s.answer_frames, tbl), tbl);
    return gt;
}

MetricsReport compute_metrics(const std::vector<FrameSpan>& predictions, const std::vector<FrameSpan>& truths) {
    if (predictions.size() != truths.size()) throw Error("predictions and truths differ in length");
    if (predictions.empty()) throw Error("cannot compute metrics on an empty set");
    MetricsReport m;
    m.per_sample_iou.reserve(predictions.size());
    for (std::size_t i = 0; i < predictions.size(); ++i)
        m.per_sample_iou.push_back(temporal_iou(predictions[i], truths[i]));
    const double count = static_cast<double>(predictions.size());
    double sum = 0.0;
    for (double v : m.per_sample_iou) sum += v;
    m.miou = 100.0 * sum / count;
    for (double mu : kIouThresholds) {
        const auto hits = std::count_if(m.per_sample_iou.begin(), m.per_sample_iou.end(),
                                        [mu](double v) { return v >= mu - 1e-12; });
        m.iou_at[mu] = 100.0 * static_cast<double>(hits) / count;
    }
    return m;
}

std::vector<std::pair<std::string, double>> metrics_entries(const MetricsReport& m) {
    return {{"iou_0.3", m.iou_at.at(0.3)},
            {"iou_0.5", m.iou_at.at(0.5)},
            {"iou_0.7", m.iou_at.at(0.7)},
            {"miou", m.miou}};
}

std::string metrics_csv_header() { return "iou_0.3,iou_0.5,iou_0.7,miou"; }

std::string metrics_csv_row(const MetricsReport& m) {
    std::ostringstream os;
    os.precision(17);
    const auto e = metrics_entries(m);
    for (std::size_t i = 0; i < e.size(); ++i) os << (i ? "," : "") << e[i].second;
    return os.str();
}

}  // namespace mutualsl
