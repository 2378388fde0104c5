// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#include "mutualsl/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "mutualsl/errors.hpp"

namespace mutualsl {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct Vocab {
    int cluster = 1;
    int filler_begin = 0;
    int filler_end = 0;

    explicit Vocab(int vocab_size)
        : cluster(std::max(1, vocab_size / (4 * kNumTopics))),
          filler_begin(2 * kNumTopics * cluster),
          filler_end(vocab_size) {}

    TokenId question(int topic, std::mt19937_64& rng) const {
        return topic * cluster + std::uniform_int_distribution<int>(0, cluster - 1)(rng);
    }
    TokenId answer(int topic, std::mt19937_64& rng) const {
        return (kNumTopics + topic) * cluster + std::uniform_int_distribution<int>(0, cluster - 1)(rng);
    }
    TokenId filler(std::mt19937_64& rng) const {
        return std::uniform_int_distribution<int>(filler_begin, filler_end - 1)(rng);
    }
};

constexpr int kQuestionLenMin = 3;
constexpr int kQuestionLenMax = 6;
constexpr int kTokensPerSubtitleMin = 2;
constexpr int kTokensPerSubtitleMax = 5;

Sample generate_one(const GenConfig& cfg, const Vocab& vocab, const Mat& topic_signal, int index) {
    std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(index) + 1)));
    const int k = cfg.k;
    Sample s;
    {
        std::ostringstream id;
        id << "syn-" << cfg.seed << "-" << index;
        s.id = id.str();
    }
    s.duration_k = k;

    const int topic = std::uniform_int_distribution<int>(0, kNumTopics - 1)(rng);
    const int q_len = std::uniform_int_distribution<int>(kQuestionLenMin, kQuestionLenMax)(rng);
    for (int i = 0; i < q_len; ++i) s.question_tokens.push_back(vocab.question(topic, rng));

    const int len_hi = std::min(cfg.answer_len_range.second, k);
    const int len = std::uniform_int_distribution<int>(std::min(cfg.answer_len_range.first, len_hi), len_hi)(rng);
    const int a0 = std::uniform_int_distribution<int>(0, k - len)(rng);
    const int a1 = a0 + len;
    s.answer_frames = {static_cast<double>(a0), static_cast<double>(a1)};

    // Subtitle slots partition [0, k] at integer cut points that include the answer boundaries.
    const int slots = std::uniform_int_distribution<int>(cfg.num_subtitles_range.first,
                                                         cfg.num_subtitles_range.second)(rng);
    std::set<int> cuts;
    if (a0 > 0) cuts.insert(a0);
    if (a1 < k) cuts.insert(a1);
    std::vector<int> candidates;
    for (int t = 1; t < k; ++t)
        if (!cuts.count(t)) candidates.push_back(t);
    std::shuffle(candidates.begin(), candidates.end(), rng);
    const int extra = std::max(0, slots - 1 - static_cast<int>(cuts.size()));
    for (int i = 0; i < extra && i < static_cast<int>(candidates.size()); ++i) cuts.insert(candidates[i]);

    std::vector<int> bounds{0};
    bounds.insert(bounds.end(), cuts.begin(), cuts.end());
    bounds.push_back(k);

    const double p_answer = answer_token_prob(cfg.signal_strength);
    std::bernoulli_distribution drop(cfg.subtitle_gap_prob);
    std::bernoulli_distribution planted(p_answer);
    std::uniform_int_distribution<int> n_tokens(kTokensPerSubtitleMin, kTokensPerSubtitleMax);
    for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
        const int b0 = bounds[i];
        const int b1 = bounds[i + 1];
        const bool dropped = drop(rng);
        const int count = n_tokens(rng);
        const bool inside = b0 >= a0 && b1 <= a1;
        Subtitle sub;
        sub.start_sec = b0;
        sub.end_sec = b1;
        for (int t = 0; t < count; ++t) {
            const bool from_answer = inside && planted(rng);
            sub.token_ids.push_back(from_answer ? vocab.answer(topic, rng) : vocab.filler(rng));
        }
        if (!dropped) s.subtitles.push_back(std::move(sub));
    }

    std::normal_distribution<double> noise(0.0, cfg.noise_std);
    s.video_features.resize(k, cfg.d_in);
    for (int t = 0; t < k; ++t)
        for (int c = 0; c < cfg.d_in; ++c) s.video_features(t, c) = noise(rng);
    for (int t = a0; t < a1; ++t) s.video_features.row(t) += cfg.signal_strength * topic_signal.row(topic);
    return s;
}

}  // namespace

double answer_token_prob(double signal_strength) {
    return 1.0 - std::exp(-2.0 * std::max(0.0, signal_strength));
}

std::vector<std::string> validate_gen_config(const GenConfig& cfg) {
    std::vector<std::string> v;
    if (cfg.num_samples < 0) v.push_back("num_samples must be >= 0");
    if (cfg.k < 1) v.push_back("k must be >= 1");
    if (cfg.d_in < 1) v.push_back("d_in must be >= 1");
    if (cfg.vocab_size < 4 * kNumTopics) v.push_back("vocab_size must be >= " + std::to_string(4 * kNumTopics));
    if (cfg.num_subtitles_range.first < 1 || cfg.num_subtitles_range.first > cfg.num_subtitles_range.second)
        v.push_back("num_subtitles_range must be a nonempty interval of positive counts");
    if (cfg.answer_len_range.first < 1 || cfg.answer_len_range.first > cfg.answer_len_range.second)
        v.push_back("answer_len_range must be a nonempty interval of positive lengths");
    if (cfg.k < cfg.answer_len_range.second) v.push_back("k must be >= the maximum answer length");
    if (!(cfg.subtitle_gap_prob >= 0.0 && cfg.subtitle_gap_prob <= 1.0))
        v.push_back("subtitle_gap_prob must lie in [0, 1]");
    if (!(cfg.signal_strength >= 0.0) || !std::isfinite(cfg.signal_strength))
        v.push_back("signal_strength must be finite and >= 0");
    if (!(cfg.noise_std >= 0.0) || !std::isfinite(cfg.noise_std)) v.push_back("noise_std must be finite and >= 0");
    return v;
}

std::vector<Sample> generate_corpus(const GenConfig& cfg) {
    const auto violations = validate_gen_config(cfg);
    if (!violations.empty()) {
        std::string msg = "invalid generator config: ";
        for (std::size_t i = 0; i < violations.size(); ++i) msg += (i ? "; " : "") + violations[i];
        throw ValidationError(msg);
    }
    const Vocab vocab(cfg.vocab_size);
    Mat topic_signal(kNumTopics, cfg.d_in);
    std::mt19937_64 master(splitmix64(cfg.seed));
    std::bernoulli_distribution sign(0.5);
    for (int c = 0; c < kNumTopics; ++c)
        for (int j = 0; j < cfg.d_in; ++j) topic_signal(c, j) = sign(master) ? 1.0 : -1.0;

    std::vector<Sample> corpus(static_cast<std::size_t>(cfg.num_samples));
#pragma omp parallel for schedule(static)
    for (int i = 0; i < cfg.num_samples; ++i) corpus[i] = generate_one(cfg, vocab, topic_signal, i);
    return corpus;
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_corpus(const std::vector<Sample>& corpus, double train_frac,
                                                                 std::uint64_t seed) {
    if (!(train_frac > 0.0 && train_frac < 1.0)) throw Error("train_frac must lie in (0, 1)");
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(splitmix64(seed));
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(corpus.size())));
    std::vector<std::size_t> train_idx(order.begin(), order.begin() + n_train);
    std::vector<std::size_t> test_idx(order.begin() + n_train, order.end());
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    std::pair<std::vector<Sample>, std::vector<Sample>> out;
    for (auto i : train_idx) out.first.push_back(corpus[i]);
    for (auto i : test_idx) out.second.push_back(corpus[i]);
    return out;
}

}  // namespace mutualsl
