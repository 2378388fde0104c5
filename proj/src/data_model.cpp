// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#include "mutualsl/data_model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mutualsl/errors.hpp"

namespace mutualsl {

using nlohmann::json;

std::vector<std::uint8_t> TokenLayout::subtitle_mask() const {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) mask[i] = token_to_subtitle[i].has_value() ? 1 : 0;
    return mask;
}

std::vector<std::string> validate_sample(const Sample& s) {
    std::vector<std::string> v;
    const double k = s.duration_k;
    if (s.duration_k < 1) v.push_back("duration_k must be >= 1");
    if (s.video_features.rows() != s.duration_k)
        v.push_back("video_features has " + std::to_string(s.video_features.rows()) +
                    " rows, expected duration_k = " + std::to_string(s.duration_k));
    if (s.video_features.cols() < 1) v.push_back("video_features has no columns");
    if (!s.video_features.allFinite()) v.push_back("video_features contains non-finite values");

    const auto& a = s.answer_frames;
    if (!std::isfinite(a.start) || !std::isfinite(a.end)) {
        v.push_back("answer is not finite");
    } else {
        if (a.start > a.end) v.push_back("answer start > end");
        if (a.start < 0.0) v.push_back("answer starts before 0");
        if (a.end > k) v.push_back("answer exceeds duration");
    }

    for (std::size_t i = 0; i < s.subtitles.size(); ++i) {
        const auto& sub = s.subtitles[i];
        const std::string tag = "subtitle " + std::to_string(i);
        if (!(sub.start_sec < sub.end_sec)) v.push_back(tag + ": end_sec must exceed start_sec");
        if (sub.start_sec < 0.0 || sub.end_sec > k) v.push_back(tag + ": outside [0, duration_k]");
        if (sub.token_ids.empty()) v.push_back(tag + ": token_ids is empty");
        if (i > 0) {
            const auto& prev = s.subtitles[i - 1];
            if (sub.start_sec < prev.start_sec) v.push_back(tag + ": subtitles not sorted by start");
            else if (sub.start_sec < prev.end_sec) v.push_back(tag + ": subtitles overlap");
        }
    }
    for (TokenId t : s.question_tokens)
        if (t < 0) v.push_back("question token id is negative");
    for (const auto& sub : s.subtitles)
        for (TokenId t : sub.token_ids)
            if (t < 0) {
                v.push_back("subtitle token id is negative");
                break;
            }
    return v;
}

TokenLayout token_layout(const Sample& s) {
    TokenLayout L;
    L.question_len = static_cast<int>(s.question_tokens.size());
    for (TokenId t : s.question_tokens) {
        L.tokens.push_back(t);
        L.token_to_subtitle.emplace_back(std::nullopt);
    }
    for (std::size_t i = 0; i < s.subtitles.size(); ++i) {
        const int first = static_cast<int>(L.tokens.size());
        for (TokenId t : s.subtitles[i].token_ids) {
            L.tokens.push_back(t);
            L.token_to_subtitle.emplace_back(static_cast<int>(i));
        }
        L.subtitle_token_range.emplace_back(first, static_cast<int>(L.tokens.size()) - 1);
    }
    L.n = static_cast<int>(L.tokens.size());
    return L;
}

std::string sample_to_line(const Sample& s) {
    json j;
    j["id"] = s.id;
    j["duration_k"] = s.duration_k;
    json rows = json::array();
    for (Eigen::Index r = 0; r < s.video_features.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < s.video_features.cols(); ++c) row.push_back(s.video_features(r, c));
        rows.push_back(std::move(row));
    }
    j["video_features"] = std::move(rows);
    json subs = json::array();
    for (const auto& sub : s.subtitles)
        subs.push_back({{"start_sec", sub.start_sec}, {"end_sec", sub.end_sec}, {"token_ids", sub.token_ids}});
    j["subtitles"] = std::move(subs);
    j["question_tokens"] = s.question_tokens;
    j["answer_frames"] = {{"start", s.answer_frames.start}, {"end", s.answer_frames.end}};
    return j.dump();
}

namespace {

const json& require(const json& j, const char* key, std::size_t line_no) {
    auto it = j.find(key);
    if (it == j.end()) throw ParseError(line_no, std::string("missing key '") + key + "'");
    return *it;
}

}  // namespace

Sample sample_from_line(const std::string& line, std::size_t line_no) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ParseError(line_no, e.what());
    }
    if (!j.is_object()) throw ParseError(line_no, "record is not an object");
    static const char* kKeys[] = {"id", "duration_k", "video_features", "subtitles", "question_tokens",
                                  "answer_frames"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : kKeys) known = known || it.key() == k;
        if (!known) throw ParseError(line_no, "unknown key '" + it.key() + "'");
    }

    Sample s;
    try {
        s.id = require(j, "id", line_no).get<std::string>();
        s.duration_k = require(j, "duration_k", line_no).get<int>();
        const auto& rows = require(j, "video_features", line_no);
        if (!rows.is_array()) throw ParseError(line_no, "video_features must be a list of rows");
        const Eigen::Index k = static_cast<Eigen::Index>(rows.size());
        const Eigen::Index d_in = k > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
        s.video_features.resize(k, d_in);
        for (Eigen::Index r = 0; r < k; ++r) {
            if (!rows[r].is_array() || static_cast<Eigen::Index>(rows[r].size()) != d_in)
                throw ParseError(line_no, "video_features row " + std::to_string(r) + " has wrong width");
            for (Eigen::Index c = 0; c < d_in; ++c) s.video_features(r, c) = rows[r][c].get<double>();
        }
        for (const auto& sub : require(j, "subtitles", line_no)) {
            Subtitle t;
            t.start_sec = require(sub, "start_sec", line_no).get<double>();
            t.end_sec = require(sub, "end_sec", line_no).get<double>();
            t.token_ids = require(sub, "token_ids", line_no).get<std::vector<TokenId>>();
            s.subtitles.push_back(std::move(t));
        }
        s.question_tokens = require(j, "question_tokens", line_no).get<std::vector<TokenId>>();
        const auto& ans = require(j, "answer_frames", line_no);
        s.answer_frames.start = require(ans, "start", line_no).get<double>();
        s.answer_frames.end = require(ans, "end", line_no).get<double>();
    } catch (const json::exception& e) {
        throw ParseError(line_no, e.what());
    }
    return s;
}

std::vector<Sample> load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open corpus '" + path.string() + "'");
    std::vector<Sample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Sample s = sample_from_line(line, line_no);
        const auto violations = validate_sample(s);
        if (!violations.empty()) {
            std::ostringstream msg;
            msg << "line " << line_no << ", sample '" << s.id << "': ";
            for (std::size_t i = 0; i < violations.size(); ++i) msg << (i ? "; " : "") << violations[i];
            throw ValidationError(msg.str());
        }
        out.push_back(std::move(s));
    }
    return out;
}

void save_corpus(const std::vector<Sample>& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write corpus '" + path.string() + "'");
    for (const auto& s : corpus) out << sample_to_line(s) << '\n';
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace mutualsl
