// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>

#include "doctest.h"
#include "mutualsl/errors.hpp"
#include "mutualsl/synthgen.hpp"
#include "test_util.hpp"

using namespace mutualsl;
using namespace mutualsl::testing;

namespace {

bool mentions(const std::vector<std::string>& v, const std::string& needle) {
    for (const auto& s : v)
        if (s.find(needle) != std::string::npos) return true;
    return false;
}

}  // namespace

TEST_CASE("validate_sample accepts the full-duration answer") {
    auto s = three_subtitle_sample({0, 40});
    CHECK(validate_sample(s).empty());
}

TEST_CASE("validate_sample reports each violated invariant") {
    auto s = three_subtitle_sample();
    s.subtitles = {sub(0, 10, {1}), sub(5, 15, {2})};
    CHECK(mentions(validate_sample(s), "subtitles overlap"));

    s = three_subtitle_sample({40, 43});
    CHECK(mentions(validate_sample(s), "answer exceeds duration"));

    s = three_subtitle_sample();
    s.subtitles[1].end_sec = 5;
    CHECK(mentions(validate_sample(s), "subtitle 1"));

    s = three_subtitle_sample();
    s.video_features = Mat::Zero(39, 4);
    CHECK(mentions(validate_sample(s), "rows"));

    s = three_subtitle_sample();
    s.subtitles = {sub(10, 25, {1}), sub(0, 10, {2})};
    CHECK(mentions(validate_sample(s), "not sorted"));

    s = three_subtitle_sample();
    s.subtitles[2].end_sec = 41;
    CHECK(mentions(validate_sample(s), "outside"));
}

TEST_CASE("token_layout enumerates the concatenation") {
    Sample s = three_subtitle_sample();
    s.subtitles = {sub(0, 10, {7, 8}), sub(10, 25, {9, 10, 11, 12})};
    const auto L = token_layout(s);
    CHECK(L.n == 9);
    CHECK(L.question_len == 3);
    const std::vector<std::optional<int>> want = {std::nullopt, std::nullopt, std::nullopt, 0, 0, 1, 1, 1, 1};
    CHECK(L.token_to_subtitle == want);
    CHECK(L.subtitle_token_range == std::vector<std::pair<int, int>>{{3, 4}, {5, 8}});
    CHECK(L.subtitle_mask() == std::vector<std::uint8_t>{0, 0, 0, 1, 1, 1, 1, 1, 1});
    CHECK(L.tokens == std::vector<TokenId>{1, 2, 3, 7, 8, 9, 10, 11, 12});
}

TEST_CASE("token_layout edge cases") {
    Sample s = three_subtitle_sample();
    s.subtitles.clear();
    auto L = token_layout(s);
    CHECK(L.n == 3);
    CHECK(L.subtitle_token_range.empty());
    for (const auto& t : L.token_to_subtitle) CHECK_FALSE(t.has_value());

    s.question_tokens.clear();
    s.subtitles = {sub(0, 40, {5})};
    L = token_layout(s);
    CHECK(L.n == 1);
    CHECK(L.subtitle_token_range == std::vector<std::pair<int, int>>{{0, 0}});
}

TEST_CASE("token_layout is a bijection between subtitle tokens and ranges") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const Sample s = random_sample(rng, 1 + trial % 20, 2, 50, 6);
        const auto L = token_layout(s);
        int covered = 0;
        for (std::size_t i = 0; i < L.subtitle_token_range.size(); ++i) {
            const auto [a, b] = L.subtitle_token_range[i];
            CHECK(b - a + 1 == static_cast<int>(s.subtitles[i].token_ids.size()));
            for (int t = a; t <= b; ++t) CHECK(L.token_to_subtitle[t] == static_cast<int>(i));
            covered += b - a + 1;
        }
        CHECK(covered + L.question_len == L.n);
    }
}

TEST_CASE("single record round trip and error paths") {
    TempDir dir("msl-dm");
    const auto path = dir.path / "one.jsonl";
    const Sample s = three_subtitle_sample();
    save_corpus({s}, path);
    const auto loaded = load_corpus(path);
    REQUIRE(loaded.size() == 1);
    CHECK(loaded[0] == s);

    SUBCASE("subtitle with end before start names the subtitle") {
        Sample bad = s;
        bad.subtitles[2] = sub(30, 27, {1});
        std::ofstream(path) << sample_to_line(bad) << "\n";
        try {
            load_corpus(path);
            FAIL("expected a validation error");
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find("subtitle 2") != std::string::npos);
            CHECK(std::string(e.what()).find("line 1") != std::string::npos);
        }
    }
    SUBCASE("unknown key is a parse error with its line") {
        std::ofstream(path) << sample_to_line(s) << "\n{\"id\":\"x\",\"bogus\":1}\n";
        try {
            load_corpus(path);
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(e.line() == 2);
        }
    }
    SUBCASE("malformed json") {
        std::ofstream(path) << "{not json\n";
        CHECK_THROWS_AS(load_corpus(path), ParseError);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(load_corpus(dir.path / "nope.jsonl"), Error); }
}

TEST_CASE("generated corpus survives save and load field for field") {
    GenConfig g;
    g.num_samples = 500;
    g.seed = 3;
    const auto corpus = generate_corpus(g);
    TempDir dir("msl-dm");
    save_corpus(corpus, dir.path / "c.jsonl");
    const auto back = load_corpus(dir.path / "c.jsonl");
    REQUIRE(back.size() == corpus.size());
    CHECK(back == corpus);
}
