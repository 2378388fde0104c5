// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>

#include "doctest.h"
#include "gradcheck.hpp"
#include "mutualsl/errors.hpp"
#include "mutualsl/network.hpp"
#include "test_util.hpp"

using namespace mutualsl;
using namespace mutualsl::testing;

namespace {

Manifest small_manifest(int d = 4, int d_in = 3, int vocab = 20, std::uint64_t seed = 1) {
    Manifest m;
    m.d = d;
    m.d_in = d_in;
    m.vocab_size = vocab;
    m.seed = seed;
    return m;
}

// Random linear functional of all four logit vectors; masked text positions are constant and skipped.
struct LogitProbe {
    Vec rvs, rve, rts, rte;
    LogitProbe(std::mt19937_64& rng, int k, int n) {
        std::normal_distribution<double> nd;
        auto fill = [&](Vec& v, int len) {
            v.resize(len);
            for (int i = 0; i < len; ++i) v[i] = nd(rng);
        };
        fill(rvs, k), fill(rve, k), fill(rts, n), fill(rte, n);
    }
    double operator()(const SpanLogits& l) const {
        double s = rvs.dot(l.v_start) + rve.dot(l.v_end);
        if (l.has_text)
            for (Eigen::Index i = 0; i < l.t_start.size(); ++i)
                if (l.t_mask[i]) s += rts[i] * l.t_start[i] + rte[i] * l.t_end[i];
        return s;
    }
    LogitGrads grads() const { return {rvs, rve, rts, rte}; }
};

}  // namespace

TEST_CASE("parameter layout and init") {
    const auto m = small_manifest();
    const auto p = init_params(m);
    CHECK(p.values.values().size() == p.values.layout().total());
    CHECK(init_params(m).values == p.values);
    CHECK_FALSE(init_params(small_manifest(4, 3, 20, 2)).values == p.values);
    const auto b = p.values.mat(ParamId::lstm_start_b);
    CHECK(b.block(0, 0, 1, 4).isZero());
    CHECK(b.block(0, 4, 1, 4).isOnes());
    CHECK(p.values.mat(ParamId::video_b).isZero());
    const double bound = 1.0 / std::sqrt(8.0);  // fan-in 2d * kernel
    CHECK(p.values.mat(ParamId::conv_w).cwiseAbs().maxCoeff() <= bound);
    for (const auto& s : p.values.layout().specs()) {
        if (s.name.rfind("lstm", 0) == 0 || s.name.rfind("head.visual", 0) == 0) CHECK(s.group == ParamGroup::visual);
        if (s.name.rfind("ffn_p", 0) == 0 || s.name.rfind("head.textual", 0) == 0)
            CHECK(s.group == ParamGroup::textual);
    }
    Manifest even = m;
    even.conv_kernel = 2;
    CHECK_THROWS_AS(init_params(even), ShapeError);
}

TEST_CASE("encoders") {
    std::mt19937_64 rng(1);
    const auto p = init_params(small_manifest());
    CHECK(embed_video(Mat::Zero(5, 3), p).isZero());  // zero input, zero bias
    CHECK(embed_video(random_mat(rng, 7, 3), p).rows() == 7);
    CHECK_THROWS_AS(embed_video(Mat::Zero(5, 2), p), ShapeError);
    const std::vector<TokenId> ids{3, 3, 9};
    const Mat E = embed_text(ids, p);
    CHECK(E.row(0) == E.row(1));
    CHECK(embed_text(std::vector<TokenId>{4}, p).rows() == 1);
    CHECK_THROWS_AS(embed_text(std::vector<TokenId>{20}, p), ShapeError);
    CHECK(encode_text(E, p).rows() == 3);
}

TEST_CASE("context-query attention special cases") {
    std::mt19937_64 rng(2);
    auto p = init_params(small_manifest());
    {
        const Mat V = random_mat(rng, 1, 4), T = random_mat(rng, 1, 4);
        const auto o = cqa_fuse(V, T, p);
        CHECK(o.G_r.isOnes());
        CHECK(o.D.isApprox(T));
    }
    {
        p.values.mat(ParamId::cqa_w).setZero();
        const Mat V = random_mat(rng, 5, 4), T = random_mat(rng, 3, 4);
        const auto o = cqa_fuse(V, T, p);
        const Eigen::RowVectorXd mean = T.colwise().mean();
        for (Eigen::Index r = 0; r < 5; ++r) CHECK(o.D.row(r).isApprox(mean, 1e-12));
    }
    p = init_params(small_manifest());
    for (int k : {1, 2, 5})
        for (int n : {1, 2, 5}) {
            const auto o = cqa_fuse(random_mat(rng, k, 4), random_mat(rng, n, 4), p);
            CHECK(o.D.rows() == k);
            CHECK(o.F.rows() == k);
            CHECK(o.D.cols() == 4);
            CHECK(o.F.cols() == 4);
        }
    const auto empty = cqa_fuse(random_mat(rng, 3, 4), Mat(0, 4), p);
    CHECK(empty.D.isZero());
    CHECK(empty.F.isZero());
}

TEST_CASE("context-query concatenation is a row-wise map") {
    std::mt19937_64 rng(3);
    auto p = init_params(small_manifest());
    const Mat V = random_mat(rng, 4, 4), D = random_mat(rng, 4, 4), F = random_mat(rng, 4, 4);
    const Mat out = context_query_concat(V, D, F, p);
    CHECK(out.rows() == 4);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(4);
    perm.indices() << 2, 0, 3, 1;
    const Mat permuted = context_query_concat(perm * V, perm * D, perm * F, p);
    CHECK(permuted.isApprox(perm * out));
    p.values.mat(ParamId::ffn_c_w).setZero();
    p.values.mat(ParamId::ffn_c_b).setConstant(0.5);
    CHECK((context_query_concat(V, D, F, p).array() == 0.5).all());
}

TEST_CASE("video-text convolution with a single token") {
    std::mt19937_64 rng(4);
    const auto p = init_params(small_manifest());
    const Mat Vp = random_mat(rng, 6, 4), T = random_mat(rng, 1, 4);
    VideoTextConvCache cache;
    const Mat out = video_text_conv(Vp, T, Mat::Ones(6, 1), p, &cache);
    CHECK(out.rows() == 6);
    CHECK(out.cols() == 4);
    for (Eigen::Index r = 0; r < 6; ++r) CHECK(cache.A.row(r).isApprox(T.row(0)));
}

TEST_CASE("text projection broadcast") {
    std::mt19937_64 rng(5);
    const auto p = init_params(small_manifest());
    const Mat T = random_mat(rng, 3, 4);
    const auto zero = text_projection_broadcast(T, Mat::Zero(5, 4), p);
    CHECK(zero.T_bar == zero.T_prime);
    const Mat Vdp = random_mat(rng, 1, 4);
    const auto one = text_projection_broadcast(T, Vdp, p);
    CHECK(one.V_bar.transpose().isApprox(Vdp.row(0)));
    const auto many = text_projection_broadcast(T, random_mat(rng, 5, 4), p);
    for (Eigen::Index r = 0; r < 3; ++r)
        CHECK((many.T_bar.row(r) - many.T_prime.row(r)).isApprox(many.V_bar.transpose(), 1e-12));
}

TEST_CASE("visual predictor is causal") {
    std::mt19937_64 rng(6);
    const auto p = init_params(small_manifest());
    const Mat X = random_mat(rng, 7, 4);
    const auto [s0, e0] = visual_predict(X, p);
    CHECK(s0.size() == 7);
    for (int t = 0; t < 7; ++t) {
        Mat Xp = X;
        Xp.bottomRows(6 - t) += random_mat(rng, 6 - t, 4);
        const auto [s1, e1] = visual_predict(Xp, p);
        CHECK(s1.head(t + 1) == s0.head(t + 1));
        CHECK(e1.head(t + 1) == e0.head(t + 1));
    }
}

TEST_CASE("textual predictor masking") {
    std::mt19937_64 rng(7);
    const auto p = init_params(small_manifest());
    const Mat Tb = random_mat(rng, 5, 4);
    const std::vector<std::uint8_t> one{0, 0, 1, 0, 0};
    const auto [s, e] = textual_predict(Tb, one, p);
    CHECK(s.size() == 5);
    Eigen::Index arg_s, arg_e;
    s.maxCoeff(&arg_s);
    e.maxCoeff(&arg_e);
    CHECK(arg_s == 2);
    CHECK(arg_e == 2);
    CHECK(s[0] == kMaskedLogit);
    CHECK_THROWS_AS(textual_predict(Tb, std::vector<std::uint8_t>(5, 0), p), NoTextTarget);
    CHECK_THROWS_AS(textual_predict(Tb, std::vector<std::uint8_t>(4, 1), p), ShapeError);
}

TEST_CASE("fusion state shapes over small sizes") {
    for (int d : {2, 4})
        for (int k : {1, 2, 3, 7})
            for (int n_sub : {1, 2, 3, 7}) {
                std::mt19937_64 rng(100 * d + 10 * k + n_sub);
                const auto p = init_params(small_manifest(d, 3, 20, 1));
                // one question token plus subtitles holding n_sub - 1 tokens (one subtitle at least)
                const Sample s = sized_sample(rng, k, 3, 1, {std::max(1, n_sub - 1)}, 20);
                const auto fr = forward(s, p);
                const auto& f = fr.fusion;
                const Eigen::Index n = fr.tokens.size();
                CHECK(f.V.rows() == k);
                CHECK(f.T.rows() == n);
                CHECK(f.G.rows() == k);
                CHECK(f.G.cols() == n);
                CHECK(f.D.rows() == k);
                CHECK(f.F.rows() == k);
                CHECK(f.V_prime.cols() == d);
                CHECK(f.V_dprime.rows() == k);
                CHECK(f.T_prime.rows() == n);
                CHECK(f.V_bar.size() == d);
                CHECK(f.T_bar.rows() == n);
                CHECK(fr.logits.v_start.size() == k);
                CHECK(fr.logits.t_end.size() == n);
                for (Eigen::Index r = 0; r < k; ++r) CHECK(f.G_r.row(r).sum() == doctest::Approx(1.0));
                for (Eigen::Index c = 0; c < n; ++c) CHECK(f.G_c.col(c).sum() == doctest::Approx(1.0));
            }
}

TEST_CASE("forward is deterministic and handles missing subtitles") {
    std::mt19937_64 rng(8);
    const auto p = init_params(small_manifest());
    Sample s = sized_sample(rng, 6, 3, 2, {3, 3}, 20);
    const auto a = forward(s, p);
    const auto b = forward(s, p);
    CHECK(a.logits.v_start == b.logits.v_start);
    CHECK(a.logits.t_end == b.logits.t_end);
    s.subtitles.clear();
    const auto c = forward(s, p);
    CHECK_FALSE(c.logits.has_text);
    CHECK(c.logits.v_start.size() == 6);
    s.question_tokens.clear();
    const auto d = forward(s, p);
    CHECK(d.fusion.T.rows() == 0);
    CHECK(d.logits.v_end.allFinite());
}

TEST_CASE("end-to-end gradients of a logit probe match finite differences") {
    for (int kernel : {1, 3}) {
        CAPTURE(kernel);
        std::mt19937_64 rng(9 + kernel);
        Manifest m = small_manifest(4, 3, 12, 5);
        m.conv_kernel = kernel;
        auto p = init_params(m);
        const Sample s = sized_sample(rng, 6, 3, 2, {3, 3}, 12);
        const auto layout = token_layout(s);
        const LogitProbe probe(rng, 6, layout.n);
        ParamVector g = p.values.zeros_like();
        backward(forward(s, layout, p), probe.grads(), p, g);
        const auto errs = group_gradient_errors(p, g, [&] { return probe(forward(s, layout, p).logits); });
        for (const auto& [group, e] : errs) {
            CAPTURE(to_string(group));
            CAPTURE(e.analytic);
            CAPTURE(e.numeric);
            CHECK(e.max_rel < kFdRelTol);
        }
    }
}

TEST_CASE("checkpoint round trip and corruption") {
    TempDir dir("msl-net");
    const auto p = init_params(small_manifest());
    const auto path = dir.path / "a.ckpt";
    save_checkpoint(p, path);
    const auto q = load_checkpoint(path);
    CHECK(q.manifest == p.manifest);
    CHECK(q.values == p.values);
    CHECK(load_checkpoint(path, p.manifest).values == p.values);
    CHECK_THROWS_AS(load_checkpoint(path, small_manifest(8)), ManifestMismatch);

    // Flip one byte of the parameter payload.
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekg(-20, std::ios::end);
        char c;
        f.get(c);
        f.seekp(-20, std::ios::end);
        f.put(static_cast<char>(c ^ 0x5a));
    }
    try {
        load_checkpoint(path);
        FAIL("expected a manifest mismatch");
    } catch (const ManifestMismatch& e) {
        CHECK(std::string(e.what()).find("manifest mismatch") != std::string::npos);
    }
    std::ofstream(dir.path / "junk.ckpt") << "not a checkpoint";
    CHECK_THROWS_AS(load_checkpoint(dir.path / "junk.ckpt"), ManifestMismatch);
    save_checkpoint(p, path);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 100);
    CHECK_THROWS_AS(load_checkpoint(path), ManifestMismatch);
}
