// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#include "mutualsl/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "json.hpp"
#include "mutualsl/errors.hpp"

namespace mutualsl {

using layers::CMatRef;
using layers::MatRef;

ParamLayout::ParamLayout(const Manifest& m) {
    const Eigen::Index d = m.d;
    const auto G = ParamGroup::shared;
    const auto Vis = ParamGroup::visual;
    const auto Txt = ParamGroup::textual;
    auto set = [&](ParamId id, const char* name, ParamGroup g, Eigen::Index r, Eigen::Index c) {
        specs_[static_cast<int>(id)] = ParamSpec{id, name, g, r, c, 0};
    };
    set(ParamId::video_w, "video.w", G, d, m.d_in);
    set(ParamId::video_b, "video.b", G, 1, d);
    set(ParamId::embedding, "text.embedding", G, m.vocab_size, d);
    set(ParamId::text_ctx_w, "text.context.w", G, d, kTextContextKernel * d);
    set(ParamId::text_ctx_b, "text.context.b", G, 1, d);
    set(ParamId::cqa_w, "cqa.w", G, 1, 3 * d);
    set(ParamId::ffn_c_w, "ffn_c.w", G, d, 4 * d);
    set(ParamId::ffn_c_b, "ffn_c.b", G, 1, d);
    set(ParamId::attn_q, "attention.q", G, d, d);
    set(ParamId::attn_k, "attention.k", G, d, d);
    set(ParamId::conv_w, "conv.w", G, d, m.conv_kernel * 2 * d);
    set(ParamId::conv_b, "conv.b", G, 1, d);
    set(ParamId::ffn_p_w, "ffn_p.w", Txt, d, d);
    set(ParamId::ffn_p_b, "ffn_p.b", Txt, 1, d);
    set(ParamId::lstm_start_wx, "lstm_start.wx", Vis, 4 * d, d);
    set(ParamId::lstm_start_wh, "lstm_start.wh", Vis, 4 * d, d);
    set(ParamId::lstm_start_b, "lstm_start.b", Vis, 1, 4 * d);
    set(ParamId::lstm_end_wx, "lstm_end.wx", Vis, 4 * d, d);
    set(ParamId::lstm_end_wh, "lstm_end.wh", Vis, 4 * d, d);
    set(ParamId::lstm_end_b, "lstm_end.b", Vis, 1, 4 * d);
    set(ParamId::head_v_start_w, "head.visual_start.w", Vis, 1, d);
    set(ParamId::head_v_start_b, "head.visual_start.b", Vis, 1, 1);
    set(ParamId::head_v_end_w, "head.visual_end.w", Vis, 1, d);
    set(ParamId::head_v_end_b, "head.visual_end.b", Vis, 1, 1);
    set(ParamId::head_t_start_w, "head.textual_start.w", Txt, 1, d);
    set(ParamId::head_t_start_b, "head.textual_start.b", Txt, 1, 1);
    set(ParamId::head_t_end_w, "head.textual_end.w", Txt, 1, d);
    set(ParamId::head_t_end_b, "head.textual_end.b", Txt, 1, 1);
    std::size_t offset = 0;
    for (auto& s : specs_) {
        s.offset = offset;
        offset += s.size();
    }
    total_ = offset;
}

std::string to_string(ParamGroup g) {
    switch (g) {
        case ParamGroup::shared: return "shared";
        case ParamGroup::visual: return "visual";
        case ParamGroup::textual: return "textual";
    }
    return "?";
}

ModelParams init_params(const Manifest& m) {
    if (m.d < 1 || m.d_in < 1 || m.vocab_size < 1 || m.conv_kernel < 1 || m.conv_kernel % 2 == 0)
        throw ShapeError("invalid manifest: dimensions must be positive and conv_kernel odd");
    ModelParams p{m, ParamVector(std::make_shared<const ParamLayout>(m))};
    std::mt19937_64 rng(m.seed);
    for (const auto& spec : p.values.layout().specs()) {
        auto w = p.values.slice(spec.id);
        const bool is_bias = spec.name.ends_with(".b");
        if (is_bias) continue;
        const double bound = spec.id == ParamId::embedding ? 1.0 : 1.0 / std::sqrt(static_cast<double>(spec.cols));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (double& x : w) x = u(rng);
    }
    // Forget-gate bias starts at 1.
    for (ParamId id : {ParamId::lstm_start_b, ParamId::lstm_end_b})
        p.values.mat(id).block(0, m.d, 1, m.d).setOnes();
    return p;
}

// ---------------------------------------------------------------------------

Mat embed_video(const Mat& raw, const ModelParams& p, VideoEmbedCache* cache) {
    if (raw.cols() != p.manifest.d_in)
        throw ShapeError("embed_video: expected " + std::to_string(p.manifest.d_in) + " input columns, got " +
                         std::to_string(raw.cols()));
    Mat pre = layers::linear(raw, p.values.mat(ParamId::video_w), p.values.mat(ParamId::video_b));
    Mat V = layers::relu(pre);
    if (cache) {
        cache->raw = raw;
        cache->pre = std::move(pre);
    }
    return V;
}

void embed_video_backward(const VideoEmbedCache& cache, const Mat& dV, const ModelParams& p, ParamVector& grads) {
    const Mat dpre = layers::relu_backward(cache.pre, dV);
    grads.mat(ParamId::video_w).noalias() += dpre.transpose() * cache.raw;
    grads.mat(ParamId::video_b).row(0) += dpre.colwise().sum();
    (void)p;
}

Mat embed_text(std::span<const TokenId> ids, const ModelParams& p) {
    const auto E = p.values.mat(ParamId::embedding);
    Mat T(static_cast<Eigen::Index>(ids.size()), E.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= E.rows())
            throw ShapeError("embed_text: token id " + std::to_string(ids[i]) + " outside vocabulary of " +
                             std::to_string(E.rows()));
        T.row(static_cast<Eigen::Index>(i)) = E.row(ids[i]);
    }
    return T;
}

void embed_text_backward(std::span<const TokenId> ids, const Mat& dT, ParamVector& grads) {
    auto dE = grads.mat(ParamId::embedding);
    for (std::size_t i = 0; i < ids.size(); ++i) dE.row(ids[i]) += dT.row(static_cast<Eigen::Index>(i));
}

Mat encode_text(const Mat& embedded, const ModelParams& p, TextContextCache* cache) {
    layers::ConvCache conv;
    Mat pre = layers::conv1d(embedded, p.values.mat(ParamId::text_ctx_w), p.values.mat(ParamId::text_ctx_b),
                             kTextContextKernel, &conv);
    Mat T = embedded + layers::relu(pre);
    if (cache) {
        cache->conv = std::move(conv);
        cache->pre = std::move(pre);
    }
    return T;
}

Mat encode_text_backward(const TextContextCache& cache, const Mat& dT, const ModelParams& p, ParamVector& grads) {
    const Mat dpre = layers::relu_backward(cache.pre, dT);
    Mat dE = dT;
    dE += layers::conv1d_backward(cache.conv, p.values.mat(ParamId::text_ctx_w), dpre, kTextContextKernel, dT.cols(),
                                  grads.mat(ParamId::text_ctx_w), grads.mat(ParamId::text_ctx_b));
    return dE;
}

// ---------------------------------------------------------------------------

CqaOutput cqa_fuse(const Mat& V, const Mat& T, const ModelParams& p) {
    const Eigen::Index k = V.rows();
    const Eigen::Index n = T.rows();
    const Eigen::Index d = V.cols();
    if (T.cols() != d) throw ShapeError("cqa_fuse: V and T widths differ");
    CqaOutput o;
    if (n == 0) {
        o.G = o.G_r = o.G_c = Mat(k, 0);
        o.D = o.F = Mat::Zero(k, d);
        o.P = Mat(0, d);
        return o;
    }
    const auto w = p.values.mat(ParamId::cqa_w);
    const Vec w1 = w.block(0, 0, 1, d).transpose();
    const Vec w2 = w.block(0, d, 1, d).transpose();
    const Eigen::RowVectorXd w3 = w.block(0, 2 * d, 1, d);
    const Vec sv = V * w1;
    const Vec st = T * w2;
    o.G = (V.array().rowwise() * w3.array()).matrix() * T.transpose();
    o.G.colwise() += sv;
    o.G.rowwise() += st.transpose();
    o.G_r = layers::softmax_rows(o.G);
    o.G_c = layers::softmax_cols(o.G);
    o.D = o.G_r * T;
    o.P = o.G_r.transpose() * V;
    o.F = o.G_c * o.P;
    return o;
}

std::pair<Mat, Mat> cqa_fuse_backward(const Mat& V, const Mat& T, const CqaOutput& o, const Mat& dD, const Mat& dF,
                                      const Mat& dG_r_extra, const ModelParams& p, ParamVector& grads) {
    const Eigen::Index n = T.rows();
    const Eigen::Index d = V.cols();
    if (n == 0) return {Mat::Zero(V.rows(), d), Mat(0, d)};
    const auto w = p.values.mat(ParamId::cqa_w);
    const Eigen::RowVectorXd w1 = w.block(0, 0, 1, d);
    const Eigen::RowVectorXd w2 = w.block(0, d, 1, d);
    const Eigen::RowVectorXd w3 = w.block(0, 2 * d, 1, d);

    const Mat dG_c = dF * o.P.transpose();
    const Mat dP = o.G_c.transpose() * dF;
    Mat dG_r = dD * T.transpose();
    dG_r.noalias() += V * dP.transpose();
    if (dG_r_extra.size() > 0) dG_r += dG_r_extra;
    Mat dT = o.G_r.transpose() * dD;
    Mat dV = o.G_r * dP;

    const Mat dG = layers::softmax_rows_backward(o.G_r, dG_r) + layers::softmax_cols_backward(o.G_c, dG_c);
    const Vec rs = dG.rowwise().sum();
    const Eigen::RowVectorXd cs = dG.colwise().sum();
    const Mat dGT = dG * T;
    const Mat dGtV = dG.transpose() * V;
    auto dw = grads.mat(ParamId::cqa_w);
    dw.block(0, 0, 1, d) += rs.transpose() * V;
    dw.block(0, d, 1, d) += cs * T;
    dw.block(0, 2 * d, 1, d) += V.cwiseProduct(dGT).colwise().sum();
    dV.noalias() += rs * w1;
    dV += (dGT.array().rowwise() * w3.array()).matrix();
    dT.noalias() += cs.transpose() * w2;
    dT += (dGtV.array().rowwise() * w3.array()).matrix();
    return {std::move(dV), std::move(dT)};
}

// ---------------------------------------------------------------------------

Mat context_query_concat(const Mat& V, const Mat& D, const Mat& F, const ModelParams& p, ConcatCache* cache) {
    const Eigen::Index k = V.rows();
    const Eigen::Index d = V.cols();
    if (D.rows() != k || F.rows() != k || D.cols() != d || F.cols() != d)
        throw ShapeError("context_query_concat: V, D, F must share shape");
    Mat X(k, 4 * d);
    X << V, D, V.cwiseProduct(D), V.cwiseProduct(F);
    Mat pre = layers::linear(X, p.values.mat(ParamId::ffn_c_w), p.values.mat(ParamId::ffn_c_b));
    Mat out = layers::relu(pre);
    if (cache) {
        cache->X = std::move(X);
        cache->pre = std::move(pre);
    }
    return out;
}

std::tuple<Mat, Mat, Mat> context_query_concat_backward(const Mat& V, const Mat& D, const Mat& F,
                                                        const ConcatCache& cache, const Mat& dVp,
                                                        const ModelParams& p, ParamVector& grads) {
    const Eigen::Index d = V.cols();
    const Mat dpre = layers::relu_backward(cache.pre, dVp);
    const Mat dX = layers::linear_backward(cache.X, p.values.mat(ParamId::ffn_c_w), dpre,
                                           grads.mat(ParamId::ffn_c_w), grads.mat(ParamId::ffn_c_b));
    const auto dX0 = dX.middleCols(0, d);
    const auto dX1 = dX.middleCols(d, d);
    const auto dX2 = dX.middleCols(2 * d, d);
    const auto dX3 = dX.middleCols(3 * d, d);
    Mat dV = dX0 + dX2.cwiseProduct(D) + dX3.cwiseProduct(F);
    Mat dD = dX1 + dX2.cwiseProduct(V);
    Mat dF = dX3.cwiseProduct(V);
    return {std::move(dV), std::move(dD), std::move(dF)};
}

// ---------------------------------------------------------------------------

Mat video_text_conv(const Mat& V_prime, const Mat& T, const Mat& G_r, const ModelParams& p,
                    VideoTextConvCache* cache) {
    const Eigen::Index k = V_prime.rows();
    const Eigen::Index d = V_prime.cols();
    const Eigen::Index n = T.rows();
    if (T.cols() != d || G_r.rows() != k || G_r.cols() != n) throw ShapeError("video_text_conv: shape mismatch");
    VideoTextConvCache c;
    if (n > 0) {
        c.Q = V_prime * p.values.mat(ParamId::attn_q).transpose();
        c.K = T * p.values.mat(ParamId::attn_k).transpose();
        c.S = (c.Q * c.K.transpose()) / std::sqrt(static_cast<double>(d));
        c.Aw = layers::softmax_rows(c.S);
        c.A = c.Aw * T;
        c.GrT = G_r * T;
    } else {
        c.A = Mat::Zero(k, d);
        c.GrT = Mat::Zero(k, d);
    }
    Mat X(k, 2 * d);
    X << c.A, c.GrT;
    c.pre = layers::conv1d(X, p.values.mat(ParamId::conv_w), p.values.mat(ParamId::conv_b), p.manifest.conv_kernel,
                           &c.conv);
    Mat out = layers::relu(c.pre);
    if (cache) *cache = std::move(c);
    return out;
}

std::tuple<Mat, Mat, Mat> video_text_conv_backward(const Mat& V_prime, const Mat& T, const Mat& G_r,
                                                   const VideoTextConvCache& c, const Mat& dVdp,
                                                   const ModelParams& p, ParamVector& grads) {
    const Eigen::Index d = V_prime.cols();
    const Eigen::Index n = T.rows();
    const Mat dpre = layers::relu_backward(c.pre, dVdp);
    const Mat dX = layers::conv1d_backward(c.conv, p.values.mat(ParamId::conv_w), dpre, p.manifest.conv_kernel,
                                           2 * d, grads.mat(ParamId::conv_w), grads.mat(ParamId::conv_b));
    if (n == 0) return {Mat::Zero(V_prime.rows(), d), Mat(0, d), Mat(V_prime.rows(), 0)};
    const Mat dA = dX.leftCols(d);
    const Mat dGrT = dX.rightCols(d);

    Mat dG_r = dGrT * T.transpose();
    Mat dT = G_r.transpose() * dGrT;
    const Mat dAw = dA * T.transpose();
    dT.noalias() += c.Aw.transpose() * dA;
    const Mat dS = layers::softmax_rows_backward(c.Aw, dAw) / std::sqrt(static_cast<double>(d));
    const Mat dQ = dS * c.K;
    const Mat dK = dS.transpose() * c.Q;
    grads.mat(ParamId::attn_q).noalias() += dQ.transpose() * V_prime;
    grads.mat(ParamId::attn_k).noalias() += dK.transpose() * T;
    Mat dVp = dQ * p.values.mat(ParamId::attn_q);
    dT.noalias() += dK * p.values.mat(ParamId::attn_k);
    return {std::move(dVp), std::move(dT), std::move(dG_r)};
}

// ---------------------------------------------------------------------------

TextProjection text_projection_broadcast(const Mat& T, const Mat& V_dprime, const ModelParams& p) {
    if (T.cols() != V_dprime.cols()) throw ShapeError("text_projection_broadcast: widths differ");
    TextProjection o;
    o.pre = layers::linear(T, p.values.mat(ParamId::ffn_p_w), p.values.mat(ParamId::ffn_p_b));
    o.T_prime = layers::relu(o.pre);
    o.V_bar = V_dprime.colwise().mean().transpose();
    o.T_bar = o.T_prime;
    o.T_bar.rowwise() += o.V_bar.transpose();
    return o;
}

std::pair<Mat, Mat> text_projection_broadcast_backward(const Mat& T, const Mat& V_dprime, const TextProjection& o,
                                                       const Mat& dT_bar, const ModelParams& p, ParamVector& grads) {
    const Eigen::RowVectorXd dV_bar = dT_bar.colwise().sum();
    Mat dVdp(V_dprime.rows(), V_dprime.cols());
    dVdp.rowwise() = dV_bar / static_cast<double>(V_dprime.rows());
    const Mat dpre = layers::relu_backward(o.pre, dT_bar);
    Mat dT = layers::linear_backward(T, p.values.mat(ParamId::ffn_p_w), dpre, grads.mat(ParamId::ffn_p_w),
                                     grads.mat(ParamId::ffn_p_b));
    return {std::move(dT), std::move(dVdp)};
}

// ---------------------------------------------------------------------------

namespace {

Vec score_head(const Mat& X, const CMatRef& w, const CMatRef& b) {
    Vec s = X * w.row(0).transpose();
    s.array() += b(0, 0);
    return s;
}

// Returns d X for a scalar head; accumulates head gradients.
Mat score_head_backward(const Mat& X, const CMatRef& w, const Vec& ds, MatRef dw, MatRef db) {
    dw.row(0) += ds.transpose() * X;
    db(0, 0) += ds.sum();
    return ds * w.row(0);
}

}  // namespace

std::pair<Vec, Vec> visual_predict(const Mat& V_dprime, const ModelParams& p, VisualCache* cache) {
    VisualCache c;
    const Mat Hs = layers::lstm(V_dprime, p.values.mat(ParamId::lstm_start_wx), p.values.mat(ParamId::lstm_start_wh),
                                p.values.mat(ParamId::lstm_start_b), &c.start);
    const Mat He = layers::lstm(V_dprime, p.values.mat(ParamId::lstm_end_wx), p.values.mat(ParamId::lstm_end_wh),
                                p.values.mat(ParamId::lstm_end_b), &c.end);
    Vec vs = score_head(Hs, p.values.mat(ParamId::head_v_start_w), p.values.mat(ParamId::head_v_start_b));
    Vec ve = score_head(He, p.values.mat(ParamId::head_v_end_w), p.values.mat(ParamId::head_v_end_b));
    if (cache) *cache = std::move(c);
    return {std::move(vs), std::move(ve)};
}

Mat visual_predict_backward(const VisualCache& c, const Vec& d_start, const Vec& d_end, const ModelParams& p,
                            ParamVector& grads) {
    const Mat dHs = score_head_backward(c.start.h, p.values.mat(ParamId::head_v_start_w), d_start,
                                        grads.mat(ParamId::head_v_start_w), grads.mat(ParamId::head_v_start_b));
    const Mat dHe = score_head_backward(c.end.h, p.values.mat(ParamId::head_v_end_w), d_end,
                                        grads.mat(ParamId::head_v_end_w), grads.mat(ParamId::head_v_end_b));
    Mat dX = layers::lstm_backward(c.start, p.values.mat(ParamId::lstm_start_wx), p.values.mat(ParamId::lstm_start_wh),
                                   dHs, grads.mat(ParamId::lstm_start_wx), grads.mat(ParamId::lstm_start_wh),
                                   grads.mat(ParamId::lstm_start_b));
    dX += layers::lstm_backward(c.end, p.values.mat(ParamId::lstm_end_wx), p.values.mat(ParamId::lstm_end_wh), dHe,
                                grads.mat(ParamId::lstm_end_wx), grads.mat(ParamId::lstm_end_wh),
                                grads.mat(ParamId::lstm_end_b));
    return dX;
}

std::pair<Vec, Vec> textual_predict(const Mat& T_bar, std::span<const std::uint8_t> mask, const ModelParams& p) {
    if (static_cast<Eigen::Index>(mask.size()) != T_bar.rows()) throw ShapeError("textual_predict: mask length != n");
    if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; })) throw NoTextTarget();
    Vec ts = score_head(T_bar, p.values.mat(ParamId::head_t_start_w), p.values.mat(ParamId::head_t_start_b));
    Vec te = score_head(T_bar, p.values.mat(ParamId::head_t_end_w), p.values.mat(ParamId::head_t_end_b));
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (!mask[i]) ts[i] = te[i] = kMaskedLogit;
    return {std::move(ts), std::move(te)};
}

Mat textual_predict_backward(const Mat& T_bar, std::span<const std::uint8_t> mask, const Vec& d_start,
                             const Vec& d_end, const ModelParams& p, ParamVector& grads) {
    Vec ds = d_start;
    Vec de = d_end;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (!mask[i]) ds[i] = de[i] = 0.0;
    Mat dT = score_head_backward(T_bar, p.values.mat(ParamId::head_t_start_w), ds,
                                 grads.mat(ParamId::head_t_start_w), grads.mat(ParamId::head_t_start_b));
    dT += score_head_backward(T_bar, p.values.mat(ParamId::head_t_end_w), de, grads.mat(ParamId::head_t_end_w),
                              grads.mat(ParamId::head_t_end_b));
    return dT;
}

// ---------------------------------------------------------------------------

ForwardResult forward(const Sample& s, const TokenLayout& layout, const ModelParams& p) {
    if (s.video_features.rows() < 1) throw ShapeError("forward: sample has no frames");
    ForwardResult r;
    r.tokens = layout.tokens;
    auto& f = r.fusion;
    f.V = embed_video(s.video_features, p, &r.video);
    r.embedded = embed_text(r.tokens, p);
    f.T = encode_text(r.embedded, p, &r.text_ctx);
    r.cqa = cqa_fuse(f.V, f.T, p);
    f.G = r.cqa.G;
    f.G_r = r.cqa.G_r;
    f.G_c = r.cqa.G_c;
    f.D = r.cqa.D;
    f.F = r.cqa.F;
    f.V_prime = context_query_concat(f.V, f.D, f.F, p, &r.concat);
    f.V_dprime = video_text_conv(f.V_prime, f.T, f.G_r, p, &r.vtc);
    r.proj = text_projection_broadcast(f.T, f.V_dprime, p);
    f.T_prime = r.proj.T_prime;
    f.V_bar = r.proj.V_bar;
    f.T_bar = r.proj.T_bar;

    auto& lg = r.logits;
    std::tie(lg.v_start, lg.v_end) = visual_predict(f.V_dprime, p, &r.visual);
    lg.t_mask = layout.subtitle_mask();
    lg.has_text = std::any_of(lg.t_mask.begin(), lg.t_mask.end(), [](std::uint8_t m) { return m != 0; });
    if (lg.has_text) std::tie(lg.t_start, lg.t_end) = textual_predict(f.T_bar, lg.t_mask, p);
    return r;
}

ForwardResult forward(const Sample& s, const ModelParams& p) { return forward(s, token_layout(s), p); }

void backward(const ForwardResult& r, const LogitGrads& g, const ModelParams& p, ParamVector& grads) {
    const auto& f = r.fusion;
    const Eigen::Index k = f.V.rows();
    const Eigen::Index d = f.V.cols();
    Mat dVdp = Mat::Zero(k, d);
    if (g.v_start.size() > 0 || g.v_end.size() > 0) {
        const Vec ds = g.v_start.size() > 0 ? g.v_start : Vec::Zero(k);
        const Vec de = g.v_end.size() > 0 ? g.v_end : Vec::Zero(k);
        dVdp = visual_predict_backward(r.visual, ds, de, p, grads);
    }
    Mat dT = Mat::Zero(f.T.rows(), d);
    if (r.logits.has_text && (g.t_start.size() > 0 || g.t_end.size() > 0)) {
        const Eigen::Index n = f.T.rows();
        const Vec ds = g.t_start.size() > 0 ? g.t_start : Vec::Zero(n);
        const Vec de = g.t_end.size() > 0 ? g.t_end : Vec::Zero(n);
        const Mat dTbar = textual_predict_backward(f.T_bar, r.logits.t_mask, ds, de, p, grads);
        auto [dT_proj, dVdp_proj] = text_projection_broadcast_backward(f.T, f.V_dprime, r.proj, dTbar, p, grads);
        dT += dT_proj;
        dVdp += dVdp_proj;
    }
    auto [dVp, dT_vtc, dG_r] = video_text_conv_backward(f.V_prime, f.T, f.G_r, r.vtc, dVdp, p, grads);
    dT += dT_vtc;
    auto [dV, dD, dF] = context_query_concat_backward(f.V, f.D, f.F, r.concat, dVp, p, grads);
    auto [dV_cqa, dT_cqa] = cqa_fuse_backward(f.V, f.T, r.cqa, dD, dF, dG_r, p, grads);
    dV += dV_cqa;
    dT += dT_cqa;
    const Mat dE = encode_text_backward(r.text_ctx, dT, p, grads);
    embed_text_backward(r.tokens, dE, grads);
    embed_video_backward(r.video, dV, p, grads);
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'M', 'S', 'L', 'C', 'K', 'P', 'T', '1'};

std::uint64_t fnv1a(const void* data, std::size_t len) {
    const auto* b = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

nlohmann::json manifest_json(const ModelParams& p) {
    nlohmann::json j;
    j["d"] = p.manifest.d;
    j["d_in"] = p.manifest.d_in;
    j["vocab_size"] = p.manifest.vocab_size;
    j["conv_kernel"] = p.manifest.conv_kernel;
    j["text_context_kernel"] = kTextContextKernel;
    j["seed"] = p.manifest.seed;
    auto arr = nlohmann::json::array();
    for (const auto& s : p.values.layout().specs()) arr.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}});
    j["params"] = std::move(arr);
    return j;
}

void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw ManifestMismatch("manifest mismatch: truncated checkpoint");
    return v;
}

}  // namespace

void save_checkpoint(const ModelParams& p, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write checkpoint '" + path.string() + "'");
    const std::string manifest = manifest_json(p).dump();
    os.write(kMagic, sizeof kMagic);
    write_u64(os, manifest.size());
    os.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    const auto vals = p.values.values();
    write_u64(os, vals.size());
    os.write(reinterpret_cast<const char*>(vals.data()), static_cast<std::streamsize>(vals.size_bytes()));
    write_u64(os, fnv1a(vals.data(), vals.size_bytes()));
    if (!os) throw Error("write failed for checkpoint '" + path.string() + "'");
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open checkpoint '" + path.string() + "'");
    char magic[sizeof kMagic];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw ManifestMismatch("manifest mismatch: not a checkpoint file");
    const auto mlen = read_u64(is);
    if (mlen > (1u << 24)) throw ManifestMismatch("manifest mismatch: implausible manifest length");
    std::string text(mlen, '\0');
    if (!is.read(text.data(), static_cast<std::streamsize>(mlen)))
        throw ManifestMismatch("manifest mismatch: truncated manifest");
    nlohmann::json j;
    Manifest m;
    try {
        j = nlohmann::json::parse(text);
        m.d = j.at("d").get<int>();
        m.d_in = j.at("d_in").get<int>();
        m.vocab_size = j.at("vocab_size").get<int>();
        m.conv_kernel = j.at("conv_kernel").get<int>();
        m.seed = j.at("seed").get<std::uint64_t>();
        if (j.at("text_context_kernel").get<int>() != kTextContextKernel)
            throw ManifestMismatch("manifest mismatch: text_context_kernel");
    } catch (const nlohmann::json::exception& e) {
        throw ManifestMismatch(std::string("manifest mismatch: unreadable manifest (") + e.what() + ")");
    }
    if (m.d < 1 || m.d > 4096 || m.d_in < 1 || m.d_in > 65536 || m.vocab_size < 1 || m.vocab_size > (1 << 22) ||
        m.conv_kernel < 1 || m.conv_kernel % 2 == 0 || m.conv_kernel > 99)
        throw ManifestMismatch("manifest mismatch: implausible dimensions");
    ModelParams p{m, ParamVector(std::make_shared<const ParamLayout>(m))};
    const auto& specs = p.values.layout().specs();
    const auto& listed = j.at("params");
    if (!listed.is_array() || listed.size() != specs.size())
        throw ManifestMismatch("manifest mismatch: parameter list differs");
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (listed[i].value("name", "") != specs[i].name || listed[i].value("rows", -1L) != specs[i].rows ||
            listed[i].value("cols", -1L) != specs[i].cols)
            throw ManifestMismatch("manifest mismatch: parameter '" + specs[i].name + "'");
    }
    const auto count = read_u64(is);
    auto vals = p.values.values();
    if (count != vals.size()) throw ManifestMismatch("manifest mismatch: parameter count");
    if (!is.read(reinterpret_cast<char*>(vals.data()), static_cast<std::streamsize>(vals.size_bytes())))
        throw ManifestMismatch("manifest mismatch: truncated parameters");
    if (read_u64(is) != fnv1a(vals.data(), vals.size_bytes()))
        throw ManifestMismatch("manifest mismatch: checksum failed, checkpoint is corrupted");
    return p;
}

ModelParams load_checkpoint(const std::filesystem::path& path, const Manifest& expected) {
    ModelParams p = load_checkpoint(path);
    auto check = [](const char* field, auto got, auto want) {
        if (got != want)
            throw ManifestMismatch(std::string("manifest mismatch: ") + field + " is " + std::to_string(got) +
                                   ", expected " + std::to_string(want));
    };
    check("d", p.manifest.d, expected.d);
    check("d_in", p.manifest.d_in, expected.d_in);
    check("vocab_size", p.manifest.vocab_size, expected.vocab_size);
    check("conv_kernel", p.manifest.conv_kernel, expected.conv_kernel);
    return p;
}

}  // namespace mutualsl
