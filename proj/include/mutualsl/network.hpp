// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mutualsl/data_model.hpp"
#include "mutualsl/layers.hpp"

namespace mutualsl {

/// Architecture hyperparameters stored alongside every checkpoint.
struct Manifest {
    int d = 64;
    int d_in = 32;
    int vocab_size = 256;
    int conv_kernel = 1;
    std::uint64_t seed = 0;
    bool operator==(const Manifest&) const = default;
};

/// Kernel width of the contextual text encoder that stands in for a pretrained language model.
inline constexpr int kTextContextKernel = 3;

/// Which predictor a parameter feeds exclusively, or shared for encoders and fusion.
enum class ParamGroup { shared, visual, textual };

enum class ParamId : int {
    video_w,
    video_b,
    embedding,
    text_ctx_w,
    text_ctx_b,
    cqa_w,
    ffn_c_w,
    ffn_c_b,
    attn_q,
    attn_k,
    conv_w,
    conv_b,
    ffn_p_w,
    ffn_p_b,
    lstm_start_wx,
    lstm_start_wh,
    lstm_start_b,
    lstm_end_wx,
    lstm_end_wh,
    lstm_end_b,
    head_v_start_w,
    head_v_start_b,
    head_v_end_w,
    head_v_end_b,
    head_t_start_w,
    head_t_start_b,
    head_t_end_w,
    head_t_end_b,
};
inline constexpr int kNumParams = static_cast<int>(ParamId::head_t_end_b) + 1;

struct ParamSpec {
    ParamId id;
    std::string name;
    ParamGroup group;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::size_t offset = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
};

class ParamLayout {
public:
    explicit ParamLayout(const Manifest& m);
    const ParamSpec& spec(ParamId id) const { return specs_[static_cast<int>(id)]; }
    const std::array<ParamSpec, kNumParams>& specs() const { return specs_; }
    std::size_t total() const { return total_; }

private:
    std::array<ParamSpec, kNumParams> specs_;
    std::size_t total_ = 0;
};

/// Flat storage with named matrix views. Used for both parameters and gradients.
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(std::shared_ptr<const ParamLayout> layout)
        : layout_(std::move(layout)), data_(layout_->total(), 0.0) {}

    layers::MatRef mat(ParamId id) {
        const auto& s = layout_->spec(id);
        return {data_.data() + s.offset, s.rows, s.cols};
    }
    layers::CMatRef mat(ParamId id) const {
        const auto& s = layout_->spec(id);
        return {data_.data() + s.offset, s.rows, s.cols};
    }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    std::span<double> slice(ParamId id) {
        const auto& s = layout_->spec(id);
        return std::span<double>(data_).subspan(s.offset, s.size());
    }
    std::span<const double> slice(ParamId id) const {
        const auto& s = layout_->spec(id);
        return std::span<const double>(data_).subspan(s.offset, s.size());
    }
    const ParamLayout& layout() const { return *layout_; }
    const std::shared_ptr<const ParamLayout>& layout_ptr() const { return layout_; }
    ParamVector zeros_like() const { return ParamVector(layout_); }
    void set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }
    bool operator==(const ParamVector& o) const { return data_ == o.data_; }

private:
    std::shared_ptr<const ParamLayout> layout_;
    std::vector<double> data_;
};

struct ModelParams {
    Manifest manifest;
    ParamVector values;
};

/// Fan-in scaled uniform initialization from manifest.seed.
ModelParams init_params(const Manifest& m);

/// Intermediate tensors of the fusion pipeline.
struct FusionState {
    Mat V;        // k x d
    Mat T;        // n x d
    Mat G;        // k x n
    Mat G_r;      // softmax over the text axis
    Mat G_c;      // softmax over the video axis
    Mat D;        // G_r T
    Mat F;        // G_c G_r^T V
    Mat V_prime;  // k x d
    Mat V_dprime; // k x d
    Mat T_prime;  // n x d
    Vec V_bar;    // d
    Mat T_bar;    // n x d
};

inline constexpr double kMaskedLogit = -1e30;

struct SpanLogits {
    Vec v_start;
    Vec v_end;
    Vec t_start;
    Vec t_end;
    std::vector<std::uint8_t> t_mask;
    bool has_text = false;  // false: NO_TEXT_TARGET, t_* are empty
};

/// Upstream gradients w.r.t. the four logit vectors. Empty text vectors mean zero.
struct LogitGrads {
    Vec v_start;
    Vec v_end;
    Vec t_start;
    Vec t_end;
};

// ---- individual stages (each with an explicit backward) ----

struct VideoEmbedCache {
    Mat raw;
    Mat pre;
};
Mat embed_video(const Mat& raw, const ModelParams& p, VideoEmbedCache* cache = nullptr);
void embed_video_backward(const VideoEmbedCache& cache, const Mat& dV, const ModelParams& p, ParamVector& grads);

Mat embed_text(std::span<const TokenId> ids, const ModelParams& p);
void embed_text_backward(std::span<const TokenId> ids, const Mat& dT, ParamVector& grads);

/// Residual same-padded convolution over token positions: T = E + relu(conv(E)).
struct TextContextCache {
    layers::ConvCache conv;
    Mat pre;
};
Mat encode_text(const Mat& embedded, const ModelParams& p, TextContextCache* cache = nullptr);
Mat encode_text_backward(const TextContextCache& cache, const Mat& dT, const ModelParams& p, ParamVector& grads);

struct CqaOutput {
    Mat G, G_r, G_c, D, F;
    Mat P;  // G_r^T V, n x d
};
CqaOutput cqa_fuse(const Mat& V, const Mat& T, const ModelParams& p);
/// Returns (dV, dT). dG_r carries any extra gradient reaching G_r from later stages.
std::pair<Mat, Mat> cqa_fuse_backward(const Mat& V, const Mat& T, const CqaOutput& out, const Mat& dD, const Mat& dF,
                                      const Mat& dG_r, const ModelParams& p, ParamVector& grads);

struct ConcatCache {
    Mat X;  // k x 4d
    Mat pre;
};
Mat context_query_concat(const Mat& V, const Mat& D, const Mat& F, const ModelParams& p, ConcatCache* cache = nullptr);
/// Returns (dV, dD, dF).
std::tuple<Mat, Mat, Mat> context_query_concat_backward(const Mat& V, const Mat& D, const Mat& F,
                                                        const ConcatCache& cache, const Mat& dVp,
                                                        const ModelParams& p, ParamVector& grads);

struct VideoTextConvCache {
    Mat Q, K, S, Aw, A, GrT;
    layers::ConvCache conv;
    Mat pre;
};
Mat video_text_conv(const Mat& V_prime, const Mat& T, const Mat& G_r, const ModelParams& p,
                    VideoTextConvCache* cache = nullptr);
/// Returns (dV_prime, dT, dG_r).
std::tuple<Mat, Mat, Mat> video_text_conv_backward(const Mat& V_prime, const Mat& T, const Mat& G_r,
                                                   const VideoTextConvCache& cache, const Mat& dVdp,
                                                   const ModelParams& p, ParamVector& grads);

struct TextProjection {
    Mat T_prime;
    Vec V_bar;
    Mat T_bar;
    Mat pre;
};
TextProjection text_projection_broadcast(const Mat& T, const Mat& V_dprime, const ModelParams& p);
/// Returns (dT, dV_dprime).
std::pair<Mat, Mat> text_projection_broadcast_backward(const Mat& T, const Mat& V_dprime, const TextProjection& out,
                                                       const Mat& dT_bar, const ModelParams& p, ParamVector& grads);

struct VisualCache {
    layers::LstmCache start, end;
};
std::pair<Vec, Vec> visual_predict(const Mat& V_dprime, const ModelParams& p, VisualCache* cache = nullptr);
Mat visual_predict_backward(const VisualCache& cache, const Vec& d_start, const Vec& d_end, const ModelParams& p,
                            ParamVector& grads);

/// Throws NoTextTarget when the mask has no subtitle position.
std::pair<Vec, Vec> textual_predict(const Mat& T_bar, std::span<const std::uint8_t> mask, const ModelParams& p);
Mat textual_predict_backward(const Mat& T_bar, std::span<const std::uint8_t> mask, const Vec& d_start,
                             const Vec& d_end, const ModelParams& p, ParamVector& grads);

// ---- full pass ----

struct ForwardResult {
    FusionState fusion;
    SpanLogits logits;

    std::vector<TokenId> tokens;
    VideoEmbedCache video;
    Mat embedded;
    TextContextCache text_ctx;
    CqaOutput cqa;
    ConcatCache concat;
    VideoTextConvCache vtc;
    TextProjection proj;
    VisualCache visual;
};

ForwardResult forward(const Sample& s, const TokenLayout& layout, const ModelParams& p);
ForwardResult forward(const Sample& s, const ModelParams& p);

/// Accumulates parameter gradients of a scalar whose logit gradients are given.
void backward(const ForwardResult& fr, const LogitGrads& g, const ModelParams& p, ParamVector& grads);

// ---- checkpoints ----

void save_checkpoint(const ModelParams& p, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);
/// Throws ManifestMismatch when the stored manifest differs from `expected`.
ModelParams load_checkpoint(const std::filesystem::path& path, const Manifest& expected);

std::string to_string(ParamGroup g);

}  // namespace mutualsl
