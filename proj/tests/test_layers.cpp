// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "gradcheck.hpp"
#include "mutualsl/layers.hpp"

using namespace mutualsl;
using namespace mutualsl::layers;
using namespace mutualsl::testing;

namespace {

double probe(const Mat& Y, const Mat& R) { return (Y.array() * R.array()).sum(); }

CMatRef cref(const Mat& m) { return CMatRef(m.data(), m.rows(), m.cols()); }
MatRef ref(Mat& m) { return MatRef(m.data(), m.rows(), m.cols()); }

}  // namespace

TEST_CASE("linear forward and gradients") {
    std::mt19937_64 rng(1);
    Mat X = random_mat(rng, 5, 3), W = random_mat(rng, 4, 3), b = random_mat(rng, 1, 4);
    const Mat R = random_mat(rng, 5, 4);
    CHECK(linear(Mat::Zero(5, 3), cref(W), cref(Mat::Zero(1, 4))).isZero());
    Mat dW = Mat::Zero(4, 3), db = Mat::Zero(1, 4);
    const Mat dX = linear_backward(X, cref(W), R, ref(dW), ref(db));
    auto f = [&] { return probe(linear(X, cref(W), cref(b)), R); };
    CHECK(check_gradient(f, span_of(X), span_of(dX)).max_rel < kFdRelTol);
    CHECK(check_gradient(f, span_of(W), span_of(dW)).max_rel < kFdRelTol);
    CHECK(check_gradient(f, span_of(b), span_of(db)).max_rel < kFdRelTol);
}

TEST_CASE("softmax rows and columns") {
    std::mt19937_64 rng(2);
    Mat X = random_mat(rng, 4, 6);
    const Mat P = softmax_rows(X);
    for (Eigen::Index r = 0; r < 4; ++r) CHECK(P.row(r).sum() == doctest::Approx(1.0));
    const Mat Pc = softmax_cols(X);
    for (Eigen::Index c = 0; c < 6; ++c) CHECK(Pc.col(c).sum() == doctest::Approx(1.0));
    // Shift invariance and overflow safety.
    Mat big = X.array() + 1000.0;
    CHECK(softmax_rows(big).isApprox(P, 1e-12));

    const Mat R = random_mat(rng, 4, 6);
    const Mat dX = softmax_rows_backward(P, R);
    CHECK(check_gradient([&] { return probe(softmax_rows(X), R); }, span_of(X), span_of(dX)).max_rel < kFdRelTol);
    const Mat dXc = softmax_cols_backward(Pc, R);
    CHECK(check_gradient([&] { return probe(softmax_cols(X), R); }, span_of(X), span_of(dXc)).max_rel < kFdRelTol);
}

TEST_CASE("relu backward passes gradient only where active") {
    Mat pre(1, 4);
    pre << -1, 0.5, 0, 2;
    Mat dY = Mat::Ones(1, 4);
    const Mat d = relu_backward(pre, dY);
    CHECK(d(0, 0) == 0);
    CHECK(d(0, 1) == 1);
    CHECK(d(0, 3) == 1);
    CHECK(relu(pre)(0, 0) == 0);
}

TEST_CASE("im2col windows are zero padded and col2im is its adjoint") {
    std::mt19937_64 rng(3);
    Mat X = random_mat(rng, 5, 2);
    const Mat cols = im2col(X, 3);
    REQUIRE(cols.rows() == 5);
    REQUIRE(cols.cols() == 6);
    CHECK(cols.block(0, 0, 1, 2).isZero());
    CHECK(cols.block(0, 2, 1, 2) == X.row(0));
    CHECK(cols.block(4, 4, 1, 2).isZero());
    CHECK(cols.block(2, 0, 1, 2) == X.row(1));
    // <im2col(X), C> == <X, col2im(C)>
    const Mat C = random_mat(rng, 5, 6);
    CHECK(probe(cols, C) == doctest::Approx(probe(X, col2im(C, 3, 2))));
}

TEST_CASE("conv1d gradients for kernel 1 and 3") {
    for (int kernel : {1, 3, 5}) {
        CAPTURE(kernel);
        std::mt19937_64 rng(4 + kernel);
        Mat X = random_mat(rng, 6, 3), W = random_mat(rng, 2, 3 * kernel), b = random_mat(rng, 1, 2);
        const Mat R = random_mat(rng, 6, 2);
        ConvCache cache;
        const Mat Y = conv1d(X, cref(W), cref(b), kernel, &cache);
        CHECK(Y.rows() == 6);
        Mat dW = Mat::Zero(W.rows(), W.cols()), db = Mat::Zero(1, 2);
        const Mat dX = conv1d_backward(cache, cref(W), R, kernel, 3, ref(dW), ref(db));
        auto f = [&] { return probe(conv1d(X, cref(W), cref(b), kernel, nullptr), R); };
        CHECK(check_gradient(f, span_of(X), span_of(dX)).max_rel < kFdRelTol);
        CHECK(check_gradient(f, span_of(W), span_of(dW)).max_rel < kFdRelTol);
        CHECK(check_gradient(f, span_of(b), span_of(db)).max_rel < kFdRelTol);
    }
}

TEST_CASE("lstm gradients and causality") {
    std::mt19937_64 rng(6);
    const int h = 3, in = 2, T = 5;
    Mat X = random_mat(rng, T, in), Wx = random_mat(rng, 4 * h, in, 0.5), Wh = random_mat(rng, 4 * h, h, 0.5),
        b = random_mat(rng, 1, 4 * h, 0.5);
    const Mat R = random_mat(rng, T, h);
    LstmCache cache;
    const Mat H = lstm(X, cref(Wx), cref(Wh), cref(b), &cache);
    REQUIRE(H.rows() == T);
    REQUIRE(H.cols() == h);
    Mat dWx = Mat::Zero(Wx.rows(), Wx.cols()), dWh = Mat::Zero(Wh.rows(), Wh.cols()), db = Mat::Zero(1, 4 * h);
    const Mat dX = lstm_backward(cache, cref(Wx), cref(Wh), R, ref(dWx), ref(dWh), ref(db));
    auto f = [&] { return probe(lstm(X, cref(Wx), cref(Wh), cref(b), nullptr), R); };
    CHECK(check_gradient(f, span_of(X), span_of(dX)).max_rel < kFdRelTol);
    CHECK(check_gradient(f, span_of(Wx), span_of(dWx)).max_rel < kFdRelTol);
    CHECK(check_gradient(f, span_of(Wh), span_of(dWh)).max_rel < kFdRelTol);
    CHECK(check_gradient(f, span_of(b), span_of(db)).max_rel < kFdRelTol);

    for (int t = 0; t < T; ++t) {
        Mat Xp = X;
        Xp.bottomRows(T - t - 1).array() += 3.0;
        const Mat Hp = lstm(Xp, cref(Wx), cref(Wh), cref(b), nullptr);
        CHECK(Hp.topRows(t + 1) == H.topRows(t + 1));
    }
}
