// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#include "mutualsl/layers.hpp"

#include <cmath>

#include "mutualsl/errors.hpp"

namespace mutualsl::layers {

Mat linear(const Mat& X, const CMatRef& W, const CMatRef& b) {
    if (X.cols() != W.cols()) throw ShapeError("linear: input width does not match weight");
    Mat Y = X * W.transpose();
    Y.rowwise() += b.row(0);
    return Y;
}

Mat linear_backward(const Mat& X, const CMatRef& W, const Mat& dY, MatRef dW, MatRef db) {
    dW.noalias() += dY.transpose() * X;
    db.row(0) += dY.colwise().sum();
    return dY * W;
}

Mat relu(const Mat& pre) { return pre.cwiseMax(0.0); }

Mat relu_backward(const Mat& pre, const Mat& dY) {
    return (pre.array() > 0.0).select(dY, 0.0);
}

Mat softmax_rows(const Mat& X) {
    Mat P = X;
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
        const double m = P.row(i).maxCoeff();
        P.row(i) = (P.row(i).array() - m).exp();
        P.row(i) /= P.row(i).sum();
    }
    return P;
}

Mat softmax_rows_backward(const Mat& P, const Mat& dP) {
    const Vec dots = P.cwiseProduct(dP).rowwise().sum();
    Mat dX = dP;
    dX.colwise() -= dots;
    return P.cwiseProduct(dX);
}

Mat softmax_cols(const Mat& X) {
    Mat P = X;
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
        const double m = P.col(j).maxCoeff();
        P.col(j) = (P.col(j).array() - m).exp();
        P.col(j) /= P.col(j).sum();
    }
    return P;
}

Mat softmax_cols_backward(const Mat& P, const Mat& dP) {
    const Eigen::RowVectorXd dots = P.cwiseProduct(dP).colwise().sum();
    Mat dX = dP;
    dX.rowwise() -= dots;
    return P.cwiseProduct(dX);
}

Mat im2col(const Mat& X, int kernel) {
    const Eigen::Index L = X.rows();
    const Eigen::Index C = X.cols();
    const int half = kernel / 2;
    Mat cols = Mat::Zero(L, kernel * C);
    for (Eigen::Index t = 0; t < L; ++t)
        for (int m = 0; m < kernel; ++m) {
            const Eigen::Index src = t + m - half;
            if (src >= 0 && src < L) cols.block(t, m * C, 1, C) = X.row(src);
        }
    return cols;
}

Mat col2im(const Mat& cols, int kernel, Eigen::Index channels) {
    const Eigen::Index L = cols.rows();
    const int half = kernel / 2;
    Mat X = Mat::Zero(L, channels);
    for (Eigen::Index t = 0; t < L; ++t)
        for (int m = 0; m < kernel; ++m) {
            const Eigen::Index src = t + m - half;
            if (src >= 0 && src < L) X.row(src) += cols.block(t, m * channels, 1, channels);
        }
    return X;
}

Mat conv1d(const Mat& X, const CMatRef& W, const CMatRef& b, int kernel, ConvCache* cache) {
    if (kernel < 1 || kernel % 2 == 0) throw ShapeError("conv1d: kernel size must be odd");
    if (W.cols() != kernel * X.cols()) throw ShapeError("conv1d: weight does not match kernel * in_channels");
    if (kernel == 1) {
        if (cache) cache->cols = X;
        return linear(X, W, b);
    }
    Mat cols = im2col(X, kernel);
    Mat Y = linear(cols, W, b);
    if (cache) cache->cols = std::move(cols);
    return Y;
}

Mat conv1d_backward(const ConvCache& cache, const CMatRef& W, const Mat& dY, int kernel, Eigen::Index in_channels,
                    MatRef dW, MatRef db) {
    Mat dcols = linear_backward(cache.cols, W, dY, dW, db);
    if (kernel == 1) return dcols;
    return col2im(dcols, kernel, in_channels);
}

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Mat lstm(const Mat& X, const CMatRef& Wx, const CMatRef& Wh, const CMatRef& b, LstmCache* cache) {
    const Eigen::Index L = X.rows();
    const Eigen::Index H = Wh.cols();
    if (Wx.rows() != 4 * H || Wh.rows() != 4 * H || X.cols() != Wx.cols())
        throw ShapeError("lstm: weight shapes inconsistent");
    Mat Z = linear(X, Wx, b);
    Mat gates(L, 4 * H);
    Mat c(L, H);
    Mat h(L, H);
    Vec h_prev = Vec::Zero(H);
    Vec c_prev = Vec::Zero(H);
    Vec z(4 * H);
    for (Eigen::Index t = 0; t < L; ++t) {
        z.noalias() = Wh * h_prev;
        z += Z.row(t).transpose();
        for (Eigen::Index j = 0; j < H; ++j) {
            const double ig = sigmoid(z[j]);
            const double fg = sigmoid(z[H + j]);
            const double gg = std::tanh(z[2 * H + j]);
            const double og = sigmoid(z[3 * H + j]);
            const double ct = fg * c_prev[j] + ig * gg;
            gates(t, j) = ig;
            gates(t, H + j) = fg;
            gates(t, 2 * H + j) = gg;
            gates(t, 3 * H + j) = og;
            c(t, j) = ct;
            h(t, j) = og * std::tanh(ct);
        }
        h_prev = h.row(t).transpose();
        c_prev = c.row(t).transpose();
    }
    if (cache) {
        cache->X = X;
        cache->gates = std::move(gates);
        cache->c = std::move(c);
        cache->h = h;
    }
    return h;
}

Mat lstm_backward(const LstmCache& cache, const CMatRef& Wx, const CMatRef& Wh, const Mat& dH, MatRef dWx,
                  MatRef dWh, MatRef db) {
    const Eigen::Index L = cache.X.rows();
    const Eigen::Index H = Wh.cols();
    Mat dZ(L, 4 * H);
    Vec dh_next = Vec::Zero(H);
    Vec dc_next = Vec::Zero(H);
    for (Eigen::Index t = L - 1; t >= 0; --t) {
        for (Eigen::Index j = 0; j < H; ++j) {
            const double ig = cache.gates(t, j);
            const double fg = cache.gates(t, H + j);
            const double gg = cache.gates(t, 2 * H + j);
            const double og = cache.gates(t, 3 * H + j);
            const double tc = std::tanh(cache.c(t, j));
            const double c_prev = t > 0 ? cache.c(t - 1, j) : 0.0;
            const double dh = dH(t, j) + dh_next[j];
            const double dc = dh * og * (1.0 - tc * tc) + dc_next[j];
            dZ(t, j) = dc * gg * ig * (1.0 - ig);
            dZ(t, H + j) = dc * c_prev * fg * (1.0 - fg);
            dZ(t, 2 * H + j) = dc * ig * (1.0 - gg * gg);
            dZ(t, 3 * H + j) = dh * tc * og * (1.0 - og);
            dc_next[j] = dc * fg;
        }
        dh_next.noalias() = Wh.transpose() * dZ.row(t).transpose();
    }
    if (L > 1) dWh.noalias() += dZ.bottomRows(L - 1).transpose() * cache.h.topRows(L - 1);
    return linear_backward(cache.X, Wx, dZ, dWx, db);
}

}  // namespace mutualsl::layers
