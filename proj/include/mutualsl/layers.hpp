// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mutualsl/data_model.hpp"

// Dense building blocks with explicit backward passes. Backward functions
// accumulate into parameter gradients (+=) and return input gradients.
namespace mutualsl::layers {

using MatRef = Eigen::Map<Mat>;
using CMatRef = Eigen::Map<const Mat>;

/// Y = X W^T + b, with W out x in and b 1 x out.
Mat linear(const Mat& X, const CMatRef& W, const CMatRef& b);
Mat linear_backward(const Mat& X, const CMatRef& W, const Mat& dY, MatRef dW, MatRef db);

Mat relu(const Mat& pre);
Mat relu_backward(const Mat& pre, const Mat& dY);

Mat softmax_rows(const Mat& X);
Mat softmax_rows_backward(const Mat& P, const Mat& dP);
Mat softmax_cols(const Mat& X);
Mat softmax_cols_backward(const Mat& P, const Mat& dP);

/// Rows of the result are the zero-padded windows [x_{t-K/2}, ..., x_{t+K/2}] (K odd).
Mat im2col(const Mat& X, int kernel);
Mat col2im(const Mat& cols, int kernel, Eigen::Index channels);

/// Same-padded 1-D convolution along rows. W is out x (kernel * in).
struct ConvCache {
    Mat cols;
};
Mat conv1d(const Mat& X, const CMatRef& W, const CMatRef& b, int kernel, ConvCache* cache);
Mat conv1d_backward(const ConvCache& cache, const CMatRef& W, const Mat& dY, int kernel, Eigen::Index in_channels,
                    MatRef dW, MatRef db);

/// Unidirectional (left-to-right) LSTM; gate order i, f, g, o.
/// Wx is 4h x in, Wh is 4h x h, b is 1 x 4h.
struct LstmCache {
    Mat X;
    Mat gates;  // post-activation
    Mat c;
    Mat h;
};
Mat lstm(const Mat& X, const CMatRef& Wx, const CMatRef& Wh, const CMatRef& b, LstmCache* cache);
Mat lstm_backward(const LstmCache& cache, const CMatRef& Wx, const CMatRef& Wh, const Mat& dH, MatRef dWx,
                  MatRef dWh, MatRef db);

}  // namespace mutualsl::layers
