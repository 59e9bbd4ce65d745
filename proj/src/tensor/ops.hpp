// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable primitives. Matrices are rank-2 row-major tensors; "rows"
// always means the leading axis.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tensor/rng.hpp"
#include "tensor/tensor.hpp"

namespace moeasr {

// Multiply-accumulate counter for matrix products run on this thread.
struct MacCounter {
  static std::uint64_t value();
  static void reset();
};

Tensor matmul(const Tensor& a, const Tensor& b);
// a · bᵀ
Tensor matmul_bt(const Tensor& a, const Tensor& b);
// x·w + bias; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_row(const Tensor& x, const Tensor& row);
Tensor mul_rows(const Tensor& x, const Tensor& row_scale);
Tensor mul_const(const Tensor& x, std::span<const double> factors);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x);
// Row-wise softmax over allowed entries; rows with nothing allowed become zero.
Tensor masked_softmax(const Tensor& scores, std::span<const std::uint8_t> allowed);

inline constexpr double kLayerNormEps = 1e-5;
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = kLayerNormEps);

// Cross-correlation of x [C_in×H×W] with kernels [C_out×C_in×k×k] after
// zero padding of one on every spatial side. bias [C_out] may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias, std::size_t stride);
std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride);

Tensor dropout(const Tensor& x, double p, RngStream& rng, bool training);

struct LstmWeights {
  Tensor input;   // [in×4H], gate blocks ordered input, forget, cell, output
  Tensor hidden;  // [H×4H]
  Tensor bias;    // [4H]
};

struct LstmState {
  Tensor h;  // [B×H]
  Tensor c;  // [B×H]
};

LstmState lstm_cell(const Tensor& x, const LstmState& prev, const LstmWeights& w);

Tensor reshape(const Tensor& x, const Shape& shape);
// [A×B×C] -> [B×A×C]
Tensor swap_leading_axes(const Tensor& x);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
// out[rows[i]] += src[i]; out has num_rows rows.
Tensor scatter_rows(const Tensor& src, std::span<const std::size_t> rows, std::size_t num_rows);
Tensor gather_elements(const Tensor& x, std::span<const std::size_t> rows,
                       std::span<const std::size_t> cols);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Column means of a matrix, shape [cols].
Tensor mean_rows(const Tensor& x);
Tensor dot_const(const Tensor& x, std::span<const double> weights);

// Row i·Tb + j of the result is a[i] + b[j].
Tensor outer_add(const Tensor& a, const Tensor& b);

// scores[t, s] += bias[clamp(s - t, -left, right) + left]
Tensor add_relative_bias(const Tensor& scores, const Tensor& bias, std::size_t left,
                         std::size_t right);

}  // namespace moeasr
