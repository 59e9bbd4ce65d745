// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tensor/params.hpp"
#include "tensor/tensor.hpp"

namespace moeasr::nn {

struct AttentionMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> allowed;  // row-major, 1 = attendable

  bool at(std::size_t t, std::size_t s) const { return allowed[t * cols + s] != 0; }
  std::size_t count_row(std::size_t t) const;

  static AttentionMask full(std::size_t rows, std::size_t cols);
  static AttentionMask causal(std::size_t length);
};

// allowed[t, s] iff t - left <= s <= t + right, within [0, length).
AttentionMask build_streaming_mask(std::size_t length, std::size_t left, std::size_t right);

enum class PositionKind { kAbsolute, kRelative };

struct AttentionParams {
  Tensor w_query, b_query;
  Tensor w_key, b_key;
  Tensor w_value, b_value;
  Tensor w_out, b_out;
  // [heads × (left + right + 1)] score biases indexed by clipped key offset;
  // only present for relative attention.
  Tensor relative_bias;
  std::size_t rel_left = 0;
  std::size_t rel_right = 0;
};

AttentionParams make_attention_params(ParamStore& store, const std::string& prefix,
                                      std::size_t d_model, std::size_t n_heads,
                                      PositionKind kind, std::size_t rel_left,
                                      std::size_t rel_right);

// Scaled dot-product attention of queries [Tq×d] over keys/values [Tk×d].
// Masked scores are excluded from the softmax; a query row with no allowed
// key produces a zero row.
Tensor mha(const Tensor& query_in, const Tensor& kv_in, const AttentionMask& mask,
           const AttentionParams& params, std::size_t n_heads, PositionKind kind);

// Attention probabilities of one head, for inspection in tests.
Tensor attention_weights(const Tensor& query_in, const Tensor& kv_in, const AttentionMask& mask,
                         const AttentionParams& params, std::size_t n_heads, std::size_t head,
                         PositionKind kind);

// Fixed sinusoidal table [length×d].
Tensor sinusoidal_positions(std::size_t length, std::size_t d_model);

}  // namespace moeasr::nn
