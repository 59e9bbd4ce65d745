// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include "nn/attention.hpp"

#include <cmath>

#include "tensor/ops.hpp"

namespace moeasr::nn {

std::size_t AttentionMask::count_row(std::size_t t) const {
  std::size_t n = 0;
  for (std::size_t s = 0; s < cols; ++s) n += at(t, s);
  return n;
}

AttentionMask AttentionMask::full(std::size_t rows, std::size_t cols) {
  return {rows, cols, std::vector<std::uint8_t>(rows * cols, 1)};
}

AttentionMask AttentionMask::causal(std::size_t length) {
  AttentionMask m{length, length, std::vector<std::uint8_t>(length * length, 0)};
  for (std::size_t t = 0; t < length; ++t)
    for (std::size_t s = 0; s <= t; ++s) m.allowed[t * length + s] = 1;
  return m;
}

AttentionMask build_streaming_mask(std::size_t length, std::size_t left, std::size_t right) {
  if (length < 1) throw ParameterError("streaming mask needs length >= 1");
  AttentionMask m{length, length, std::vector<std::uint8_t>(length * length, 0)};
  for (std::size_t t = 0; t < length; ++t) {
    const std::size_t lo = t >= left ? t - left : 0;
    const std::size_t hi = std::min(length - 1, t + right);
    for (std::size_t s = lo; s <= hi; ++s) m.allowed[t * length + s] = 1;
  }
  return m;
}

AttentionParams make_attention_params(ParamStore& store, const std::string& prefix,
                                      std::size_t d_model, std::size_t n_heads,
                                      PositionKind kind, std::size_t rel_left,
                                      std::size_t rel_right) {
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw ParameterError("attention: d_model " + std::to_string(d_model) +
                         " not divisible by " + std::to_string(n_heads) + " heads");
  }
  AttentionParams p;
  auto proj = [&](const std::string& name, Tensor& w, Tensor& b) {
    w = store.create(prefix + "." + name + ".weight", {d_model, d_model}, Init::kUniformFanIn);
    b = store.create(prefix + "." + name + ".bias", {d_model}, Init::kZeros);
  };
  proj("query", p.w_query, p.b_query);
  proj("key", p.w_key, p.b_key);
  proj("value", p.w_value, p.b_value);
  proj("out", p.w_out, p.b_out);
  if (kind == PositionKind::kRelative) {
    p.rel_left = rel_left;
    p.rel_right = rel_right;
    p.relative_bias = store.create(prefix + ".relative_bias", {n_heads, rel_left + rel_right + 1},
                                   Init::kZeros);
  }
  return p;
}

namespace {

struct Projected {
  Tensor q, k, v;
};

Projected project(const Tensor& query_in, const Tensor& kv_in, const AttentionParams& p) {
  return {linear(query_in, p.w_query, p.b_query), linear(kv_in, p.w_key, p.b_key),
          linear(kv_in, p.w_value, p.b_value)};
}

Tensor head_probs(const Projected& x, const AttentionMask& mask, const AttentionParams& p,
                  std::size_t n_heads, std::size_t head, PositionKind kind) {
  const std::size_t d_model = x.q.dim(1);
  const std::size_t dk = d_model / n_heads;
  Tensor qh = slice_cols(x.q, head * dk, (head + 1) * dk);
  Tensor kh = slice_cols(x.k, head * dk, (head + 1) * dk);
  Tensor scores = scale(matmul_bt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dk)));
  if (kind == PositionKind::kRelative) {
    const std::size_t width = p.rel_left + p.rel_right + 1;
    Tensor bias = reshape(slice_rows(p.relative_bias, head, head + 1), {width});
    scores = add_relative_bias(scores, bias, p.rel_left, p.rel_right);
  }
  return masked_softmax(scores, mask.allowed);
}

void check_shapes(const Tensor& query_in, const Tensor& kv_in, const AttentionMask& mask,
                  std::size_t n_heads) {
  if (query_in.rank() != 2 || kv_in.rank() != 2 || query_in.dim(1) != kv_in.dim(1)) {
    throw DimensionError("mha: queries " + shape_to_string(query_in.shape()) + ", keys " +
                         shape_to_string(kv_in.shape()));
  }
  if (n_heads == 0 || query_in.dim(1) % n_heads != 0) {
    throw ParameterError("mha: width " + std::to_string(query_in.dim(1)) +
                         " not divisible by " + std::to_string(n_heads) + " heads");
  }
  if (mask.rows != query_in.dim(0) || mask.cols != kv_in.dim(0)) {
    throw DimensionError("mha: mask " + std::to_string(mask.rows) + "x" +
                         std::to_string(mask.cols) + " for " + std::to_string(query_in.dim(0)) +
                         " queries and " + std::to_string(kv_in.dim(0)) + " keys");
  }
}

}  // namespace

Tensor mha(const Tensor& query_in, const Tensor& kv_in, const AttentionMask& mask,
           const AttentionParams& params, std::size_t n_heads, PositionKind kind) {
  check_shapes(query_in, kv_in, mask, n_heads);
  const Projected x = project(query_in, kv_in, params);
  const std::size_t dk = query_in.dim(1) / n_heads;
  std::vector<Tensor> heads;
  heads.reserve(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    Tensor probs = head_probs(x, mask, params, n_heads, h, kind);
    heads.push_back(matmul(probs, slice_cols(x.v, h * dk, (h + 1) * dk)));
  }
  Tensor merged = n_heads == 1 ? heads[0] : concat_cols(heads);
  Tensor out = linear(merged, params.w_out, params.b_out);
  std::vector<double> keep(mask.rows, 1.0);
  bool any_empty = false;
  for (std::size_t t = 0; t < mask.rows; ++t) {
    if (mask.count_row(t) == 0) {
      keep[t] = 0.0;
      any_empty = true;
    }
  }
  return any_empty ? mul_rows(out, Tensor::from({mask.rows}, std::move(keep))) : out;
}

Tensor attention_weights(const Tensor& query_in, const Tensor& kv_in, const AttentionMask& mask,
                         const AttentionParams& params, std::size_t n_heads, std::size_t head,
                         PositionKind kind) {
  check_shapes(query_in, kv_in, mask, n_heads);
  return head_probs(project(query_in, kv_in, params), mask, params, n_heads, head, kind);
}

Tensor sinusoidal_positions(std::size_t length, std::size_t d_model) {
  std::vector<double> table(length * d_model);
  for (std::size_t t = 0; t < length; ++t)
    for (std::size_t i = 0; i < d_model; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model));
      table[t * d_model + i] = i % 2 == 0 ? std::sin(t * rate) : std::cos(t * rate);
    }
  return Tensor::from({length, d_model}, std::move(table));
}

}  // namespace moeasr::nn
