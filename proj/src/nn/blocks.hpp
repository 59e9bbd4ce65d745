// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pre-layer-norm residual blocks. Each sub-layer computes
//   y = x + dropout(sublayer(layer_norm(x)))
// so a block whose sub-layer weights are all zero is the identity map.
//
// Blocks work on packed batches: the rows of `x` are the concatenated frames
// of several sequences, delimited by `Segments`. Attention never crosses a
// segment boundary; the feed-forward (and MoE routing) sees every row of the
// batch at once, which is what the per-batch expert capacity is defined over.

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moe/router.hpp"
#include "nn/attention.hpp"
#include "tensor/params.hpp"

namespace moeasr::nn {

enum class FfnKind { kDense, kMoe };

struct BlockConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  double dropout_p = 0.1;    // residual dropout after each sub-layer
  double ffn_dropout = 0.1;  // between the two linear maps of an FFN / expert
  FfnKind ffn_kind = FfnKind::kDense;
  moe::RouterConfig router;
  PositionKind position_kind = PositionKind::kAbsolute;
  std::size_t rel_left = 0;
  std::size_t rel_right = 0;

  void validate() const;
};

// Row boundaries of packed sequences: sequence i owns [offsets[i], offsets[i+1]).
using Segments = std::vector<std::size_t>;

Segments segments_from_lengths(std::span<const std::size_t> lengths);

struct FeedForwardParams {
  moe::ExpertParams dense;
  Tensor gate_weights;  // [d×N], MoE only
  std::vector<moe::ExpertParams> experts;
};

moe::ExpertParams make_expert_params(ParamStore& store, const std::string& prefix,
                                     std::size_t d_model, std::size_t d_ff);
FeedForwardParams make_ffn_params(ParamStore& store, const std::string& prefix,
                                  const BlockConfig& cfg);

struct EncoderBlockParams {
  Tensor ln_attn_gain, ln_attn_bias;
  AttentionParams attn;
  Tensor ln_ffn_gain, ln_ffn_bias;
  FeedForwardParams ffn;
};

struct DecoderBlockParams {
  Tensor ln_self_gain, ln_self_bias;
  AttentionParams self_attn;
  Tensor ln_cross_gain, ln_cross_bias;
  AttentionParams cross_attn;
  Tensor ln_ffn_gain, ln_ffn_bias;
  FeedForwardParams ffn;
};

EncoderBlockParams make_encoder_block_params(ParamStore& store, const std::string& prefix,
                                             const BlockConfig& cfg);
DecoderBlockParams make_decoder_block_params(ParamStore& store, const std::string& prefix,
                                             const BlockConfig& cfg);

struct BlockOutput {
  Tensor y;
  std::optional<moe::MoeOutput> moe;  // present when the block's FFN is MoE
};

// Residual FFN sub-layer on its own; used by blocks and the label decoder.
BlockOutput ffn_sublayer(const Tensor& x, const Tensor& ln_gain, const Tensor& ln_bias,
                         const FeedForwardParams& ffn, const BlockConfig& cfg, RngStream& rng,
                         bool training);

BlockOutput encoder_block(const Tensor& x, const Segments& segments,
                          std::span<const AttentionMask> masks, const BlockConfig& cfg,
                          const EncoderBlockParams& params, RngStream& rng, bool training);

BlockOutput decoder_block(const Tensor& x, const Segments& segments, const Tensor& memory,
                          const Segments& memory_segments,
                          std::span<const AttentionMask> self_masks,
                          std::span<const AttentionMask> cross_masks, const BlockConfig& cfg,
                          const DecoderBlockParams& params, RngStream& rng, bool training);

// 1-based layers moe_every, 2·moe_every, ... carry MoE; moe_every = 0 means dense.
bool is_moe_layer(std::size_t index, std::size_t moe_every);

}  // namespace moeasr::nn
