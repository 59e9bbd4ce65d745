// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include "nn/blocks.hpp"

#include "tensor/ops.hpp"

namespace moeasr::nn {

void BlockConfig::validate() const {
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw ParameterError("block: d_model " + std::to_string(d_model) + " not divisible by " +
                         std::to_string(n_heads) + " heads");
  }
  if (d_ff == 0) throw ParameterError("block: d_ff must be positive");
  if (!(dropout_p >= 0.0) || dropout_p >= 1.0 || !(ffn_dropout >= 0.0) || ffn_dropout >= 1.0) {
    throw ParameterError("block: dropout probabilities must lie in [0, 1)");
  }
  if (ffn_kind == FfnKind::kMoe) router.validate();
}

Segments segments_from_lengths(std::span<const std::size_t> lengths) {
  Segments s{0};
  for (auto len : lengths) s.push_back(s.back() + len);
  return s;
}

moe::ExpertParams make_expert_params(ParamStore& store, const std::string& prefix,
                                     std::size_t d_model, std::size_t d_ff) {
  return {store.create(prefix + ".in.weight", {d_model, d_ff}, Init::kUniformFanIn),
          store.create(prefix + ".in.bias", {d_ff}, Init::kZeros),
          store.create(prefix + ".out.weight", {d_ff, d_model}, Init::kUniformFanIn),
          store.create(prefix + ".out.bias", {d_model}, Init::kZeros)};
}

FeedForwardParams make_ffn_params(ParamStore& store, const std::string& prefix,
                                  const BlockConfig& cfg) {
  FeedForwardParams p;
  if (cfg.ffn_kind == FfnKind::kDense) {
    p.dense = make_expert_params(store, prefix, cfg.d_model, cfg.d_ff);
    return p;
  }
  p.gate_weights = store.create(prefix + ".gate.weight", {cfg.d_model, cfg.router.num_experts},
                                Init::kUniformFanIn);
  for (std::size_t e = 0; e < cfg.router.num_experts; ++e) {
    p.experts.push_back(
        make_expert_params(store, prefix + ".expert" + std::to_string(e), cfg.d_model, cfg.d_ff));
  }
  return p;
}

namespace {

std::pair<Tensor, Tensor> make_norm(ParamStore& store, const std::string& prefix, std::size_t d) {
  return {store.create(prefix + ".gain", {d}, Init::kOnes),
          store.create(prefix + ".bias", {d}, Init::kZeros)};
}

Tensor segment_attention(const Tensor& x, const Segments& segments, const Tensor& memory,
                         const Segments& memory_segments, std::span<const AttentionMask> masks,
                         const AttentionParams& params, const BlockConfig& cfg) {
  const std::size_t count = segments.size() - 1;
  if (masks.size() != count || memory_segments.size() != segments.size()) {
    throw DimensionError("attention: " + std::to_string(count) + " segments, " +
                         std::to_string(masks.size()) + " masks, " +
                         std::to_string(memory_segments.size() - 1) + " memory segments");
  }
  if (segments.back() != x.dim(0) || memory_segments.back() != memory.dim(0)) {
    throw DimensionError("attention: segments do not cover the packed rows");
  }
  if (count == 1) return mha(x, memory, masks[0], params, cfg.n_heads, cfg.position_kind);
  std::vector<Tensor> parts;
  parts.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Tensor q = slice_rows(x, segments[i], segments[i + 1]);
    Tensor kv = x.same_node(memory) ? q : slice_rows(memory, memory_segments[i], memory_segments[i + 1]);
    parts.push_back(mha(q, kv, masks[i], params, cfg.n_heads, cfg.position_kind));
  }
  return concat_rows(parts);
}

}  // namespace

EncoderBlockParams make_encoder_block_params(ParamStore& store, const std::string& prefix,
                                             const BlockConfig& cfg) {
  cfg.validate();
  EncoderBlockParams p;
  std::tie(p.ln_attn_gain, p.ln_attn_bias) = make_norm(store, prefix + ".attn_norm", cfg.d_model);
  p.attn = make_attention_params(store, prefix + ".attn", cfg.d_model, cfg.n_heads,
                                 cfg.position_kind, cfg.rel_left, cfg.rel_right);
  std::tie(p.ln_ffn_gain, p.ln_ffn_bias) = make_norm(store, prefix + ".ffn_norm", cfg.d_model);
  p.ffn = make_ffn_params(store, prefix + ".ffn", cfg);
  return p;
}

DecoderBlockParams make_decoder_block_params(ParamStore& store, const std::string& prefix,
                                             const BlockConfig& cfg) {
  cfg.validate();
  DecoderBlockParams p;
  std::tie(p.ln_self_gain, p.ln_self_bias) = make_norm(store, prefix + ".self_norm", cfg.d_model);
  p.self_attn = make_attention_params(store, prefix + ".self_attn", cfg.d_model, cfg.n_heads,
                                      cfg.position_kind, cfg.rel_left, cfg.rel_right);
  std::tie(p.ln_cross_gain, p.ln_cross_bias) = make_norm(store, prefix + ".cross_norm", cfg.d_model);
  p.cross_attn = make_attention_params(store, prefix + ".cross_attn", cfg.d_model, cfg.n_heads,
                                       PositionKind::kAbsolute, 0, 0);
  std::tie(p.ln_ffn_gain, p.ln_ffn_bias) = make_norm(store, prefix + ".ffn_norm", cfg.d_model);
  p.ffn = make_ffn_params(store, prefix + ".ffn", cfg);
  return p;
}

BlockOutput ffn_sublayer(const Tensor& x, const Tensor& ln_gain, const Tensor& ln_bias,
                         const FeedForwardParams& ffn, const BlockConfig& cfg, RngStream& rng,
                         bool training) {
  BlockOutput out;
  Tensor normed = layer_norm(x, ln_gain, ln_bias);
  RngStream ffn_rng = rng.fork("ffn");
  Tensor h;
  if (cfg.ffn_kind == FfnKind::kMoe) {
    out.moe = moe::moe_forward(normed, ffn.gate_weights, ffn.experts, cfg.router, cfg.ffn_dropout,
                               ffn_rng, training);
    h = out.moe->y;
  } else {
    h = moe::expert_ffn(normed, ffn.dense, cfg.ffn_dropout, ffn_rng, training);
  }
  RngStream drop_rng = rng.fork("ffn_residual_dropout");
  out.y = add(x, dropout(h, cfg.dropout_p, drop_rng, training));
  return out;
}

BlockOutput encoder_block(const Tensor& x, const Segments& segments,
                          std::span<const AttentionMask> masks, const BlockConfig& cfg,
                          const EncoderBlockParams& params, RngStream& rng, bool training) {
  if (x.rank() != 2 || x.dim(1) != cfg.d_model) {
    throw DimensionError("encoder_block: input " + shape_to_string(x.shape()) + " for width " +
                         std::to_string(cfg.d_model));
  }
  Tensor normed = layer_norm(x, params.ln_attn_gain, params.ln_attn_bias);
  Tensor attended = segment_attention(normed, segments, normed, segments, masks, params.attn, cfg);
  RngStream drop_rng = rng.fork("attn_residual_dropout");
  Tensor y1 = add(x, dropout(attended, cfg.dropout_p, drop_rng, training));
  return ffn_sublayer(y1, params.ln_ffn_gain, params.ln_ffn_bias, params.ffn, cfg, rng, training);
}

BlockOutput decoder_block(const Tensor& x, const Segments& segments, const Tensor& memory,
                          const Segments& memory_segments,
                          std::span<const AttentionMask> self_masks,
                          std::span<const AttentionMask> cross_masks, const BlockConfig& cfg,
                          const DecoderBlockParams& params, RngStream& rng, bool training) {
  if (x.rank() != 2 || x.dim(1) != cfg.d_model || memory.rank() != 2 ||
      memory.dim(1) != cfg.d_model) {
    throw DimensionError("decoder_block: input " + shape_to_string(x.shape()) + ", memory " +
                         shape_to_string(memory.shape()) + " for width " +
                         std::to_string(cfg.d_model));
  }
  Tensor normed = layer_norm(x, params.ln_self_gain, params.ln_self_bias);
  Tensor self_out =
      segment_attention(normed, segments, normed, segments, self_masks, params.self_attn, cfg);
  RngStream self_rng = rng.fork("self_residual_dropout");
  Tensor y1 = add(x, dropout(self_out, cfg.dropout_p, self_rng, training));

  Tensor normed1 = layer_norm(y1, params.ln_cross_gain, params.ln_cross_bias);
  BlockConfig cross_cfg = cfg;
  cross_cfg.position_kind = PositionKind::kAbsolute;
  Tensor cross_out = segment_attention(normed1, segments, memory, memory_segments, cross_masks,
                                       params.cross_attn, cross_cfg);
  RngStream cross_rng = rng.fork("cross_residual_dropout");
  Tensor y2 = add(y1, dropout(cross_out, cfg.dropout_p, cross_rng, training));
  return ffn_sublayer(y2, params.ln_ffn_gain, params.ln_ffn_bias, params.ffn, cfg, rng, training);
}

bool is_moe_layer(std::size_t index, std::size_t moe_every) {
  return moe_every > 0 && (index + 1) % moe_every == 0;
}

}  // namespace moeasr::nn
