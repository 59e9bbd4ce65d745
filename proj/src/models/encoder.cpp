// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include "models/encoder.hpp"

#include <algorithm>

#include "nn/attention.hpp"
#include "tensor/ops.hpp"

namespace moeasr::models {

namespace {

nn::BlockConfig base_block_config(const ModelConfig& cfg, bool moe) {
  nn::BlockConfig b;
  b.d_model = cfg.d_model;
  b.n_heads = cfg.n_heads;
  b.d_ff = cfg.d_ff;
  b.dropout_p = cfg.dropout_p;
  b.ffn_kind = moe ? nn::FfnKind::kMoe : nn::FfnKind::kDense;
  b.ffn_dropout = moe ? cfg.moe_dropout : cfg.dropout_p;
  b.router = cfg.router;
  return b;
}

}  // namespace

nn::BlockConfig encoder_block_config(const ModelConfig& cfg, std::size_t layer) {
  nn::BlockConfig b = base_block_config(cfg, nn::is_moe_layer(layer, cfg.moe_every));
  if (cfg.family == Family::kTT) {
    b.position_kind = nn::PositionKind::kRelative;
    b.rel_left = cfg.streaming.enabled ? cfg.streaming.left : cfg.max_relative_distance;
    b.rel_right = cfg.streaming.enabled ? cfg.streaming.right : cfg.max_relative_distance;
  }
  return b;
}

nn::BlockConfig decoder_block_config(const ModelConfig& cfg, std::size_t layer) {
  return base_block_config(cfg, nn::is_moe_layer(layer, cfg.moe_every));
}

EncoderParams make_encoder_params(ParamStore& store, const ModelConfig& cfg) {
  EncoderParams p;
  p.subsample = nn::make_subsample_params(store, "encoder.subsample", cfg.input_dim(),
                                          cfg.conv_channels, cfg.d_model);
  for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
    p.blocks.push_back(nn::make_encoder_block_params(store, "encoder.layer" + std::to_string(l),
                                                     encoder_block_config(cfg, l)));
  }
  p.final_gain = store.create("encoder.final_norm.gain", {cfg.d_model}, Init::kOnes);
  p.final_bias = store.create("encoder.final_norm.bias", {cfg.d_model}, Init::kZeros);
  return p;
}

Tensor encoder_input(const Tensor& features, std::size_t language, const ModelConfig& cfg) {
  if (features.rank() != 2 || features.dim(1) != cfg.d_feat) {
    throw DimensionError("encoder: features " + shape_to_string(features.shape()) +
                         " for d_feat " + std::to_string(cfg.d_feat));
  }
  if (!cfg.language_id.enabled) return features;
  return inject_language_id(features, language, cfg.language_id.num_languages);
}

std::vector<Tensor> encoder_inputs(const Batch& batch, const ModelConfig& cfg) {
  std::vector<Tensor> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    out.push_back(encoder_input(batch.frames(i), batch.language_ids[i], cfg));
  return out;
}

Tensor packed_positions(std::span<const std::size_t> lengths, std::size_t d_model) {
  std::size_t longest = 0, total = 0;
  for (auto n : lengths) {
    longest = std::max(longest, n);
    total += n;
  }
  const Tensor table = nn::sinusoidal_positions(longest, d_model);
  std::vector<double> rows;
  rows.reserve(total * d_model);
  for (auto n : lengths)
    rows.insert(rows.end(), table.data().begin(),
                table.data().begin() + static_cast<std::ptrdiff_t>(n * d_model));
  return Tensor::from({total, d_model}, std::move(rows));
}

EncoderOutput run_encoder(std::span<const Tensor> inputs, const ModelConfig& cfg,
                          const EncoderParams& params, RngStream& rng, bool training,
                          std::vector<MoeLayerRecord>& records) {
  if (inputs.empty()) throw DimensionError("encoder: empty batch");
  std::vector<Tensor> parts;
  std::vector<std::size_t> lengths;
  for (const auto& x : inputs) {
    parts.push_back(nn::conv_subsample(x, params.subsample));
    lengths.push_back(parts.back().dim(0));
  }
  Tensor h = parts.size() == 1 ? parts[0] : concat_rows(parts);
  if (cfg.family == Family::kS2S) h = add(h, packed_positions(lengths, cfg.d_model));

  std::vector<nn::AttentionMask> masks;
  for (auto n : lengths) {
    masks.push_back(cfg.family == Family::kTT && cfg.streaming.enabled
                        ? nn::build_streaming_mask(n, cfg.streaming.left, cfg.streaming.right)
                        : nn::AttentionMask::full(n, n));
  }
  EncoderOutput out;
  out.segments = nn::segments_from_lengths(lengths);
  RngStream enc_rng = rng.fork("encoder");
  for (std::size_t l = 0; l < params.blocks.size(); ++l) {
    RngStream layer_rng = enc_rng.fork(l);
    nn::BlockOutput b = nn::encoder_block(h, out.segments, masks, encoder_block_config(cfg, l),
                                          params.blocks[l], layer_rng, training);
    h = b.y;
    if (b.moe) records.push_back({"encoder.layer" + std::to_string(l), std::move(*b.moe), out.segments});
  }
  out.packed = layer_norm(h, params.final_gain, params.final_bias);
  return out;
}

}  // namespace moeasr::models
