// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include "models/s2s.hpp"

#include <numeric>

#include "tensor/ops.hpp"

namespace moeasr::models {

namespace {

void require_s2s(const ModelConfig& cfg) {
  if (cfg.family != Family::kS2S) throw ParameterError("s2s model used with a tt config");
}

// Decoder stack over packed token prefixes; returns logits for every row.
Tensor run_decoder(const std::vector<std::vector<std::size_t>>& inputs, const EncoderOutput& enc,
                   const S2SParams& params, const ModelConfig& cfg, RngStream& rng, bool training,
                   std::vector<MoeLayerRecord>& records) {
  std::vector<std::size_t> ids, lengths;
  for (const auto& seq : inputs) {
    ids.insert(ids.end(), seq.begin(), seq.end());
    lengths.push_back(seq.size());
  }
  Tensor x = add(gather_rows(params.embedding, ids), packed_positions(lengths, cfg.d_model));
  const nn::Segments segments = nn::segments_from_lengths(lengths);
  std::vector<nn::AttentionMask> self_masks, cross_masks;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    self_masks.push_back(nn::AttentionMask::causal(lengths[i]));
    cross_masks.push_back(
        nn::AttentionMask::full(lengths[i], enc.segments[i + 1] - enc.segments[i]));
  }
  RngStream dec_rng = rng.fork("decoder");
  for (std::size_t l = 0; l < params.blocks.size(); ++l) {
    RngStream layer_rng = dec_rng.fork(l);
    nn::BlockOutput b =
        nn::decoder_block(x, segments, enc.packed, enc.segments, self_masks, cross_masks,
                          decoder_block_config(cfg, l), params.blocks[l], layer_rng, training);
    x = b.y;
    if (b.moe) records.push_back({"decoder.layer" + std::to_string(l), std::move(*b.moe), segments});
  }
  return linear(layer_norm(x, params.final_gain, params.final_bias), params.out_weight,
                params.out_bias);
}

}  // namespace

S2SParams make_s2s_params(ParamStore& store, const ModelConfig& cfg) {
  require_s2s(cfg);
  cfg.validate();
  S2SParams p;
  p.encoder = make_encoder_params(store, cfg);
  const std::size_t classes = cfg.output_classes();
  p.embedding = store.create("decoder.embed", {classes, cfg.d_model}, Init::kNormal);
  for (std::size_t l = 0; l < cfg.decoder_layers; ++l) {
    p.blocks.push_back(nn::make_decoder_block_params(store, "decoder.layer" + std::to_string(l),
                                                     decoder_block_config(cfg, l)));
  }
  p.final_gain = store.create("decoder.final_norm.gain", {cfg.d_model}, Init::kOnes);
  p.final_bias = store.create("decoder.final_norm.bias", {cfg.d_model}, Init::kZeros);
  p.out_weight = store.create("decoder.out.weight", {cfg.d_model, classes}, Init::kUniformFanIn);
  p.out_bias = store.create("decoder.out.bias", {classes}, Init::kZeros);
  return p;
}

S2SOutput s2s_forward(const Batch& batch, const S2SParams& params, const ModelConfig& cfg,
                      RngStream& rng, bool training) {
  require_s2s(cfg);
  S2SOutput out;
  const std::vector<Tensor> inputs = encoder_inputs(batch, cfg);
  const EncoderOutput enc = run_encoder(inputs, cfg, params.encoder, rng, training, out.moe_layers);

  std::vector<std::vector<std::size_t>> dec_inputs;
  std::vector<std::size_t> lengths;
  for (const auto& target : batch.targets) {
    std::vector<std::size_t> in{cfg.bos_id()};
    for (auto y : target) {
      if (y >= cfg.vocab_size) {
        throw ParameterError("s2s: target " + std::to_string(y) + " outside vocabulary " +
                             std::to_string(cfg.vocab_size));
      }
      in.push_back(y);
      out.targets.push_back(y);
    }
    out.targets.push_back(cfg.eos_id());
    lengths.push_back(in.size());
    dec_inputs.push_back(std::move(in));
  }
  out.offsets = nn::segments_from_lengths(lengths);
  out.logits = run_decoder(dec_inputs, enc, params, cfg, rng, training, out.moe_layers);
  return out;
}

std::vector<std::size_t> greedy_decode_s2s(const Tensor& features, std::size_t language,
                                           const S2SParams& params, const ModelConfig& cfg,
                                           std::size_t max_len) {
  return greedy_decode_s2s(std::span<const Tensor>(&features, 1),
                           std::span<const std::size_t>(&language, 1), params, cfg, max_len)[0];
}

std::vector<std::vector<std::size_t>> greedy_decode_s2s(std::span<const Tensor> features,
                                                        std::span<const std::size_t> languages,
                                                        const S2SParams& params,
                                                        const ModelConfig& cfg,
                                                        std::size_t max_len) {
  require_s2s(cfg);
  if (features.size() != languages.size()) {
    throw DimensionError("greedy_decode_s2s: " + std::to_string(features.size()) +
                         " utterances but " + std::to_string(languages.size()) + " languages");
  }
  std::vector<std::vector<std::size_t>> out(features.size());
  if (max_len == 0 || features.empty()) return out;
  NoGradGuard no_grad;
  RngStream rng;
  std::vector<MoeLayerRecord> records;
  std::vector<Tensor> inputs;
  for (std::size_t i = 0; i < features.size(); ++i)
    inputs.push_back(encoder_input(features[i], languages[i], cfg));
  const EncoderOutput enc = run_encoder(inputs, cfg, params.encoder, rng, false, records);

  std::vector<std::size_t> active(features.size());
  std::iota(active.begin(), active.end(), std::size_t{0});
  const std::size_t classes = cfg.output_classes();
  while (!active.empty()) {
    EncoderOutput memory;
    std::vector<Tensor> parts;
    std::vector<std::size_t> frames;
    std::vector<std::vector<std::size_t>> prefixes;
    for (std::size_t i : active) {
      parts.push_back(slice_rows(enc.packed, enc.segments[i], enc.segments[i + 1]));
      frames.push_back(enc.segments[i + 1] - enc.segments[i]);
      prefixes.push_back({cfg.bos_id()});
      prefixes.back().insert(prefixes.back().end(), out[i].begin(), out[i].end());
    }
    memory.packed = active.size() == features.size() ? enc.packed : concat_rows(parts);
    memory.segments = nn::segments_from_lengths(frames);
    records.clear();
    const Tensor logits = run_decoder(prefixes, memory, params, cfg, rng, false, records);

    std::vector<std::size_t> still_active;
    std::size_t row = 0;
    for (std::size_t k = 0; k < active.size(); ++k) {
      row += prefixes[k].size();
      const auto scores = logits.data().subspan((row - 1) * classes, classes);
      std::size_t best = cfg.eos_id();
      for (std::size_t c = 0; c < cfg.vocab_size; ++c)
        if (scores[c] > scores[best]) best = c;
      if (best == cfg.eos_id()) continue;
      auto& hyp = out[active[k]];
      hyp.push_back(best);
      if (hyp.size() < max_len) still_active.push_back(active[k]);
    }
    active = std::move(still_active);
  }
  return out;
}

}  // namespace moeasr::models
