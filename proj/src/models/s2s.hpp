// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Encoder-decoder Transformer. The decoder reads [BOS, y_1 .. y_U] and is
// trained to predict [y_1 .. y_U, EOS]; BOS and EOS are the two classes
// appended after the vocabulary.

#pragma once

#include <vector>

#include "models/encoder.hpp"

namespace moeasr::models {

struct S2SParams {
  EncoderParams encoder;
  Tensor embedding;  // [(V+2)×d]
  std::vector<nn::DecoderBlockParams> blocks;
  Tensor final_gain, final_bias;
  Tensor out_weight, out_bias;  // [d×(V+2)], [V+2]
};

S2SParams make_s2s_params(ParamStore& store, const ModelConfig& cfg);

struct S2SOutput {
  Tensor logits;                     // [Σ(U_i+1) × (V+2)]
  std::vector<std::size_t> targets;  // next-token label of every logits row
  nn::Segments offsets;              // rows of utterance i
  std::vector<MoeLayerRecord> moe_layers;
};

S2SOutput s2s_forward(const Batch& batch, const S2SParams& params, const ModelConfig& cfg,
                      RngStream& rng, bool training);

// Argmax decoding from BOS until EOS or max_len tokens. BOS is never emitted.
std::vector<std::size_t> greedy_decode_s2s(const Tensor& features, std::size_t language,
                                           const S2SParams& params, const ModelConfig& cfg,
                                           std::size_t max_len);

// Same search for several utterances at once. The encoder sees the whole batch
// and the decoder all unfinished prefixes, so MoE capacity is per batch as in
// training.
std::vector<std::vector<std::size_t>> greedy_decode_s2s(std::span<const Tensor> features,
                                                        std::span<const std::size_t> languages,
                                                        const S2SParams& params,
                                                        const ModelConfig& cfg,
                                                        std::size_t max_len);

}  // namespace moeasr::models
