// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Audio encoder shared by both model families: optional language-ID
// injection, convolutional subsampling, then a stack of pre-LN blocks over the
// packed utterances of a batch.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "models/batch.hpp"
#include "models/config.hpp"
#include "nn/blocks.hpp"
#include "nn/subsample.hpp"

namespace moeasr::models {

struct MoeLayerRecord {
  std::string name;
  moe::MoeOutput moe;
  nn::Segments segments;  // routed rows of utterance i
};

nn::BlockConfig encoder_block_config(const ModelConfig& cfg, std::size_t layer);
nn::BlockConfig decoder_block_config(const ModelConfig& cfg, std::size_t layer);

struct EncoderParams {
  nn::SubsampleParams subsample;
  std::vector<nn::EncoderBlockParams> blocks;
  Tensor final_gain, final_bias;
};

EncoderParams make_encoder_params(ParamStore& store, const ModelConfig& cfg);

struct EncoderOutput {
  Tensor packed;  // [ΣT'_i × d_model]
  nn::Segments segments;
};

// Frames [T×d_feat] with the language one-hot appended when enabled.
Tensor encoder_input(const Tensor& features, std::size_t language, const ModelConfig& cfg);
std::vector<Tensor> encoder_inputs(const Batch& batch, const ModelConfig& cfg);

// Constant sinusoidal rows for packed sequences of the given lengths.
Tensor packed_positions(std::span<const std::size_t> lengths, std::size_t d_model);

EncoderOutput run_encoder(std::span<const Tensor> inputs, const ModelConfig& cfg,
                          const EncoderParams& params, RngStream& rng, bool training,
                          std::vector<MoeLayerRecord>& records);

}  // namespace moeasr::models
