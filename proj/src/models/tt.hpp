// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Transformer transducer: audio encoder, LSTM label decoder and an additive
// joint network over the (frame, label) lattice.
//
// The output layer has vocab_size + 1 classes, one of which is the blank.
// Token ids stay in [0, vocab_size) everywhere outside this model; they are
// mapped around the blank class with token_to_class / class_to_token.

#pragma once

#include <vector>

#include "models/encoder.hpp"

namespace moeasr::models {

std::size_t token_to_class(std::size_t token, std::size_t blank_id);
std::size_t class_to_token(std::size_t cls, std::size_t blank_id);

struct LstmLayerParams {
  Tensor norm_gain, norm_bias;
  LstmWeights weights;
};

struct TTParams {
  EncoderParams encoder;
  Tensor embedding;  // [(V+1)×E], indexed by class; the blank row starts the sequence
  std::vector<LstmLayerParams> lstm;
  bool has_moe = false;
  Tensor moe_gain, moe_bias;
  nn::FeedForwardParams moe;
  Tensor joint_enc_weight, joint_enc_bias;  // [d×J], [J]
  Tensor joint_pred_weight;                 // [H×J]
  Tensor joint_out_weight, joint_out_bias;  // [J×(V+1)], [V+1]
};

nn::BlockConfig label_moe_config(const ModelConfig& cfg);
TTParams make_tt_params(ParamStore& store, const ModelConfig& cfg);

struct TTOutput {
  // One [T'_i×(U_i+1)×(V+1)] log-softmax lattice per utterance.
  std::vector<Tensor> joint_log_probs;
  std::vector<std::vector<std::size_t>> targets;  // class ids
  std::vector<MoeLayerRecord> moe_layers;
  EncoderOutput encoder;
};

TTOutput tt_forward(const Batch& batch, const TTParams& params, const ModelConfig& cfg,
                    RngStream& rng, bool training);

// Frame-synchronous greedy search: at every frame emit argmax labels until the
// blank wins or max_symbols_per_frame labels were emitted. Returns token ids.
std::vector<std::size_t> greedy_decode_tt(const Tensor& features, std::size_t language,
                                          const TTParams& params, const ModelConfig& cfg,
                                          std::size_t max_symbols_per_frame);

// Batched encoder pass, then the label search per utterance.
std::vector<std::vector<std::size_t>> greedy_decode_tt(std::span<const Tensor> features,
                                                       std::span<const std::size_t> languages,
                                                       const TTParams& params,
                                                       const ModelConfig& cfg,
                                                       std::size_t max_symbols_per_frame);

}  // namespace moeasr::models
