// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "losses/losses.hpp"
#include "models/s2s.hpp"
#include "models/tt.hpp"

namespace moeasr::models {

struct ParameterCount {
  std::size_t total = 0;
  std::size_t router = 0;   // gate weights of every MoE layer
  std::size_t experts = 0;  // all expert FFNs
  std::size_t moe_layers = 0;
};

// Counts without allocating, so paper-sized presets are fine.
ParameterCount count_parameters(const ModelConfig& cfg);
ParameterCount count_parameters(const ParamStore& store);
// Two linear maps with biases: d·d_ff + d_ff + d_ff·d + d.
std::size_t expert_ffn_parameters(std::size_t d_model, std::size_t d_ff);

struct ForwardResult {
  losses::LossBreakdown loss;
  std::vector<MoeLayerRecord> moe_layers;
};

struct DecodeOptions {
  std::size_t max_len = 64;               // s2s
  std::size_t max_symbols_per_frame = 4;  // tt
};

// A model of either family with its parameters.
class AsrModel {
 public:
  AsrModel(const ModelConfig& cfg, std::uint64_t seed);
  AsrModel(const AsrModel&) = delete;
  AsrModel& operator=(const AsrModel&) = delete;
  AsrModel(AsrModel&&) = default;

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // Task loss (label-smoothed cross-entropy or transducer loss, averaged over
  // utterances) plus one auxiliary loss per MoE layer.
  ForwardResult forward(const Batch& batch, RngStream& rng, bool training,
                        double label_smoothing) const;

  std::vector<std::size_t> decode(const Tensor& features, std::size_t language,
                                  const DecodeOptions& options = {}) const;
  // Greedy decoding of several utterances sharing one encoder pass.
  std::vector<std::vector<std::size_t>> decode(std::span<const Tensor> features,
                                               std::span<const std::size_t> languages,
                                               const DecodeOptions& options = {}) const;

  // Encoder output [T'×d_model] of one utterance in evaluation mode.
  Tensor encode(const Tensor& features, std::size_t language) const;

  const S2SParams& s2s() const { return *s2s_; }
  const TTParams& tt() const { return *tt_; }

 private:
  ModelConfig cfg_;
  ParamStore store_;
  std::optional<S2SParams> s2s_;
  std::optional<TTParams> tt_;
};

}  // namespace moeasr::models
