// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "moe/router.hpp"

namespace moeasr::models {

enum class Family { kS2S, kTT };

struct LabelDecoderConfig {
  std::size_t embed_dim = 32;
  std::size_t lstm_layers = 1;
  std::size_t hidden = 64;
  // MoE FFN after the LSTM stack, routed with ModelConfig::router.
  bool moe_projection = false;
  std::size_t moe_d_ff = 64;
};

struct StreamingConfig {
  bool enabled = false;
  std::size_t left = 18;
  std::size_t right = 4;
};

struct LanguageIdConfig {
  bool enabled = false;
  std::size_t num_languages = 0;
};

struct ModelConfig {
  Family family = Family::kS2S;
  std::size_t d_feat = 16;
  std::size_t d_model = 32;
  std::size_t n_heads = 4;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 1;  // s2s
  LabelDecoderConfig label_decoder;  // tt
  std::size_t d_ff = 64;
  std::size_t vocab_size = 16;
  std::size_t blank_id = 16;  // tt; class index in [0, vocab_size]
  std::size_t moe_every = 0;
  moe::RouterConfig router;
  double moe_dropout = 0.1;
  StreamingConfig streaming;  // tt
  LanguageIdConfig language_id;
  double dropout_p = 0.1;
  std::size_t conv_channels = 4;
  std::size_t d_joint = 32;  // tt
  // Clip distance of relative attention when not streaming (tt).
  std::size_t max_relative_distance = 16;

  void validate() const;

  // Width of a frame after language-ID injection.
  std::size_t input_dim() const;
  // s2s: vocab + BOS + EOS; tt: vocab + blank.
  std::size_t output_classes() const;
  std::size_t bos_id() const { return vocab_size; }
  std::size_t eos_id() const { return vocab_size + 1; }
};

std::string family_name(Family family);
Family parse_family(const std::string& name);

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);
nlohmann::json router_to_json(const moe::RouterConfig& cfg);
void router_from_json(const nlohmann::json& j, moe::RouterConfig& cfg);

// "s2s-paper", "tt-paper" carry published dimensions ("s2s-paper-e120" is
// the 120-expert variant with MoE dropout 0.4); "s2s-desk", "tt-desk" are
// small enough to train on one core.
ModelConfig preset(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace moeasr::models
