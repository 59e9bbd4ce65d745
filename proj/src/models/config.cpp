// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include "models/config.hpp"

#include <algorithm>
#include <iterator>

namespace moeasr::models {

using nlohmann::json;

void ModelConfig::validate() const {
  if (d_feat == 0) throw ParameterError("model: d_feat must be positive");
  if (n_heads == 0 || d_model == 0 || d_model % n_heads != 0) {
    throw ParameterError("model: d_model " + std::to_string(d_model) + " not divisible by " +
                         std::to_string(n_heads) + " heads");
  }
  if (d_ff == 0 || conv_channels == 0) throw ParameterError("model: d_ff and conv_channels must be positive");
  if (vocab_size == 0) throw ParameterError("model: vocab_size must be positive");
  if (!(dropout_p >= 0.0) || dropout_p >= 1.0 || !(moe_dropout >= 0.0) || moe_dropout >= 1.0) {
    throw ParameterError("model: dropout probabilities must lie in [0, 1)");
  }
  if (moe_every > 0 || (family == Family::kTT && label_decoder.moe_projection)) router.validate();
  if (language_id.enabled && language_id.num_languages == 0) {
    throw ParameterError("model: language_id enabled with zero languages");
  }
  if (family == Family::kS2S) {
    if (decoder_layers == 0) throw ParameterError("model: s2s needs decoder_layers >= 1");
    if (streaming.enabled) throw ParameterError("model: streaming applies to the tt family only");
  } else {
    if (blank_id > vocab_size) {
      throw ParameterError("model: blank_id " + std::to_string(blank_id) + " must be < vocab_size + 1");
    }
    if (label_decoder.embed_dim == 0 || label_decoder.hidden == 0 || d_joint == 0) {
      throw ParameterError("model: label decoder and joint widths must be positive");
    }
    if (label_decoder.moe_projection && label_decoder.moe_d_ff == 0) {
      throw ParameterError("model: label decoder MoE needs moe_d_ff > 0");
    }
  }
}

std::size_t ModelConfig::input_dim() const {
  return d_feat + (language_id.enabled ? language_id.num_languages : 0);
}

std::size_t ModelConfig::output_classes() const {
  return family == Family::kS2S ? vocab_size + 2 : vocab_size + 1;
}

std::string family_name(Family family) { return family == Family::kS2S ? "s2s" : "tt"; }

Family parse_family(const std::string& name) {
  if (name == "s2s") return Family::kS2S;
  if (name == "tt") return Family::kTT;
  throw ParameterError("unknown model family '" + name + "' (expected s2s or tt)");
}

json router_to_json(const moe::RouterConfig& cfg) {
  return json{{"num_experts", cfg.num_experts},
           {"capacity_factor", cfg.capacity_factor},
           {"alpha", cfg.alpha},
           {"jitter_eps", cfg.jitter_eps}};
}

void router_from_json(const json& j, moe::RouterConfig& cfg) {
  cfg.num_experts = j.value("num_experts", cfg.num_experts);
  cfg.capacity_factor = j.value("capacity_factor", cfg.capacity_factor);
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.jitter_eps = j.value("jitter_eps", cfg.jitter_eps);
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"family", family_name(c.family)},
           {"d_feat", c.d_feat},
           {"d_model", c.d_model},
           {"n_heads", c.n_heads},
           {"encoder_layers", c.encoder_layers},
           {"decoder_layers", c.decoder_layers},
           {"label_decoder",
            {{"embed_dim", c.label_decoder.embed_dim},
             {"lstm_layers", c.label_decoder.lstm_layers},
             {"hidden", c.label_decoder.hidden},
             {"moe_projection", c.label_decoder.moe_projection},
             {"moe_d_ff", c.label_decoder.moe_d_ff}}},
           {"d_ff", c.d_ff},
           {"vocab_size", c.vocab_size},
           {"blank_id", c.blank_id},
           {"moe_every", c.moe_every},
           {"router", router_to_json(c.router)},
           {"moe_dropout", c.moe_dropout},
           {"streaming",
            {{"enabled", c.streaming.enabled}, {"left", c.streaming.left}, {"right", c.streaming.right}}},
           {"language_id",
            {{"enabled", c.language_id.enabled}, {"num_languages", c.language_id.num_languages}}},
           {"dropout_p", c.dropout_p},
           {"conv_channels", c.conv_channels},
           {"d_joint", c.d_joint},
           {"max_relative_distance", c.max_relative_distance}};
}

void from_json(const json& j, ModelConfig& c) {
  static const char* const known[] = {
      "family",     "d_feat",      "d_model",     "n_heads",       "encoder_layers",
      "decoder_layers", "label_decoder", "d_ff",   "vocab_size",    "blank_id",
      "moe_every",  "router",      "moe_dropout", "streaming",     "language_id",
      "dropout_p",  "conv_channels", "d_joint",   "max_relative_distance"};
  for (const auto& item : j.items()) {
    if (std::find(std::begin(known), std::end(known), item.key()) == std::end(known)) {
      throw ParameterError("model config: unknown field '" + item.key() + "'");
    }
  }
  if (j.contains("family")) c.family = parse_family(j.at("family").get<std::string>());
  c.d_feat = j.value("d_feat", c.d_feat);
  c.d_model = j.value("d_model", c.d_model);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
  c.decoder_layers = j.value("decoder_layers", c.decoder_layers);
  if (j.contains("label_decoder")) {
    const auto& ld = j.at("label_decoder");
    auto& d = c.label_decoder;
    d.embed_dim = ld.value("embed_dim", d.embed_dim);
    d.lstm_layers = ld.value("lstm_layers", d.lstm_layers);
    d.hidden = ld.value("hidden", d.hidden);
    d.moe_projection = ld.value("moe_projection", d.moe_projection);
    d.moe_d_ff = ld.value("moe_d_ff", d.moe_d_ff);
  }
  c.d_ff = j.value("d_ff", c.d_ff);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.blank_id = j.value("blank_id", c.blank_id);
  c.moe_every = j.value("moe_every", c.moe_every);
  if (j.contains("router")) router_from_json(j.at("router"), c.router);
  c.moe_dropout = j.value("moe_dropout", c.moe_dropout);
  if (j.contains("streaming")) {
    const auto& s = j.at("streaming");
    c.streaming.enabled = s.value("enabled", c.streaming.enabled);
    c.streaming.left = s.value("left", c.streaming.left);
    c.streaming.right = s.value("right", c.streaming.right);
  }
  if (j.contains("language_id")) {
    const auto& l = j.at("language_id");
    c.language_id.enabled = l.value("enabled", c.language_id.enabled);
    c.language_id.num_languages = l.value("num_languages", c.language_id.num_languages);
  }
  c.dropout_p = j.value("dropout_p", c.dropout_p);
  c.conv_channels = j.value("conv_channels", c.conv_channels);
  c.d_joint = j.value("d_joint", c.d_joint);
  c.max_relative_distance = j.value("max_relative_distance", c.max_relative_distance);
}

ModelConfig preset(const std::string& name) {
  ModelConfig c;
  if (name == "s2s-desk") {
    c.family = Family::kS2S;
    c.d_model = 64;
    c.d_ff = 128;
    c.moe_every = 2;
    c.router.num_experts = 4;
    c.conv_channels = 16;
    c.language_id = {true, 3};
    return c;
  }
  if (name == "tt-desk") {
    c.family = Family::kTT;
    c.d_model = 32;
    c.moe_every = 2;
    c.router.num_experts = 4;
    c.streaming = {true, 4, 2};
    c.conv_channels = 16;
    c.language_id = {true, 3};
    return c;
  }
  // Full-size dimensions: 80-dim filterbanks, 10014 BPE tokens, 8 heads,
  // 2048-wide FFNs, MoE on every second layer.
  c.d_feat = 80;
  c.n_heads = 8;
  c.d_ff = 2048;
  c.vocab_size = 10014;
  c.moe_every = 2;
  c.router.num_experts = 24;
  if (name == "s2s-paper" || name == "s2s-paper-e120") {
    c.family = Family::kS2S;
    if (name == "s2s-paper-e120") {
      c.router.num_experts = 120;
      c.moe_dropout = 0.4;
    }
    c.d_model = 512;
    c.encoder_layers = 18;
    c.decoder_layers = 6;
    c.conv_channels = 512;
    return c;
  }
  if (name == "tt-paper") {
    c.family = Family::kTT;
    c.d_model = 512;
    c.encoder_layers = 18;
    c.decoder_layers = 0;
    c.label_decoder = {320, 2, 1024, false, 1024};
    c.blank_id = c.vocab_size;
    c.streaming = {true, 18, 4};
    c.conv_channels = 512;
    c.d_joint = 512;
    return c;
  }
  throw ParameterError("unknown preset '" + name + "'");
}

std::vector<std::string> preset_names() { return {"s2s-desk", "tt-desk", "s2s-paper", "s2s-paper-e120", "tt-paper"}; }

}  // namespace moeasr::models
