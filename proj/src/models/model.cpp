// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include "models/model.hpp"

#include "tensor/ops.hpp"

namespace moeasr::models {

std::size_t expert_ffn_parameters(std::size_t d_model, std::size_t d_ff) {
  return 2 * d_model * d_ff + d_ff + d_model;
}

ParameterCount count_parameters(const ParamStore& store) {
  ParameterCount c;
  for (const auto& [name, shape] : store.shapes()) {
    const std::size_t n = shape_numel(shape);
    c.total += n;
    if (name.find(".gate.weight") != std::string::npos) {
      c.router += n;
      ++c.moe_layers;
    } else if (name.find(".expert") != std::string::npos) {
      c.experts += n;
    }
  }
  return c;
}

ParameterCount count_parameters(const ModelConfig& cfg) {
  ParamStore store = ParamStore::shapes_only();
  if (cfg.family == Family::kS2S) {
    make_s2s_params(store, cfg);
  } else {
    make_tt_params(store, cfg);
  }
  return count_parameters(store);
}

AsrModel::AsrModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), store_(seed) {
  cfg_.validate();
  if (cfg_.family == Family::kS2S) {
    s2s_ = make_s2s_params(store_, cfg_);
  } else {
    tt_ = make_tt_params(store_, cfg_);
  }
}

ForwardResult AsrModel::forward(const Batch& batch, RngStream& rng, bool training,
                                double label_smoothing) const {
  if (batch.feature_dim != cfg_.d_feat) {
    throw DimensionError("model: batch feature dim " + std::to_string(batch.feature_dim) +
                         " but config d_feat " + std::to_string(cfg_.d_feat));
  }
  ForwardResult result;
  Tensor task;
  if (s2s_) {
    S2SOutput out = s2s_forward(batch, *s2s_, cfg_, rng, training);
    task = losses::cross_entropy(out.logits, out.targets, out.offsets, label_smoothing);
    result.moe_layers = std::move(out.moe_layers);
  } else {
    TTOutput out = tt_forward(batch, *tt_, cfg_, rng, training);
    for (std::size_t i = 0; i < out.joint_log_probs.size(); ++i) {
      Tensor l = losses::rnnt_loss_forward(out.joint_log_probs[i], out.targets[i], cfg_.blank_id);
      task = task.defined() ? add(task, l) : l;
    }
    task = scale(task, 1.0 / static_cast<double>(batch.size()));
    result.moe_layers = std::move(out.moe_layers);
  }
  std::vector<Tensor> aux;
  std::size_t dropped = 0, tokens = 0;
  for (const auto& rec : result.moe_layers) {
    aux.push_back(moe::aux_loss(rec.moe.stats, cfg_.router.alpha));
    dropped += rec.moe.plan.dropped_count();
    tokens += rec.moe.plan.tokens();
  }
  result.loss = losses::combine(task, aux, dropped, tokens);
  return result;
}

std::vector<std::size_t> AsrModel::decode(const Tensor& features, std::size_t language,
                                          const DecodeOptions& options) const {
  if (s2s_) return greedy_decode_s2s(features, language, *s2s_, cfg_, options.max_len);
  return greedy_decode_tt(features, language, *tt_, cfg_, options.max_symbols_per_frame);
}

std::vector<std::vector<std::size_t>> AsrModel::decode(std::span<const Tensor> features,
                                                       std::span<const std::size_t> languages,
                                                       const DecodeOptions& options) const {
  if (s2s_) return greedy_decode_s2s(features, languages, *s2s_, cfg_, options.max_len);
  return greedy_decode_tt(features, languages, *tt_, cfg_, options.max_symbols_per_frame);
}

Tensor AsrModel::encode(const Tensor& features, std::size_t language) const {
  NoGradGuard no_grad;
  RngStream rng;
  std::vector<MoeLayerRecord> records;
  const Tensor input = encoder_input(features, language, cfg_);
  const EncoderParams& enc = s2s_ ? s2s_->encoder : tt_->encoder;
  return run_encoder(std::span<const Tensor>(&input, 1), cfg_, enc, rng, false, records).packed;
}

}  // namespace moeasr::models
