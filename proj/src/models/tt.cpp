// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include "models/tt.hpp"

#include <algorithm>

#include "tensor/ops.hpp"

namespace moeasr::models {

namespace {

void require_tt(const ModelConfig& cfg) {
  if (cfg.family != Family::kTT) throw ParameterError("tt model used with an s2s config");
}

// One step of the LSTM stack for B parallel sequences. Each layer applies
// layer norm to its input, and adds a residual when the widths agree.
Tensor lstm_stack_step(const Tensor& embedded, std::vector<LstmState>& states,
                       const TTParams& params, const ModelConfig& cfg, RngStream& rng,
                       bool training) {
  Tensor x = embedded;
  for (std::size_t l = 0; l < params.lstm.size(); ++l) {
    const LstmLayerParams& p = params.lstm[l];
    states[l] = lstm_cell(layer_norm(x, p.norm_gain, p.norm_bias), states[l], p.weights);
    RngStream drop_rng = rng.fork(l);
    Tensor h = dropout(states[l].h, cfg.dropout_p, drop_rng, training);
    x = x.dim(1) == h.dim(1) ? add(x, h) : h;
  }
  return x;
}

std::vector<LstmState> zero_states(const TTParams& params, const ModelConfig& cfg,
                                   std::size_t rows) {
  const Shape shape{rows, cfg.label_decoder.hidden};
  return std::vector<LstmState>(params.lstm.size(), {Tensor::zeros(shape), Tensor::zeros(shape)});
}

// Label decoder over class-id sequences that start with the blank.
// Returns packed rows [Σ len_i × width].
Tensor run_label_decoder(const std::vector<std::vector<std::size_t>>& inputs,
                         const TTParams& params, const ModelConfig& cfg, RngStream& rng,
                         bool training, std::vector<MoeLayerRecord>& records) {
  const std::size_t batch = inputs.size();
  std::size_t longest = 0;
  for (const auto& seq : inputs) longest = std::max(longest, seq.size());
  std::vector<LstmState> states = zero_states(params, cfg, batch);
  RngStream lstm_rng = rng.fork("label_lstm");
  std::vector<Tensor> steps;
  for (std::size_t u = 0; u < longest; ++u) {
    std::vector<std::size_t> ids(batch, cfg.blank_id);
    for (std::size_t b = 0; b < batch; ++b)
      if (u < inputs[b].size()) ids[b] = inputs[b][u];
    RngStream step_rng = lstm_rng.fork(u);
    steps.push_back(lstm_stack_step(gather_rows(params.embedding, ids), states, params, cfg,
                                    step_rng, training));
  }
  // Step-major rows u·B + b back to utterance-major packed rows.
  Tensor all = steps.size() == 1 ? steps[0] : concat_rows(steps);
  std::vector<std::size_t> order;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t u = 0; u < inputs[b].size(); ++u) order.push_back(u * batch + b);
  Tensor packed = gather_rows(all, order);
  if (params.has_moe) {
    RngStream moe_rng = rng.fork("label_moe");
    nn::BlockOutput m = nn::ffn_sublayer(packed, params.moe_gain, params.moe_bias, params.moe,
                                         label_moe_config(cfg), moe_rng, training);
    packed = m.y;
    std::vector<std::size_t> lengths;
    for (const auto& seq : inputs) lengths.push_back(seq.size());
    records.push_back({"label.moe", std::move(*m.moe), nn::segments_from_lengths(lengths)});
  }
  return packed;
}

std::size_t label_width(const ModelConfig& cfg) {
  const auto& ld = cfg.label_decoder;
  return ld.lstm_layers == 0 ? ld.embed_dim : ld.hidden;
}

}  // namespace

std::size_t token_to_class(std::size_t token, std::size_t blank_id) {
  return token < blank_id ? token : token + 1;
}

std::size_t class_to_token(std::size_t cls, std::size_t blank_id) {
  if (cls == blank_id) throw ParameterError("class_to_token: blank has no token");
  return cls < blank_id ? cls : cls - 1;
}

nn::BlockConfig label_moe_config(const ModelConfig& cfg) {
  nn::BlockConfig b;
  b.d_model = label_width(cfg);
  b.n_heads = 1;
  b.d_ff = cfg.label_decoder.moe_d_ff;
  b.dropout_p = cfg.dropout_p;
  b.ffn_dropout = cfg.moe_dropout;
  b.ffn_kind = nn::FfnKind::kMoe;
  b.router = cfg.router;
  return b;
}

TTParams make_tt_params(ParamStore& store, const ModelConfig& cfg) {
  require_tt(cfg);
  cfg.validate();
  TTParams p;
  p.encoder = make_encoder_params(store, cfg);
  const auto& ld = cfg.label_decoder;
  const std::size_t classes = cfg.output_classes();
  p.embedding = store.create("label.embed", {classes, ld.embed_dim}, Init::kNormal);
  std::size_t in = ld.embed_dim;
  for (std::size_t l = 0; l < ld.lstm_layers; ++l) {
    const std::string prefix = "label.lstm" + std::to_string(l);
    LstmLayerParams layer;
    layer.norm_gain = store.create(prefix + ".norm.gain", {in}, Init::kOnes);
    layer.norm_bias = store.create(prefix + ".norm.bias", {in}, Init::kZeros);
    layer.weights.input =
        store.create(prefix + ".input.weight", {in, 4 * ld.hidden}, Init::kUniformFanIn);
    layer.weights.hidden =
        store.create(prefix + ".hidden.weight", {ld.hidden, 4 * ld.hidden}, Init::kUniformFanIn);
    layer.weights.bias = store.create(prefix + ".bias", {4 * ld.hidden}, Init::kZeros);
    p.lstm.push_back(layer);
    in = ld.hidden;
  }
  const std::size_t width = label_width(cfg);
  if (ld.moe_projection) {
    p.has_moe = true;
    p.moe_gain = store.create("label.moe_norm.gain", {width}, Init::kOnes);
    p.moe_bias = store.create("label.moe_norm.bias", {width}, Init::kZeros);
    p.moe = nn::make_ffn_params(store, "label.moe", label_moe_config(cfg));
  }
  p.joint_enc_weight =
      store.create("joint.encoder.weight", {cfg.d_model, cfg.d_joint}, Init::kUniformFanIn);
  p.joint_enc_bias = store.create("joint.encoder.bias", {cfg.d_joint}, Init::kZeros);
  p.joint_pred_weight =
      store.create("joint.label.weight", {width, cfg.d_joint}, Init::kUniformFanIn);
  p.joint_out_weight =
      store.create("joint.out.weight", {cfg.d_joint, classes}, Init::kUniformFanIn);
  p.joint_out_bias = store.create("joint.out.bias", {classes}, Init::kZeros);
  return p;
}

TTOutput tt_forward(const Batch& batch, const TTParams& params, const ModelConfig& cfg,
                    RngStream& rng, bool training) {
  require_tt(cfg);
  TTOutput out;
  const std::vector<Tensor> inputs = encoder_inputs(batch, cfg);
  out.encoder = run_encoder(inputs, cfg, params.encoder, rng, training, out.moe_layers);

  std::vector<std::vector<std::size_t>> label_inputs;
  std::vector<std::size_t> lengths;
  for (const auto& target : batch.targets) {
    std::vector<std::size_t> in{cfg.blank_id}, classes;
    for (auto y : target) {
      if (y >= cfg.vocab_size) {
        throw ParameterError("tt: target " + std::to_string(y) + " outside vocabulary " +
                             std::to_string(cfg.vocab_size));
      }
      classes.push_back(token_to_class(y, cfg.blank_id));
      in.push_back(classes.back());
    }
    lengths.push_back(in.size());
    label_inputs.push_back(std::move(in));
    out.targets.push_back(std::move(classes));
  }
  const Tensor pred = run_label_decoder(label_inputs, params, cfg, rng, training, out.moe_layers);

  const Tensor enc_proj = linear(out.encoder.packed, params.joint_enc_weight, params.joint_enc_bias);
  const Tensor pred_proj = linear(pred, params.joint_pred_weight, Tensor());
  const nn::Segments label_segments = nn::segments_from_lengths(lengths);
  const std::size_t classes = cfg.output_classes();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::size_t t0 = out.encoder.segments[i], t1 = out.encoder.segments[i + 1];
    const std::size_t u0 = label_segments[i], u1 = label_segments[i + 1];
    Tensor fused = outer_add(slice_rows(enc_proj, t0, t1), slice_rows(pred_proj, u0, u1));
    Tensor logits = linear(relu(fused), params.joint_out_weight, params.joint_out_bias);
    out.joint_log_probs.push_back(reshape(log_softmax(logits), {t1 - t0, u1 - u0, classes}));
  }
  return out;
}

namespace {

// Label search over one utterance's projected encoder frames [T'×d_joint].
std::vector<std::size_t> greedy_search_tt(const Tensor& enc_proj, const TTParams& params,
                                          const ModelConfig& cfg,
                                          std::size_t max_symbols_per_frame, RngStream& rng) {
  std::vector<LstmState> states = zero_states(params, cfg, 1);
  auto advance = [&](std::size_t cls) {
    const std::size_t id[] = {cls};
    Tensor h = lstm_stack_step(gather_rows(params.embedding, id), states, params, cfg, rng, false);
    if (params.has_moe) {
      h = nn::ffn_sublayer(h, params.moe_gain, params.moe_bias, params.moe, label_moe_config(cfg),
                           rng, false)
              .y;
    }
    return linear(h, params.joint_pred_weight, Tensor());
  };

  std::vector<std::size_t> tokens;
  Tensor pred = advance(cfg.blank_id);
  const std::size_t classes = cfg.output_classes();
  for (std::size_t t = 0; t < enc_proj.dim(0); ++t) {
    const Tensor frame = slice_rows(enc_proj, t, t + 1);
    for (std::size_t s = 0; s < max_symbols_per_frame; ++s) {
      const Tensor logits =
          linear(relu(add(frame, pred)), params.joint_out_weight, params.joint_out_bias);
      auto row = logits.data();
      const std::size_t best = static_cast<std::size_t>(
          std::max_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(classes)) -
          row.begin());
      if (best == cfg.blank_id) break;
      tokens.push_back(class_to_token(best, cfg.blank_id));
      pred = advance(best);
    }
  }
  return tokens;
}

}  // namespace

std::vector<std::size_t> greedy_decode_tt(const Tensor& features, std::size_t language,
                                          const TTParams& params, const ModelConfig& cfg,
                                          std::size_t max_symbols_per_frame) {
  return greedy_decode_tt(std::span<const Tensor>(&features, 1),
                          std::span<const std::size_t>(&language, 1), params, cfg,
                          max_symbols_per_frame)[0];
}

std::vector<std::vector<std::size_t>> greedy_decode_tt(std::span<const Tensor> features,
                                                       std::span<const std::size_t> languages,
                                                       const TTParams& params,
                                                       const ModelConfig& cfg,
                                                       std::size_t max_symbols_per_frame) {
  require_tt(cfg);
  if (max_symbols_per_frame == 0) {
    throw ParameterError("greedy_decode_tt: max_symbols_per_frame must be >= 1");
  }
  if (features.size() != languages.size()) {
    throw DimensionError("greedy_decode_tt: " + std::to_string(features.size()) +
                         " utterances but " + std::to_string(languages.size()) + " languages");
  }
  std::vector<std::vector<std::size_t>> out;
  if (features.empty()) return out;
  NoGradGuard no_grad;
  RngStream rng;
  std::vector<MoeLayerRecord> records;
  std::vector<Tensor> inputs;
  for (std::size_t i = 0; i < features.size(); ++i)
    inputs.push_back(encoder_input(features[i], languages[i], cfg));
  const EncoderOutput enc = run_encoder(inputs, cfg, params.encoder, rng, false, records);
  const Tensor enc_proj = linear(enc.packed, params.joint_enc_weight, params.joint_enc_bias);
  for (std::size_t i = 0; i < features.size(); ++i) {
    out.push_back(greedy_search_tt(slice_rows(enc_proj, enc.segments[i], enc.segments[i + 1]),
                                   params, cfg, max_symbols_per_frame, rng));
  }
  return out;
}

}  // namespace moeasr::models
