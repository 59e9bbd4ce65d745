// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "harness/corpus.hpp"
#include "models/config.hpp"
#include "models/model.hpp"

namespace moeasr::harness {

struct OptimizerConfig {
  std::string kind = "adamw";
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::size_t warmup_steps = 800;
  // Linear decay from lr at the end of warmup to 0 at this step; 0 = constant.
  std::size_t decay_steps = 0;
  double grad_clip = 0.0;  // global L2 norm bound, 0 = off
};

struct TrainConfig {
  models::ModelConfig model;
  SyntheticTask task;
  OptimizerConfig optimizer;
  std::size_t batch_size = 8;
  std::size_t max_steps = 1000;
  std::size_t eval_every = 250;  // 0 = only at the end
  std::uint64_t seed = 0;
  std::string output_dir = "runs";
  std::size_t train_utterances = 2000;
  std::size_t eval_utterances = 100;
  double label_smoothing = 0.1;
  // Language sampling weight ∝ n_l^temperature (1 = natural frequencies).
  double sampling_temperature = 0.5;
  // Stop after an evaluation whose overall error is at most this; < 0 = never.
  double target_error_rate = -1.0;
  models::DecodeOptions decode;

  void validate() const;
};

// Full document, including output_dir.
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Leaf paths of a JSON object as "a.b.c" with their values.
std::vector<std::pair<std::string, nlohmann::json>> flatten_json(const nlohmann::json& j);
// Sets the leaf at a dotted path, parsing `value` by the type already stored there.
void apply_override(nlohmann::json& root, const std::string& dotted_path, const std::string& value);

}  // namespace moeasr::harness
