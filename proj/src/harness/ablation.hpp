// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "harness/trainer.hpp"

namespace moeasr::harness {

struct AblationVariant {
  std::string name;
  nlohmann::json patch;  // JSON merge patch applied to the base TrainConfig document
};

struct AblationRow {
  std::string name;
  std::string family;
  std::size_t experts = 0;  // 0 for a dense model
  std::size_t params = 0;
  bool streaming = false;
  bool language_id = false;
  bool label_moe = false;
  std::vector<double> language_error_rates;
  double overall_error_rate = 0.0;
  double drop_rate = 0.0;
  std::size_t steps = 0;
};

// Cartesian grid over the ablation axes. An expert count of 0 means
// dense; positive counts turn on MoE every `moe_every` layers (2 if the base
// config is dense).
std::vector<AblationVariant> ablation_grid(const TrainConfig& base,
                                           const std::vector<std::size_t>& experts,
                                           const std::vector<bool>& streaming,
                                           const std::vector<bool>& language_id,
                                           const std::vector<bool>& label_moe);

// Variants from a JSON array of {"name": ..., "patch": {...}} objects.
std::vector<AblationVariant> ablation_variants_from_json(const nlohmann::json& j);

TrainConfig apply_variant(const TrainConfig& base, const AblationVariant& variant);

// Trains every variant on the same corpus, seed and step budget, writing each
// run under base.output_dir/<name>, and scores it on a held-out test split.
std::vector<AblationRow> run_ablation(const TrainConfig& base,
                                      const std::vector<AblationVariant>& variants,
                                      std::size_t test_utterances);

// Columns: model, experts, params, streaming, lang_id, label_moe, one rate per
// language, overall, drop_rate, steps.
std::string ablation_csv(const std::vector<AblationRow>& rows, std::size_t num_languages);

}  // namespace moeasr::harness
