// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic multi-language transduction data. Every token owns a fixed random
// feature template; each language assigns templates to tokens through its own
// permutation, so the same token sounds different in every language. An
// utterance is a token string rendered as templates repeated 2-4 frames each,
// plus Gaussian noise.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "models/batch.hpp"
#include "tensor/rng.hpp"

namespace moeasr::harness {

struct SyntheticTask {
  std::size_t num_languages = 3;
  std::size_t vocab_size = 16;
  std::size_t feature_dim = 16;
  double noise_scale = 0.1;
  std::size_t min_tokens = 3;
  std::size_t max_tokens = 8;
  std::size_t min_repeat = 2;
  std::size_t max_repeat = 4;
  // Relative share of utterances per language; empty means equal shares.
  std::vector<double> language_shares;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticTask& task);
void from_json(const nlohmann::json& j, SyntheticTask& task);

struct EmissionMaps {
  std::vector<double> templates;                  // [vocab×feature_dim]
  std::vector<std::vector<std::size_t>> mapping;  // mapping[lang][token] = template row
};

EmissionMaps build_emission_maps(const SyntheticTask& task);

// Deterministic in (task.seed, split); different splits never share draws.
std::vector<models::Utterance> generate_corpus(const SyntheticTask& task,
                                               std::size_t num_utterances,
                                               const std::string& split);

// Renders a fixed token string with explicit repeat counts (no sampling).
models::Utterance render_utterance(const SyntheticTask& task, const EmissionMaps& maps,
                                   std::size_t language, const std::vector<std::size_t>& tokens,
                                   const std::vector<std::size_t>& repeats, RngStream& noise);

// JSON-lines corpus file: a header line {"task": ...} then one utterance per line.
void write_corpus(const std::string& path, const SyntheticTask& task,
                  const std::vector<models::Utterance>& utterances);
std::vector<models::Utterance> read_corpus(const std::string& path, SyntheticTask* task = nullptr);

}  // namespace moeasr::harness
