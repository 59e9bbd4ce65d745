// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "models/model.hpp"

namespace moeasr::harness {

// Levenshtein distance with unit substitution, insertion and deletion costs.
std::size_t edit_distance(std::span<const std::size_t> reference,
                          std::span<const std::size_t> hypothesis);

struct LanguageScore {
  std::size_t utterances = 0;
  std::size_t errors = 0;
  std::size_t reference_tokens = 0;
  double error_rate = 0.0;
  double dispatch_entropy = 0.0;  // nats, mean over MoE layers
};

struct EvalReport {
  std::vector<LanguageScore> languages;
  std::size_t errors = 0;
  std::size_t reference_tokens = 0;
  // Σ errors / Σ reference tokens, i.e. per-language rates weighted by their
  // reference token counts.
  double overall_error_rate = 0.0;
  std::size_t exact_matches = 0;
  std::size_t routed_tokens = 0;
  std::size_t dropped_tokens = 0;
  double drop_rate = 0.0;
  double dispatch_entropy = 0.0;  // mean over languages with routed tokens

  double token_accuracy() const { return 1.0 - overall_error_rate; }
};

// Expert dispatch counts [layer][language][expert]; dropped tokens do not count.
using DispatchHistogram = std::vector<std::vector<std::vector<double>>>;
DispatchHistogram dispatch_histogram(std::span<const models::MoeLayerRecord> layers,
                                     std::span<const std::size_t> languages,
                                     std::size_t num_languages);
// Shannon entropy in nats of a histogram.
double entropy(std::span<const double> counts);

struct EvalOptions {
  models::DecodeOptions decode;
  std::size_t batch_size = 16;  // for the teacher-forced routing pass
};

// Greedy-decodes every utterance and scores it; routing statistics come from
// a teacher-forced evaluation-mode pass over the same utterances.
EvalReport evaluate(const models::AsrModel& model, std::span<const models::Utterance> corpus,
                    std::size_t num_languages, const EvalOptions& options = {});

nlohmann::json to_json(const EvalReport& report);

}  // namespace moeasr::harness
