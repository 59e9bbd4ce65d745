// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "tensor/tensor.hpp"

namespace moeasr::models {

struct Utterance {
  std::size_t frames = 0;
  std::size_t feature_dim = 0;
  std::vector<double> features;  // [frames×feature_dim]
  std::vector<std::size_t> tokens;
  std::size_t language = 0;
};

// Utterances padded to a common frame count. Padding frames are zero and are
// never read by the models, which only see the first feature_lengths[i] frames.
struct Batch {
  std::size_t max_frames = 0;
  std::size_t feature_dim = 0;
  std::vector<double> features;  // [B×max_frames×feature_dim]
  std::vector<std::size_t> feature_lengths;
  std::vector<std::vector<std::size_t>> targets;
  std::vector<std::size_t> language_ids;

  std::size_t size() const { return feature_lengths.size(); }
  std::size_t target_length(std::size_t i) const { return targets[i].size(); }
  std::size_t total_target_tokens() const;
  // Unpadded frames of utterance i, [feature_lengths[i]×feature_dim].
  Tensor frames(std::size_t i) const;
};

Batch make_batch(std::span<const Utterance* const> utterances);
Batch make_batch(std::span<const Utterance> utterances);

// Appends the one-hot code of `language` to every frame: [T×d] -> [T×(d+L)].
Tensor inject_language_id(const Tensor& features, std::size_t language,
                          std::size_t num_languages);
Batch inject_language_id(const Batch& batch, std::size_t num_languages);

}  // namespace moeasr::models
