// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include "models/batch.hpp"

#include <algorithm>
#include <string>

namespace moeasr::models {

std::size_t Batch::total_target_tokens() const {
  std::size_t n = 0;
  for (const auto& t : targets) n += t.size();
  return n;
}

Tensor Batch::frames(std::size_t i) const {
  const std::size_t len = feature_lengths.at(i);
  const auto begin = features.begin() + static_cast<std::ptrdiff_t>(i * max_frames * feature_dim);
  return Tensor::from({len, feature_dim},
                      std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(len * feature_dim)));
}

Batch make_batch(std::span<const Utterance* const> utterances) {
  if (utterances.empty()) throw DimensionError("make_batch: no utterances");
  Batch b;
  b.feature_dim = utterances.front()->feature_dim;
  for (const Utterance* u : utterances) {
    if (u->feature_dim != b.feature_dim || u->features.size() != u->frames * u->feature_dim) {
      throw DimensionError("make_batch: inconsistent feature dimensions");
    }
    if (u->frames == 0) throw DimensionError("make_batch: utterance without frames");
    b.max_frames = std::max(b.max_frames, u->frames);
  }
  b.features.assign(utterances.size() * b.max_frames * b.feature_dim, 0.0);
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const Utterance& u = *utterances[i];
    std::copy(u.features.begin(), u.features.end(),
              b.features.begin() + static_cast<std::ptrdiff_t>(i * b.max_frames * b.feature_dim));
    b.feature_lengths.push_back(u.frames);
    b.targets.push_back(u.tokens);
    b.language_ids.push_back(u.language);
  }
  return b;
}

Batch make_batch(std::span<const Utterance> utterances) {
  std::vector<const Utterance*> ptrs;
  for (const auto& u : utterances) ptrs.push_back(&u);
  return make_batch(ptrs);
}

Tensor inject_language_id(const Tensor& features, std::size_t language,
                          std::size_t num_languages) {
  if (language >= num_languages) {
    throw ParameterError("inject_language_id: language " + std::to_string(language) +
                         " outside [0, " + std::to_string(num_languages) + ")");
  }
  if (features.rank() != 2) {
    throw DimensionError("inject_language_id: features must be [T×d], got " +
                         shape_to_string(features.shape()));
  }
  const std::size_t frames = features.dim(0), dim = features.dim(1);
  const std::size_t width = dim + num_languages;
  std::vector<double> out(frames * width, 0.0);
  auto x = features.data();
  for (std::size_t t = 0; t < frames; ++t) {
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(t * dim), dim,
                out.begin() + static_cast<std::ptrdiff_t>(t * width));
    out[t * width + dim + language] = 1.0;
  }
  return Tensor::from({frames, width}, std::move(out));
}

Batch inject_language_id(const Batch& batch, std::size_t num_languages) {
  Batch out = batch;
  const std::size_t dim = batch.feature_dim, width = dim + num_languages;
  out.feature_dim = width;
  out.features.assign(batch.size() * batch.max_frames * width, 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::size_t lang = batch.language_ids[i];
    if (lang >= num_languages) {
      throw ParameterError("inject_language_id: language " + std::to_string(lang) +
                           " outside [0, " + std::to_string(num_languages) + ")");
    }
    for (std::size_t t = 0; t < batch.feature_lengths[i]; ++t) {
      const std::size_t src = (i * batch.max_frames + t) * dim;
      const std::size_t dst = (i * batch.max_frames + t) * width;
      std::copy_n(batch.features.begin() + static_cast<std::ptrdiff_t>(src), dim,
                  out.features.begin() + static_cast<std::ptrdiff_t>(dst));
      out.features[dst + dim + lang] = 1.0;
    }
  }
  return out;
}

}  // namespace moeasr::models
