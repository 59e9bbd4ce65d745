// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tensor/tensor.hpp"

namespace moeasr::losses {

inline constexpr double kDefaultLabelSmoothing = 0.1;

// Label-smoothed cross-entropy of packed rows. logits [n×V]; row r has target
// targets[r]. Rows are grouped into utterances by `offsets` (utterance i owns
// rows [offsets[i], offsets[i+1])); the loss is the per-utterance mean over
// rows, averaged over utterances. The smoothed target puts 1 - s + s/V on the
// label and s/V everywhere else.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets,
                     std::span<const std::size_t> offsets, double label_smoothing);
// Single utterance: mean over all rows.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets,
                     double label_smoothing);

// Transducer negative log-likelihood by the forward algorithm.
// joint_log_probs is [T×(U+1)×(V+1)], already log-softmax normalized over the
// last axis. Every alignment ends with a blank emitted from frame T-1 after
// the last label.
Tensor rnnt_loss_forward(const Tensor& joint_log_probs, std::span<const std::size_t> target,
                         std::size_t blank_id);

// Same quantity by summing every alignment explicitly; T + U must not exceed
// kBruteForceLimit.
inline constexpr std::size_t kBruteForceLimit = 12;
double rnnt_loss_bruteforce(const Tensor& joint_log_probs, std::span<const std::size_t> target,
                            std::size_t blank_id);
std::uint64_t rnnt_alignment_count(std::size_t frames, std::size_t labels);

struct LossBreakdown {
  Tensor task;
  std::vector<Tensor> aux;
  Tensor total;
  std::size_t dropped_tokens = 0;
  std::size_t tokens = 0;

  double aux_sum() const;
};

// total = task + Σ aux.
LossBreakdown combine(const Tensor& task, std::span<const Tensor> aux,
                      std::size_t dropped_tokens = 0, std::size_t tokens = 0);

}  // namespace moeasr::losses
