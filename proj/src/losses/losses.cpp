// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include "losses/losses.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "tensor/ops.hpp"

namespace moeasr::losses {

namespace {

using detail::Node;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

struct Lattice {
  std::size_t frames, labels, classes;
  const double* lp;
  double at(std::size_t t, std::size_t u, std::size_t k) const {
    return lp[(t * (labels + 1) + u) * classes + k];
  }
};

Lattice check_lattice(const Tensor& joint, std::span<const std::size_t> target,
                      std::size_t blank_id, const char* op) {
  if (joint.rank() != 3) {
    throw DimensionError(std::string(op) + ": expected [T×(U+1)×(V+1)], got " +
                         shape_to_string(joint.shape()));
  }
  const std::size_t frames = joint.dim(0), classes = joint.dim(2);
  if (frames == 0) throw DimensionError(std::string(op) + ": zero frames");
  if (joint.dim(1) != target.size() + 1) {
    throw DimensionError(std::string(op) + ": lattice " + shape_to_string(joint.shape()) +
                         " for " + std::to_string(target.size()) + " labels");
  }
  if (blank_id >= classes) {
    throw ParameterError(std::string(op) + ": blank id " + std::to_string(blank_id) +
                         " outside " + std::to_string(classes) + " classes");
  }
  for (auto y : target) {
    if (y >= classes || y == blank_id) {
      throw ParameterError(std::string(op) + ": invalid label " + std::to_string(y));
    }
  }
  return {frames, target.size(), classes, joint.data().data()};
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets,
                     std::span<const std::size_t> offsets, double label_smoothing) {
  if (logits.rank() != 2) {
    throw DimensionError("cross_entropy: logits must be [n×V], got " +
                         shape_to_string(logits.shape()));
  }
  if (!(label_smoothing >= 0.0) || label_smoothing >= 1.0) {
    throw ParameterError("cross_entropy: label smoothing must lie in [0, 1)");
  }
  const std::size_t rows = logits.dim(0), vocab = logits.dim(1);
  if (targets.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(rows) + " rows");
  }
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != rows) {
    throw DimensionError("cross_entropy: utterance offsets do not cover the rows");
  }
  for (auto y : targets) {
    if (y >= vocab) {
      throw ParameterError("cross_entropy: target " + std::to_string(y) + " outside vocabulary " +
                           std::to_string(vocab));
    }
  }
  const std::size_t utterances = offsets.size() - 1;
  // Row weight: 1 / (utterances · rows of its utterance).
  std::vector<double> weight(rows, 0.0);
  for (std::size_t i = 0; i < utterances; ++i) {
    if (offsets[i + 1] < offsets[i]) throw DimensionError("cross_entropy: offsets decrease");
    const std::size_t n = offsets[i + 1] - offsets[i];
    for (std::size_t r = offsets[i]; r < offsets[i + 1]; ++r)
      weight[r] = 1.0 / static_cast<double>(utterances * n);
  }

  const double off = label_smoothing / static_cast<double>(vocab);
  const double on = 1.0 - label_smoothing + off;
  std::vector<double> probs(rows * vocab);
  auto x = logits.data();
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.data() + r * vocab;
    const double mx = *std::max_element(row, row + vocab);
    double z = 0.0;
    for (std::size_t k = 0; k < vocab; ++k) z += std::exp(row[k] - mx);
    const double lse = mx + std::log(z);
    double row_loss = 0.0;
    for (std::size_t k = 0; k < vocab; ++k) {
      const double logp = row[k] - lse;
      probs[r * vocab + k] = std::exp(logp);
      const double q = k == targets[r] ? on : off;
      if (q > 0.0) row_loss -= q * logp;
    }
    loss += weight[r] * row_loss;
  }
  std::vector<std::size_t> labels(targets.begin(), targets.end());
  return Tensor::make_result(
      {1}, {loss}, {logits},
      [rows, vocab, on, off, probs = std::move(probs), labels = std::move(labels),
       weight = std::move(weight)](Node& self) {
        Node& parent = *self.parents[0];
        if (!parent.requires_grad) return;
        auto& g = parent.ensure_grad();
        const double up = self.grad[0];
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t k = 0; k < vocab; ++k) {
            const double q = k == labels[r] ? on : off;
            g[r * vocab + k] += up * weight[r] * (probs[r * vocab + k] - q);
          }
      });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets,
                     double label_smoothing) {
  const std::size_t offsets[] = {0, logits.rank() == 2 ? logits.dim(0) : 0};
  return cross_entropy(logits, targets, offsets, label_smoothing);
}

Tensor rnnt_loss_forward(const Tensor& joint_log_probs, std::span<const std::size_t> target,
                         std::size_t blank_id) {
  const Lattice lat = check_lattice(joint_log_probs, target, blank_id, "rnnt_loss_forward");
  const std::size_t T = lat.frames, U = lat.labels;
  const std::size_t W = U + 1;
  std::vector<double> alpha(T * W, kNegInf), beta(T * W, kNegInf);

  alpha[0] = 0.0;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) continue;
      double a = kNegInf;
      if (t > 0) a = alpha[(t - 1) * W + u] + lat.at(t - 1, u, blank_id);
      if (u > 0) a = log_add(a, alpha[t * W + u - 1] + lat.at(t, u - 1, target[u - 1]));
      alpha[t * W + u] = a;
    }
  const double log_like = alpha[(T - 1) * W + U] + lat.at(T - 1, U, blank_id);

  beta[(T - 1) * W + U] = lat.at(T - 1, U, blank_id);
  for (std::size_t t = T; t-- > 0;)
    for (std::size_t u = W; u-- > 0;) {
      if (t == T - 1 && u == U) continue;
      double b = kNegInf;
      if (t + 1 < T) b = beta[(t + 1) * W + u] + lat.at(t, u, blank_id);
      if (u < U) b = log_add(b, beta[t * W + u + 1] + lat.at(t, u, target[u]));
      beta[t * W + u] = b;
    }

  std::vector<std::size_t> labels(target.begin(), target.end());
  return Tensor::make_result(
      {1}, {-log_like}, {joint_log_probs},
      [T, U, W, blank_id, log_like, alpha = std::move(alpha), beta = std::move(beta),
       labels = std::move(labels)](Node& self) {
        Node& parent = *self.parents[0];
        if (!parent.requires_grad) return;
        auto& g = parent.ensure_grad();
        const std::size_t classes = parent.shape[2];
        const double* lp = parent.data.data();
        const double up = self.grad[0];
        // dL/d lp(t,u,k) = -P(paths through that edge) / P(all paths)
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t u = 0; u <= U; ++u) {
            const std::size_t base = (t * W + u) * classes;
            const double a = alpha[t * W + u];
            double next_blank = kNegInf;
            if (t + 1 < T) next_blank = beta[(t + 1) * W + u];
            else if (u == U) next_blank = 0.0;
            if (next_blank != kNegInf) {
              g[base + blank_id] -= up * std::exp(a + lp[base + blank_id] + next_blank - log_like);
            }
            if (u < U) {
              const std::size_t k = labels[u];
              g[base + k] -= up * std::exp(a + lp[base + k] + beta[t * W + u + 1] - log_like);
            }
          }
      });
}

std::uint64_t rnnt_alignment_count(std::size_t frames, std::size_t labels) {
  if (frames == 0) return 0;
  // C(frames - 1 + labels, labels)
  std::uint64_t c = 1;
  for (std::size_t i = 1; i <= labels; ++i) c = c * (frames - 1 + i) / i;
  return c;
}

double rnnt_loss_bruteforce(const Tensor& joint_log_probs, std::span<const std::size_t> target,
                            std::size_t blank_id) {
  const Lattice lat = check_lattice(joint_log_probs, target, blank_id, "rnnt_loss_bruteforce");
  if (lat.frames + lat.labels > kBruteForceLimit) {
    throw ParameterError("rnnt_loss_bruteforce: T + U = " +
                         std::to_string(lat.frames + lat.labels) + " exceeds " +
                         std::to_string(kBruteForceLimit));
  }
  const std::size_t T = lat.frames, U = lat.labels;
  // Each alignment is a sequence of T-1+U moves before the final blank; bit i
  // set means move i emits a label.
  const std::size_t moves = T - 1 + U;
  double total = 0.0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << moves); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) != U) continue;
    std::size_t t = 0, u = 0;
    double logp = 0.0;
    for (std::size_t i = 0; i < moves; ++i) {
      if (mask >> i & 1) {
        logp += lat.at(t, u, target[u]);
        ++u;
      } else {
        logp += lat.at(t, u, blank_id);
        ++t;
      }
    }
    logp += lat.at(T - 1, U, blank_id);
    total += std::exp(logp);
  }
  return -std::log(total);
}

double LossBreakdown::aux_sum() const {
  double s = 0.0;
  for (const auto& a : aux) s += a.item();
  return s;
}

LossBreakdown combine(const Tensor& task, std::span<const Tensor> aux, std::size_t dropped_tokens,
                      std::size_t tokens) {
  LossBreakdown out;
  out.task = task;
  out.aux.assign(aux.begin(), aux.end());
  out.total = task;
  for (const auto& a : aux) out.total = add(out.total, a);
  out.dropped_tokens = dropped_tokens;
  out.tokens = tokens;
  return out;
}

}  // namespace moeasr::losses
