// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Switch (top-1) mixture-of-experts routing with a per-batch expert capacity.
//
// Tokens are routed to the argmax of the gate softmax. Tokens claim slots in
// their expert's buffer in batch order; once an expert holds `capacity`
// tokens, later tokens choosing it are dropped. A dropped token gets a zero
// row from the MoE layer, so the enclosing residual connection carries it to
// the next layer unchanged. There is no re-routing to a second choice.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tensor/ops.hpp"
#include "tensor/tensor.hpp"

namespace moeasr::moe {

struct RouterConfig {
  std::size_t num_experts = 1;
  double capacity_factor = 1.5;
  double alpha = 0.01;
  double jitter_eps = 0.01;
  // Switch routing only; kept for documentation of the restriction.
  static constexpr std::size_t top_k = 1;

  void validate() const;
};

inline constexpr std::int64_t kDropped = -1;

struct DispatchPlan {
  std::vector<std::int64_t> assignment;  // expert index or kDropped
  std::vector<std::int64_t> slot;        // position in the expert buffer, -1 when dropped
  std::vector<double> gate_value;        // probability of the argmax expert
  std::size_t capacity = 0;
  std::size_t num_experts = 0;

  std::size_t tokens() const { return assignment.size(); }
  std::size_t assigned_count() const;
  std::size_t dropped_count() const;
  std::vector<std::size_t> expert_load() const;
  // Token indices held by an expert, in slot order.
  std::vector<std::size_t> tokens_of(std::size_t expert) const;
};

struct LoadStats {
  std::vector<double> f;  // argmax dispatch fraction per expert, a constant
  Tensor P;               // mean router probability per expert, differentiable
  std::size_t tokens = 0;
};

std::size_t expert_capacity(std::size_t samples_per_batch, std::size_t num_experts,
                            double capacity_factor);

// Multiplies every element by an independent uniform(1 - eps, 1 + eps) draw
// while training; identity otherwise.
Tensor apply_jitter(const Tensor& x, double eps, RngStream& rng, bool training);

// softmax(x · W_g) row-wise: [T×d] · [d×N] -> [T×N].
Tensor gate(const Tensor& x, const Tensor& gate_weights);

DispatchPlan plan_dispatch(std::span<const double> gate_probs, std::size_t tokens,
                           std::size_t num_experts, std::size_t capacity);
DispatchPlan plan_dispatch(const Tensor& gate_probs, std::size_t capacity);

LoadStats load_stats(const Tensor& gate_probs);

// α·N·Σ f_i·P_i; gradients flow through P only.
Tensor aux_loss(const LoadStats& stats, double alpha);

struct ExpertParams {
  Tensor w_in;   // [d×d_ff]
  Tensor b_in;   // [d_ff]
  Tensor w_out;  // [d_ff×d]
  Tensor b_out;  // [d]
};

// linear -> ReLU -> dropout -> linear; also the dense FFN of a block.
Tensor expert_ffn(const Tensor& x, const ExpertParams& params, double dropout_p, RngStream& rng,
                  bool training);

struct MoeOutput {
  Tensor y;  // [T×d]; dropped tokens have zero rows
  LoadStats stats;
  DispatchPlan plan;
  std::uint64_t expert_macs = 0;
  std::uint64_t gate_macs = 0;
};

MoeOutput moe_forward(const Tensor& x, const Tensor& gate_weights,
                      std::span<const ExpertParams> experts, const RouterConfig& cfg,
                      double ffn_dropout, RngStream& rng, bool training);

}  // namespace moeasr::moe
