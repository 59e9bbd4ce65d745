// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include "moe/router.hpp"

#include <cmath>

namespace moeasr::moe {

void RouterConfig::validate() const {
  if (num_experts < 1) throw ParameterError("router: num_experts must be >= 1");
  if (!(capacity_factor > 0.0)) throw ParameterError("router: capacity_factor must be > 0");
  if (!(jitter_eps >= 0.0) || jitter_eps >= 1.0) {
    throw ParameterError("router: jitter_eps must lie in [0, 1)");
  }
  if (!(alpha >= 0.0)) throw ParameterError("router: alpha must be >= 0");
}

std::size_t DispatchPlan::assigned_count() const {
  std::size_t n = 0;
  for (auto a : assignment) n += a != kDropped;
  return n;
}

std::size_t DispatchPlan::dropped_count() const { return tokens() - assigned_count(); }

std::vector<std::size_t> DispatchPlan::expert_load() const {
  std::vector<std::size_t> load(num_experts, 0);
  for (auto a : assignment)
    if (a != kDropped) ++load[static_cast<std::size_t>(a)];
  return load;
}

std::vector<std::size_t> DispatchPlan::tokens_of(std::size_t expert) const {
  std::vector<std::size_t> rows;
  for (std::size_t t = 0; t < assignment.size(); ++t)
    if (assignment[t] == static_cast<std::int64_t>(expert)) rows.push_back(t);
  return rows;
}

std::size_t expert_capacity(std::size_t samples_per_batch, std::size_t num_experts,
                            double capacity_factor) {
  if (num_experts == 0) throw ParameterError("expert_capacity: zero experts");
  if (samples_per_batch == 0) throw ParameterError("expert_capacity: empty batch");
  if (!(capacity_factor > 0.0)) throw ParameterError("expert_capacity: capacity factor must be > 0");
  const double exact = static_cast<double>(samples_per_batch) /
                       static_cast<double>(num_experts) * capacity_factor;
  // Guard against 12.000000000000002 style round-up from the division.
  const double rounded = std::round(exact);
  const double value = std::abs(exact - rounded) < 1e-9 ? rounded : std::ceil(exact);
  return std::max<std::size_t>(1, static_cast<std::size_t>(value));
}

Tensor apply_jitter(const Tensor& x, double eps, RngStream& rng, bool training) {
  if (!(eps >= 0.0) || eps >= 1.0) throw ParameterError("jitter: eps must lie in [0, 1)");
  if (!training || eps == 0.0) return x;
  std::vector<double> factors(x.numel());
  for (auto& f : factors) f = rng.uniform(1.0 - eps, 1.0 + eps);
  return mul_const(x, factors);
}

Tensor gate(const Tensor& x, const Tensor& gate_weights) {
  return softmax(matmul(x, gate_weights), 1);
}

DispatchPlan plan_dispatch(std::span<const double> gate_probs, std::size_t tokens,
                           std::size_t num_experts, std::size_t capacity) {
  if (capacity < 1) throw ParameterError("plan_dispatch: capacity must be >= 1");
  if (num_experts < 1) throw ParameterError("plan_dispatch: zero experts");
  if (gate_probs.size() != tokens * num_experts) {
    throw DimensionError("plan_dispatch: " + std::to_string(gate_probs.size()) +
                         " probabilities for " + std::to_string(tokens) + "x" +
                         std::to_string(num_experts));
  }
  DispatchPlan plan;
  plan.capacity = capacity;
  plan.num_experts = num_experts;
  plan.assignment.assign(tokens, kDropped);
  plan.slot.assign(tokens, -1);
  plan.gate_value.assign(tokens, 0.0);
  std::vector<std::size_t> fill(num_experts, 0);
  for (std::size_t t = 0; t < tokens; ++t) {
    const double* row = gate_probs.data() + t * num_experts;
    std::size_t best = 0;
    for (std::size_t e = 1; e < num_experts; ++e)
      if (row[e] > row[best]) best = e;  // strict: ties keep the lowest index
    plan.gate_value[t] = row[best];
    if (fill[best] < capacity) {
      plan.assignment[t] = static_cast<std::int64_t>(best);
      plan.slot[t] = static_cast<std::int64_t>(fill[best]++);
    }
  }
  return plan;
}

DispatchPlan plan_dispatch(const Tensor& gate_probs, std::size_t capacity) {
  if (gate_probs.rank() != 2) {
    throw DimensionError("plan_dispatch: gate matrix must be rank 2, got " +
                         shape_to_string(gate_probs.shape()));
  }
  return plan_dispatch(gate_probs.data(), gate_probs.dim(0), gate_probs.dim(1), capacity);
}

LoadStats load_stats(const Tensor& gate_probs) {
  if (gate_probs.rank() != 2) {
    throw DimensionError("load_stats: gate matrix must be rank 2, got " +
                         shape_to_string(gate_probs.shape()));
  }
  const std::size_t tokens = gate_probs.dim(0), n = gate_probs.dim(1);
  LoadStats stats;
  stats.tokens = tokens;
  stats.f.assign(n, 0.0);
  auto probs = gate_probs.data();
  for (std::size_t t = 0; t < tokens; ++t) {
    std::size_t best = 0;
    for (std::size_t e = 1; e < n; ++e)
      if (probs[t * n + e] > probs[t * n + best]) best = e;
    stats.f[best] += 1.0;
  }
  for (auto& v : stats.f) v /= static_cast<double>(tokens);
  stats.P = mean_rows(gate_probs);
  return stats;
}

Tensor aux_loss(const LoadStats& stats, double alpha) {
  if (!stats.P.defined() || stats.f.size() != stats.P.numel()) {
    throw DimensionError("aux_loss: f has " + std::to_string(stats.f.size()) +
                         " entries, P has " +
                         (stats.P.defined() ? std::to_string(stats.P.numel()) : std::string("none")));
  }
  const double n = static_cast<double>(stats.f.size());
  return scale(dot_const(stats.P, stats.f), alpha * n);
}

Tensor expert_ffn(const Tensor& x, const ExpertParams& params, double dropout_p, RngStream& rng,
                  bool training) {
  Tensor hidden = relu(linear(x, params.w_in, params.b_in));
  hidden = dropout(hidden, dropout_p, rng, training);
  return linear(hidden, params.w_out, params.b_out);
}

MoeOutput moe_forward(const Tensor& x, const Tensor& gate_weights,
                      std::span<const ExpertParams> experts, const RouterConfig& cfg,
                      double ffn_dropout, RngStream& rng, bool training) {
  cfg.validate();
  if (x.rank() != 2) throw DimensionError("moe_forward: input must be [T×d], got " + shape_to_string(x.shape()));
  if (experts.size() != cfg.num_experts) {
    throw DimensionError("moe_forward: " + std::to_string(experts.size()) + " experts, config says " +
                         std::to_string(cfg.num_experts));
  }
  const std::size_t tokens = x.dim(0), d = x.dim(1);
  for (const auto& e : experts) {
    if (e.w_in.dim(0) != d || e.w_out.dim(1) != d) {
      throw DimensionError("moe_forward: expert maps " + shape_to_string(e.w_in.shape()) + " / " +
                           shape_to_string(e.w_out.shape()) + " do not match model width " +
                           std::to_string(d));
    }
  }

  MoeOutput out;
  const auto macs_before_gate = MacCounter::value();
  RngStream jitter_rng = rng.fork("jitter");
  Tensor probs = gate(apply_jitter(x, cfg.jitter_eps, jitter_rng, training), gate_weights);
  out.gate_macs = MacCounter::value() - macs_before_gate;

  out.plan = plan_dispatch(probs, expert_capacity(tokens, cfg.num_experts, cfg.capacity_factor));
  out.stats = load_stats(probs);

  const auto macs_before_experts = MacCounter::value();
  std::vector<Tensor> parts;
  std::vector<std::size_t> destination;
  for (std::size_t e = 0; e < experts.size(); ++e) {
    auto rows = out.plan.tokens_of(e);
    if (rows.empty()) continue;
    RngStream expert_rng = rng.fork(e);
    Tensor h = expert_ffn(gather_rows(x, rows), experts[e], ffn_dropout, expert_rng, training);
    std::vector<std::size_t> cols(rows.size(), e);
    parts.push_back(mul_rows(h, gather_elements(probs, rows, cols)));
    destination.insert(destination.end(), rows.begin(), rows.end());
  }
  out.expert_macs = MacCounter::value() - macs_before_experts;
  out.y = parts.empty() ? Tensor::zeros({tokens, d})
                        : scatter_rows(concat_rows(parts), destination, tokens);
  return out;
}

}  // namespace moeasr::moe
