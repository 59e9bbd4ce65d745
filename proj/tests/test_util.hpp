// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers: random tensors and a central finite-difference checker.

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "tensor/ops.hpp"
#include "tensor/rng.hpp"
#include "tensor/tensor.hpp"

namespace moeasr::testing {

inline Tensor random_tensor(const Shape& shape, RngStream& rng, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor::from(shape, std::move(v));
}

inline std::vector<double> random_weights(std::size_t n, RngStream& rng) {
  std::vector<double> w(n);
  for (auto& x : w) x = rng.normal();
  return w;
}

// Reduces a tensor to a scalar through fixed random weights so every output
// element contributes to the checked gradient.
inline Tensor project(const Tensor& y, std::uint64_t seed = 99) {
  RngStream rng(seed, 7);
  return dot_const(y, random_weights(y.numel(), rng));
}

// ||analytic - numeric|| / max(||analytic|| + ||numeric||, tiny) over every
// element of every input.
inline double gradient_error(const std::function<Tensor()>& loss, std::vector<Tensor> inputs,
                             double h = 1e-6) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor l = loss();
  l.backward();
  double diff = 0.0, norm = 0.0;
  for (auto& t : inputs) {
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) analytic.assign(t.grad().begin(), t.grad().end());
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss().item();
      values[i] = saved - h;
      const double down = loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      diff += (analytic[i] - numeric) * (analytic[i] - numeric);
      norm += analytic[i] * analytic[i] + numeric * numeric;
    }
  }
  return std::sqrt(diff) / std::max(std::sqrt(norm), 1e-12);
}

}  // namespace moeasr::testing
