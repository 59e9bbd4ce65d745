// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include <json.hpp>

#include "tensor/rng.hpp"
#include "tensor/tensor.hpp"

namespace moeasr {

enum class Init {
  kZeros,
  kOnes,
  kUniformFanIn,  // uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), fan_in = dim(0)
  kNormal,        // N(0, 1) scaled by init_scale
};

// Named trainable tensors. Each tensor draws its initial values from a stream
// keyed by its own path, so adding a parameter never perturbs the others.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  // Records shapes without allocating; create() then returns undefined
  // tensors. Used to count parameters of configurations too large to build.
  static ParamStore shapes_only() {
    ParamStore store;
    store.shapes_only_ = true;
    return store;
  }

  Tensor create(const std::string& path, const Shape& shape, Init init, double init_scale = 1.0,
                std::size_t fan_in = 0);
  const Tensor& get(const std::string& path) const;
  bool contains(const std::string& path) const { return params_.count(path) != 0; }

  const std::map<std::string, Tensor>& all() const { return params_; }
  const std::map<std::string, Shape>& shapes() const { return shapes_; }
  std::size_t num_elements() const;
  std::size_t num_elements(const std::string& prefix) const;
  void zero_grad();

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  bool shapes_only_ = false;
  std::map<std::string, Tensor> params_;
  std::map<std::string, Shape> shapes_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary layout: "MOEACKPT", u32 version, u64 header length, JSON header,
// then every tensor's payload as little-endian f64 in header order. The header
// lists {name, shape, offset} under "tensors" next to caller metadata.
void write_checkpoint(const std::string& path, const nlohmann::json& metadata,
                      const ParamStore& params);

struct CheckpointContents {
  nlohmann::json metadata;
  std::map<std::string, std::pair<Shape, std::vector<double>>> tensors;
};

CheckpointContents read_checkpoint(const std::string& path);

// Copies tensor values into an existing store; names and shapes must match.
void load_into(const CheckpointContents& contents, ParamStore& params);

}  // namespace moeasr
