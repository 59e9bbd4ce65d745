// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "tensor/params.hpp"

namespace moeasr::nn {

// Two 3×3 stride-2 convolutions (1 -> C -> C channels) with ReLU, then the
// channel×frequency map of every remaining frame goes through a linear layer.
struct SubsampleParams {
  Tensor conv1_kernels, conv1_bias;  // [C×1×3×3], [C]
  Tensor conv2_kernels, conv2_bias;  // [C×C×3×3], [C]
  Tensor proj_weight, proj_bias;     // [C·F''×d_out], [d_out]
};

inline constexpr std::size_t kSubsampleKernel = 3;
inline constexpr std::size_t kSubsampleStride = 2;

// Extent after both convolutions, e.g. frames T -> ceil(T/4) for even T.
std::size_t subsampled_extent(std::size_t extent);

SubsampleParams make_subsample_params(ParamStore& store, const std::string& prefix,
                                      std::size_t feature_dim, std::size_t channels,
                                      std::size_t d_out);

// features [T×d_feat] -> [T'×d_out]
Tensor conv_subsample(const Tensor& features, const SubsampleParams& params);

}  // namespace moeasr::nn
