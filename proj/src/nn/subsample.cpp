// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include "nn/subsample.hpp"

#include "tensor/ops.hpp"

namespace moeasr::nn {

std::size_t subsampled_extent(std::size_t extent) {
  if (extent == 0) throw DimensionError("conv_subsample: input too short (0 frames)");
  return conv_output_extent(conv_output_extent(extent, kSubsampleKernel, kSubsampleStride),
                            kSubsampleKernel, kSubsampleStride);
}

SubsampleParams make_subsample_params(ParamStore& store, const std::string& prefix,
                                      std::size_t feature_dim, std::size_t channels,
                                      std::size_t d_out) {
  if (channels == 0 || feature_dim == 0 || d_out == 0) {
    throw ParameterError("conv_subsample: channels, feature dim and output dim must be positive");
  }
  constexpr std::size_t k = kSubsampleKernel;
  const std::size_t flat = channels * subsampled_extent(feature_dim);
  SubsampleParams p;
  p.conv1_kernels = store.create(prefix + ".conv1.weight", {channels, 1, k, k}, Init::kUniformFanIn,
                                 1.0, k * k);
  p.conv1_bias = store.create(prefix + ".conv1.bias", {channels}, Init::kZeros);
  p.conv2_kernels = store.create(prefix + ".conv2.weight", {channels, channels, k, k},
                                 Init::kUniformFanIn, 1.0, channels * k * k);
  p.conv2_bias = store.create(prefix + ".conv2.bias", {channels}, Init::kZeros);
  p.proj_weight = store.create(prefix + ".proj.weight", {flat, d_out}, Init::kUniformFanIn);
  p.proj_bias = store.create(prefix + ".proj.bias", {d_out}, Init::kZeros);
  return p;
}

Tensor conv_subsample(const Tensor& features, const SubsampleParams& params) {
  if (features.rank() != 2) {
    throw DimensionError("conv_subsample: features must be [T×d_feat], got " +
                         shape_to_string(features.shape()));
  }
  const std::size_t frames = features.dim(0), dim = features.dim(1);
  Tensor image = reshape(features, {1, frames, dim});
  Tensor h = relu(conv2d(image, params.conv1_kernels, params.conv1_bias, kSubsampleStride));
  h = relu(conv2d(h, params.conv2_kernels, params.conv2_bias, kSubsampleStride));
  const std::size_t channels = h.dim(0), out_frames = h.dim(1), out_dim = h.dim(2);
  if (out_frames < 1) throw DimensionError("conv_subsample: input too short");
  // [C×T'×F''] -> [T'×C×F''] -> [T'×(C·F'')]
  Tensor per_frame = reshape(swap_leading_axes(h), {out_frames, channels * out_dim});
  return linear(per_frame, params.proj_weight, params.proj_bias);
}

}  // namespace moeasr::nn
