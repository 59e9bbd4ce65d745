// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include "tensor/params.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace moeasr {

namespace {

constexpr char kMagic[8] = {'M', 'O', 'E', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw CheckpointError("checkpoint truncated");
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  pos += sizeof(T);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

Tensor ParamStore::create(const std::string& path, const Shape& shape, Init init,
                          double init_scale, std::size_t fan_in) {
  if (shapes_.count(path)) throw ParameterError("duplicate parameter path '" + path + "'");
  shapes_.emplace(path, shape);
  if (shapes_only_) return {};
  std::vector<double> values(shape_numel(shape), 0.0);
  RngStream rng(seed_, hash_tag(path));
  switch (init) {
    case Init::kZeros:
      break;
    case Init::kOnes:
      std::fill(values.begin(), values.end(), 1.0);
      break;
    case Init::kUniformFanIn: {
      const std::size_t fan = fan_in ? fan_in : shape.at(0);
      const double bound = init_scale / std::sqrt(static_cast<double>(fan));
      for (auto& v : values) v = rng.uniform(-bound, bound);
      break;
    }
    case Init::kNormal:
      for (auto& v : values) v = init_scale * rng.normal();
      break;
  }
  Tensor t = Tensor::from(shape, std::move(values));
  t.set_requires_grad(true);
  params_.emplace(path, t);
  return t;
}

const Tensor& ParamStore::get(const std::string& path) const {
  auto it = params_.find(path);
  if (it == params_.end()) throw ParameterError("unknown parameter '" + path + "'");
  return it->second;
}

std::size_t ParamStore::num_elements() const {
  std::size_t n = 0;
  for (const auto& [_, shape] : shapes_) n += shape_numel(shape);
  return n;
}

std::size_t ParamStore::num_elements(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& [name, shape] : shapes_)
    if (name.compare(0, prefix.size(), prefix) == 0) n += shape_numel(shape);
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, t] : params_) {
    Tensor handle = t;
    handle.mutable_grad();
    handle.zero_grad();
  }
}

void write_checkpoint(const std::string& path, const nlohmann::json& metadata,
                      const ParamStore& params) {
  nlohmann::json header = metadata;
  header["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : params.all()) {
    header["tensors"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.numel();
  }
  const std::string header_text = header.dump();

  std::string blob(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(blob, kVersion);
  put_le<std::uint64_t>(blob, header_text.size());
  blob += header_text;
  blob.reserve(blob.size() + offset * sizeof(double));
  for (const auto& [_, t] : params.all())
    for (double v : t.data()) put_le<double>(blob, v);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path + "' for writing");
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw CheckpointError("write to '" + path + "' failed");
}

CheckpointContents read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path + "'");
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() < sizeof(kMagic) || std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("'" + path + "' is not a checkpoint");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = get_le<std::uint32_t>(blob, pos);
  if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = get_le<std::uint64_t>(blob, pos);
  if (pos + header_len > blob.size()) throw CheckpointError("checkpoint header truncated");
  CheckpointContents contents;
  nlohmann::json header = nlohmann::json::parse(blob.substr(pos, header_len));
  pos += header_len;
  const std::size_t payload = pos;
  for (const auto& entry : header.at("tensors")) {
    Shape shape = entry.at("shape").get<Shape>();
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    std::size_t p = payload + offset * sizeof(double);
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = get_le<double>(blob, p);
    contents.tensors.emplace(entry.at("name").get<std::string>(),
                             std::make_pair(std::move(shape), std::move(values)));
  }
  header.erase("tensors");
  contents.metadata = std::move(header);
  return contents;
}

void load_into(const CheckpointContents& contents, ParamStore& params) {
  if (contents.tensors.size() != params.all().size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(contents.tensors.size()) +
                          " tensors, model expects " + std::to_string(params.all().size()));
  }
  for (const auto& [name, t] : params.all()) {
    auto it = contents.tensors.find(name);
    if (it == contents.tensors.end()) throw CheckpointError("checkpoint lacks '" + name + "'");
    if (it->second.first != t.shape()) {
      throw CheckpointError("'" + name + "' has shape " + shape_to_string(it->second.first) +
                            ", model expects " + shape_to_string(t.shape()));
    }
    Tensor handle = t;
    handle.assign(it->second.second);
  }
}

}  // namespace moeasr
