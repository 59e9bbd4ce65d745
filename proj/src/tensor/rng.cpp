// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include "tensor/rng.hpp"

#include <cmath>
#include <numbers>

namespace moeasr {

namespace {

constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t hash_tag(std::string_view tag) {
  // FNV-1a, then mixed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

std::uint64_t RngStream::next_u64() {
  std::uint64_t key = mix64(seed_ ^ mix64(stream_id_ + 0x632be59bd9b4e019ULL));
  return mix64(key ^ mix64(counter_++));
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  // Box-Muller, one output per pair.
  double u1 = uniform();
  double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n <= 1) return 0;
  // Rejection keeps the draw unbiased.
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % n;
}

RngStream RngStream::fork(std::string_view tag) const { return fork(hash_tag(tag)); }

RngStream RngStream::fork(std::uint64_t key) const {
  return RngStream(seed_, mix64(stream_id_ ^ mix64(key + 0x2545f4914f6cdd1dULL)), 0);
}

}  // namespace moeasr
