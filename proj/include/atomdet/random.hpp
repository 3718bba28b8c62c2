// Copyright 2026 The atomdet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Counter-based random streams.
//
// Every draw is a pure function of (seed, stream, index, draw number), so the
// output of a simulation does not depend on evaluation order or thread count.
// Samplers are written out here instead of using <random> distributions,
// whose algorithms differ between standard library implementations.
//
// Stream version 1:
//   key     = splitmix64(seed ^ splitmix64(stream ^ splitmix64(index)))
//   word k  = splitmix64(key + k * 0x9E3779B97F4A7C15)
//   uniform = (word >> 11) * 2^-53
//   normal  = Box-Muller cosine branch
//   poisson = multiplication method for mean < 10, PTRS (Hoermann 1993) above

#pragma once

#include <cstdint>

namespace atomdet::rng {

inline constexpr int kStreamVersion = 1;

// Stream identifiers; one per independent consumer of a seed.
inline constexpr std::uint64_t kStreamOccupancy = 0x6f63637570616e63ULL;
inline constexpr std::uint64_t kStreamPixelNoise = 0x706978656c6e6f69ULL;
inline constexpr std::uint64_t kStreamSeedDerive = 0x7365656464657276ULL;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Sequence of 64-bit words for one (seed, stream, index) triple.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream,
             std::uint64_t index) noexcept
      : key_(splitmix64(seed ^ splitmix64(stream ^ splitmix64(index)))) {}

  std::uint64_t next() noexcept {
    return splitmix64(key_ + (counter_++) * 0x9E3779B97F4A7C15ULL);
  }
  /// Uniform in [0, 1).
  double uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }
  double normal() noexcept;
  /// Poisson-distributed count with the given mean (mean <= 0 yields 0).
  std::uint64_t poisson(double mean) noexcept;

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Independent seed for the i-th item derived from a base seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t i) noexcept {
  return splitmix64(seed ^ splitmix64(kStreamSeedDerive ^ splitmix64(i)));
}

}  // namespace atomdet::rng
