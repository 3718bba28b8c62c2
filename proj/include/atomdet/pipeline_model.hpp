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

// Analytic latency model of the four-stage reconstruction dataflow:
//
//   boundary extraction -> image extraction -> convolution -> aggregation
//
// Stages work on different atoms at the same time and the next atom's image
// detail is prefetched while the current one is convolved, so in steady state
// one atom leaves the pipeline every max(stage) cycles:
//
//   total_cycles = fill_cycles + atoms * max(stage cycles)

#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace atomdet {

struct HardwareParams {
  double clock_mhz = 100.0;
  int bus_width_bits = 512;
  int word_bits = 32;
  // Cycles lost per burst request (one request per kernel row). Fitted once:
  // with 3 beats per unaligned 31-word row this gives 124 cycles per atom,
  // i.e. 126 us for 100 atoms and 1986 us for 1600 atoms at 100 MHz against
  // measured 115 us and 1825 us.
  int burst_overhead_cycles = 1;
  int boundary_cycles = 4;
  int conv_ii = 1;
  int tree_depth = 5;  // ceil(log2(31))
  int agg_cycles = 24;
  // First atom's serial traversal of all four stages (4 + 124 + 41 + 24 = 193)
  // plus start-up, rounded.
  std::int64_t fill_cycles = 200;

  int words_per_beat() const noexcept { return bus_width_bits / word_bits; }
  /// Throws std::invalid_argument on non-positive fields or a bus width that
  /// is not a multiple of the word width.
  void validate() const;
};

enum class Stage { kBoundary = 0, kExtraction = 1, kConvolution = 2, kAggregation = 3 };

std::string_view stage_name(Stage s) noexcept;

struct StageCycles {
  std::array<std::int64_t, 4> cycles{};  // indexed by Stage

  std::int64_t operator[](Stage s) const noexcept {
    return cycles[static_cast<int>(s)];
  }
  std::int64_t max() const noexcept;
  Stage bottleneck() const noexcept;
};

struct LatencyReport {
  StageCycles per_atom_stage_cycles;
  Stage bottleneck_stage = Stage::kExtraction;
  std::int64_t total_cycles = 0;
  double total_us = 0.0;
  std::int64_t atoms = 0;
};

/// Per-atom cost of each stage.
///   boundary    = boundary_cycles
///   extraction  = k * ceil((w + wpb - 1) / wpb) + burst_overhead * k,
///                 w = min(k, image_width) words per row (worst-case alignment)
///   convolution = k * conv_ii + 2 * depth (row tree then cross-row tree;
///                 depth is 0 for a 1x1 kernel)
///   aggregation = agg_cycles
/// The projector is cached after the first atom, so only image rows stream.
StageCycles stage_cycles(const HardwareParams& params, int kernel_size,
                         int image_width);

/// Throws std::invalid_argument for atoms < 0.
LatencyReport estimate_latency(const HardwareParams& params, std::int64_t atoms,
                               int kernel_size, int image_width);

}  // namespace atomdet
