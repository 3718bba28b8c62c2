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

#include "atomdet/pipeline_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace atomdet {

void HardwareParams::validate() const {
  if (!(clock_mhz > 0.0) || !std::isfinite(clock_mhz))
    throw std::invalid_argument("clock_mhz must be > 0");
  if (bus_width_bits <= 0 || word_bits <= 0)
    throw std::invalid_argument("bus and word widths must be > 0");
  if (bus_width_bits % word_bits != 0)
    throw std::invalid_argument("bus width must be a multiple of the word width");
  if (burst_overhead_cycles < 0 || boundary_cycles <= 0 || conv_ii <= 0 ||
      tree_depth < 0 || agg_cycles <= 0 || fill_cycles < 0)
    throw std::invalid_argument("hardware cycle parameters out of range");
}

std::string_view stage_name(Stage s) noexcept {
  switch (s) {
    case Stage::kBoundary: return "boundary_extraction";
    case Stage::kExtraction: return "image_extraction";
    case Stage::kConvolution: return "image_convolution";
    case Stage::kAggregation: return "output_aggregation";
  }
  return "unknown";
}

std::int64_t StageCycles::max() const noexcept {
  return *std::max_element(cycles.begin(), cycles.end());
}

Stage StageCycles::bottleneck() const noexcept {
  return static_cast<Stage>(std::max_element(cycles.begin(), cycles.end()) -
                            cycles.begin());
}

StageCycles stage_cycles(const HardwareParams& params, int kernel_size,
                         int image_width) {
  params.validate();
  if (kernel_size <= 0 || kernel_size % 2 == 0)
    throw std::invalid_argument("kernel size must be odd and positive");
  if (image_width <= 0) throw std::invalid_argument("image width must be > 0");

  const std::int64_t k = kernel_size;
  const std::int64_t wpb = params.words_per_beat();
  const std::int64_t row_words = std::min<std::int64_t>(k, image_width);
  const std::int64_t beats_per_row = (row_words + wpb - 1 + wpb - 1) / wpb;
  const std::int64_t depth = kernel_size == 1 ? 0 : params.tree_depth;

  StageCycles sc;
  sc.cycles[static_cast<int>(Stage::kBoundary)] = params.boundary_cycles;
  sc.cycles[static_cast<int>(Stage::kExtraction)] =
      k * beats_per_row + params.burst_overhead_cycles * k;
  sc.cycles[static_cast<int>(Stage::kConvolution)] = k * params.conv_ii + 2 * depth;
  sc.cycles[static_cast<int>(Stage::kAggregation)] = params.agg_cycles;
  return sc;
}

LatencyReport estimate_latency(const HardwareParams& params, std::int64_t atoms,
                               int kernel_size, int image_width) {
  if (atoms < 0) throw std::invalid_argument("atom count must be >= 0");
  LatencyReport r;
  r.per_atom_stage_cycles = stage_cycles(params, kernel_size, image_width);
  r.bottleneck_stage = r.per_atom_stage_cycles.bottleneck();
  r.atoms = atoms;
  r.total_cycles = params.fill_cycles + atoms * r.per_atom_stage_cycles.max();
  r.total_us = static_cast<double>(r.total_cycles) / params.clock_mhz;
  return r;
}

}  // namespace atomdet
