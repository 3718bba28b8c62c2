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

// Synthetic fluorescence frames with known ground truth.
//
// Expected photoelectrons at pixel x:
//   lambda(x) = b + sum over occupied sites i of gamma * PSF(x - center_i)
// where center_i is the site position rounded to the nearest pixel. PSF
// pixels that land outside the frame are dropped.

#pragma once

#include <cstdint>

#include "atomdet/core_types.hpp"

namespace atomdet {

enum class NoiseKind { kNone, kPoisson, kPoissonGaussian };

struct NoiseModel {
  NoiseKind kind = NoiseKind::kPoisson;
  double read_sigma = 0.0;  // only used by kPoissonGaussian
};

struct ForwardModel {
  Kernel psf;               // non-negative, unit sum
  double background = 0.0;  // photoelectrons per pixel
  double gamma = 1.0;       // expected photoelectrons per occupied site
  NoiseModel noise;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument if any field is out of range.
  void validate() const;
};

/// Unit-sum isotropic Gaussian sampled at pixel centers.
Kernel gaussian_psf(int size, double sigma);
/// Unit impulse at the kernel center.
Kernel delta_psf(int size);

/// Noiseless lambda(x). Throws GeometryError naming the first site that lies
/// outside [0, width) x [0, height).
Image expected_image(const ForwardModel& model, const GridGeometry& grid,
                     const OccupancyMatrix& occupancy, int width, int height);

/// expected_image with the configured noise applied. Pixel p draws from the
/// counter stream (model.seed, pixel-noise, p), so the result is independent
/// of evaluation order. Gaussian read noise is added after the Poisson draw
/// and the sum is clamped at 0.
Image sample_image(const ForwardModel& model, const GridGeometry& grid,
                   const OccupancyMatrix& occupancy, int width, int height);

/// Each site occupied independently with probability fill_fraction.
OccupancyMatrix make_truth(int rows, int cols, double fill_fraction,
                           std::uint64_t seed);

/// Lattice of rows x cols sites whose center coincides with the central pixel
/// coordinate ((width - 1) / 2, (height - 1) / 2) of the frame.
GridGeometry centered_grid(int rows, int cols, double spacing, double angle,
                           int width, int height);

/// Reference scene: rows x cols sites at `spacing` px, centered in a frame
/// of round(cols * spacing) x round(rows * spacing) pixels. With the default
/// spacing 10x10 sites map to 256x256 and 40x40 to 1024x1024.
struct Scene {
  int rows = 10;
  int cols = 10;
  double spacing = 25.6;
  double angle = 0.0;
  int kernel_size = 31;
  double psf_sigma = 2.0;
  double gamma = 2000.0;
  double background = 10.0;
  NoiseModel noise;

  int width() const;
  int height() const;
  GridGeometry grid() const;
  ForwardModel model(std::uint64_t seed) const;
};

}  // namespace atomdet
