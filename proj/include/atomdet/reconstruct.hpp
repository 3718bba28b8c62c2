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

// Runtime state reconstruction.
//
// For each site the projector K is laid over the image detail I centered on
// the site's nearest pixel, and
//
//   d_out = sum(K * I) * (sum(K * u) / sum(K))
//
// where u(i, j) = 1 iff kernel pixel (i, j) lands inside the image. Sites are
// independent; reconstruct_all distributes them over threads and every site
// writes its own output slot, so results do not depend on the thread count.

#pragma once

#include <vector>

#include "atomdet/calibrate.hpp"
#include "atomdet/core_types.hpp"

namespace atomdet {

/// Aligned image and kernel windows for one site (all half-open).
struct CropBounds {
  int img_x0 = 0, img_y0 = 0, img_x1 = 0, img_y1 = 0;
  int ker_x0 = 0, ker_y0 = 0, ker_x1 = 0, ker_y1 = 0;

  /// True when no kernel pixel is clipped.
  bool full(int kernel_size) const noexcept {
    return ker_x0 == 0 && ker_y0 == 0 && ker_x1 == kernel_size &&
           ker_y1 == kernel_size;
  }

  friend bool operator==(const CropBounds&, const CropBounds&) = default;
};

struct SiteEmission {
  int row = 0;
  int col = 0;
  double product_sum = 0.0;     // sum of K * I over the used window
  double used_kernel_sum = 0.0; // sum of K * u
  double emission = 0.0;        // d_out
};

/// Window for a kernel centered on the nearest pixel to `site` (ties round
/// away from zero), clamped to the image. Throws GeometryError if the site is
/// outside [0, width) x [0, height), std::invalid_argument if kernel_size is
/// not odd and positive.
CropBounds extract_boundaries(Point site, int image_width, int image_height,
                              int kernel_size);

/// Emission for one site using a precomputed total kernel sum. Throws
/// InvalidProfileError if |total_kernel_sum| < 1e-300 and GeometryError if
/// the bounds do not fit the image or projector.
SiteEmission reconstruct_site(const Image& image, const CropBounds& bounds,
                              const Kernel& projector, double total_kernel_sum);

/// As above with the total computed from the projector.
SiteEmission reconstruct_site(const Image& image, const CropBounds& bounds,
                              const Kernel& projector);

/// Default worker count: ATOMDET_THREADS if set to a positive integer,
/// otherwise the number of available cores.
int default_thread_count();

/// Precomputed per-site windows for a fixed profile and frame size.
///
/// Building the plan does all geometry work once; run() then only performs
/// the multiply-accumulate per site.
class ReconstructionPlan {
 public:
  /// Throws GeometryError naming the site if any site falls outside the
  /// frame, InvalidProfileError if the projector sums to zero.
  ReconstructionPlan(const CalibrationProfile& profile, int image_width,
                     int image_height);

  int image_width() const noexcept { return width_; }
  int image_height() const noexcept { return height_; }
  const std::vector<CropBounds>& bounds() const noexcept { return bounds_; }

  /// threads <= 0 selects default_thread_count(). Throws GeometryError if the
  /// image dimensions differ from the plan's.
  EmissionMatrix run(const Image& image, int threads = 0) const;

 private:
  Kernel projector_;
  int rows_;
  int cols_;
  int width_;
  int height_;
  double total_;
  std::vector<CropBounds> bounds_;
};

/// One-shot reconstruction of every site.
EmissionMatrix reconstruct_all(const Image& image,
                               const CalibrationProfile& profile,
                               int threads = 0);

struct TreeSum {
  double sum = 0.0;
  int depth = 0;  // number of pairwise addition stages
};

/// Balanced pairwise reduction as built in hardware: zero-pad to the next
/// power of two and add neighbours stage by stage. depth = ceil(log2 n).
TreeSum adder_tree_sum(std::span<const double> values);

/// occupancy = emission > threshold (strict).
OccupancyMatrix apply_threshold(const EmissionMatrix& emissions,
                                double threshold);

}  // namespace atomdet
