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

// Offline calibration: lattice fit, PSF extraction, projector construction,
// background and threshold estimation. Everything here runs once per setup,
// so it favours robustness over speed. All routines are deterministic.

#pragma once

#include <span>
#include <vector>

#include "atomdet/core_types.hpp"

namespace atomdet {

struct CalibrationProfile {
  GridGeometry grid;
  Kernel projector;
  Kernel psf;
  double threshold = 0.0;
  double background = 0.0;

  int kernel_size() const noexcept { return projector.size(); }
  /// canonical_sum of the projector; the denominator of the edge factor.
  double projector_total_sum() const noexcept { return projector.sum(); }
};

/// Fits the tweezer lattice to bright spots in the average of `images`.
///
/// The averaged frame is box-smoothed (3x3); local maxima rising above
/// background + max(5 * 1.4826 * MAD, 0.2 * (peak - background)) become
/// candidates and are refined to intensity centroids. The lattice angle comes
/// from nearest-neighbour displacement directions (folded modulo 90 degrees),
/// the spacing from their median length, and a linear least-squares fit over
/// the integer lattice indices then refines origin, spacing and angle
/// jointly.
///
/// Throws CalibrationError("grid-detection") if the candidates do not span
/// expected_rows x expected_cols lattice lines, or if the images disagree in
/// size.
GridGeometry detect_grid(std::span<const Image> images, int expected_rows,
                         int expected_cols);

/// Median of pixels farther than kernel_size / 2 from every site, pooled
/// over all images. Falls back to the farthest 5% of pixels when the lattice
/// leaves no such pixel.
double estimate_background(std::span<const Image> images,
                           const GridGeometry& grid, int kernel_size);

/// Average of background-subtracted crops around bright sites, clamped at 0
/// and normalised to unit sum. A crop is bright when its excess exceeds both
/// 5 * sqrt(background * kernel_size^2) (shot-noise bound) and a quarter of
/// the largest crop excess seen. Throws CalibrationError("psf-extraction") if
/// no site qualifies.
Kernel extract_psf(std::span<const Image> images, const GridGeometry& grid,
                   int kernel_size, double background);

/// Column set of the local design matrix: the center PSF followed by each of
/// the 8 nearest lattice neighbours whose shifted PSF has non-zero overlap
/// with the kernel window. Offsets are lattice displacements rounded to whole
/// pixels.
struct DesignMatrix {
  int kernel_size = 0;
  std::vector<Kernel> columns;           // columns[0] is the center site
  std::vector<std::pair<int, int>> offsets;  // (dx, dy) per column
};

DesignMatrix build_design_matrix(const Kernel& psf, const GridGeometry& grid);

/// Row of pinv(A) belonging to the center site, reshaped to a kernel. The
/// pseudoinverse drops singular values below 1e-10 times the largest. With a
/// single column the result is psf / ||psf||_F^2. Throws
/// CalibrationError("projector") if every singular value is below cutoff.
Kernel build_projector(const Kernel& psf, const GridGeometry& grid);

/// Otsu split on sorted samples; returns the midpoint between the two
/// classes' boundary values. Requires at least two distinct values.
double otsu_threshold(std::span<const double> samples);

/// Two-component Gaussian mixture fitted by EM (initialised from Otsu), cut
/// at the point of equal posterior between the means. Falls back to Otsu if
/// EM does not converge in 200 iterations. Throws
/// CalibrationError("threshold") for fewer than two samples or when the
/// fitted means are closer than 1% of the sample span.
double calibrate_threshold(std::span<const double> emissions);

/// detect_grid -> estimate_background -> extract_psf -> build_projector ->
/// reconstruction of the calibration frames -> calibrate_threshold.
/// Throws CalibrationError labelled with the failing stage.
CalibrationProfile calibrate(std::span<const Image> images, int expected_rows,
                             int expected_cols, int kernel_size = 31);

}  // namespace atomdet
