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

#include "atomdet/reconstruct.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>

#include "atomdet/error.hpp"

namespace atomdet {

CropBounds extract_boundaries(Point site, int image_width, int image_height,
                              int kernel_size) {
  if (kernel_size <= 0 || kernel_size % 2 == 0)
    throw std::invalid_argument("kernel size must be odd and positive");
  if (!(site.x >= 0.0 && site.x < image_width && site.y >= 0.0 &&
        site.y < image_height))
    throw GeometryError("site (" + std::to_string(site.x) + ", " +
                        std::to_string(site.y) + ") lies outside the " +
                        std::to_string(image_width) + "x" +
                        std::to_string(image_height) + " image");

  const int half = (kernel_size - 1) / 2;
  const int cx = nearest_pixel(site.x, image_width);
  const int cy = nearest_pixel(site.y, image_height);

  CropBounds b;
  b.img_x0 = std::max(cx - half, 0);
  b.img_x1 = std::min(cx + half + 1, image_width);
  b.img_y0 = std::max(cy - half, 0);
  b.img_y1 = std::min(cy + half + 1, image_height);
  b.ker_x0 = b.img_x0 - (cx - half);
  b.ker_x1 = b.img_x1 - (cx - half);
  b.ker_y0 = b.img_y0 - (cy - half);
  b.ker_y1 = b.img_y1 - (cy - half);
  return b;
}

namespace {

void check_bounds(const Image& image, const CropBounds& b, int kernel_size) {
  const bool ok = b.img_x0 >= 0 && b.img_y0 >= 0 &&
                  b.img_x1 <= image.width() && b.img_y1 <= image.height() &&
                  b.ker_x0 >= 0 && b.ker_y0 >= 0 && b.ker_x1 <= kernel_size &&
                  b.ker_y1 <= kernel_size && b.img_x1 > b.img_x0 &&
                  b.img_y1 > b.img_y0 &&
                  b.img_x1 - b.img_x0 == b.ker_x1 - b.ker_x0 &&
                  b.img_y1 - b.img_y0 == b.ker_y1 - b.ker_y0;
  if (!ok) throw GeometryError("crop bounds do not fit image and kernel");
}

void check_total(double total) {
  if (!(std::fabs(total) >= 1e-300))
    throw InvalidProfileError("projector sums to zero; edge normalisation undefined");
}

// Hot loop; callers have validated bounds. Two sequential accumulators in
// row-major order, matching canonical_sum.
SiteEmission project(const Image& image, const CropBounds& b,
                     const Kernel& projector, double total) {
  const int w = image.width();
  const int k = projector.size();
  const double* img = image.data().data();
  const double* ker = projector.data().data();
  double product = 0.0;
  double used = 0.0;
  for (int i = b.ker_y0; i < b.ker_y1; ++i) {
    const double* krow = ker + static_cast<std::size_t>(i) * k;
    const double* irow = img +
                         static_cast<std::size_t>(b.img_y0 + (i - b.ker_y0)) * w +
                         (b.img_x0 - b.ker_x0);
    for (int j = b.ker_x0; j < b.ker_x1; ++j) {
      product += krow[j] * irow[j];
      used += krow[j];
    }
  }
  SiteEmission out;
  out.product_sum = product;
  out.used_kernel_sum = used;
  out.emission = product * (used / total);
  return out;
}

}  // namespace

SiteEmission reconstruct_site(const Image& image, const CropBounds& bounds,
                              const Kernel& projector,
                              double total_kernel_sum) {
  check_total(total_kernel_sum);
  check_bounds(image, bounds, projector.size());
  return project(image, bounds, projector, total_kernel_sum);
}

SiteEmission reconstruct_site(const Image& image, const CropBounds& bounds,
                              const Kernel& projector) {
  return reconstruct_site(image, bounds, projector, projector.sum());
}

int default_thread_count() {
  if (const char* env = std::getenv("ATOMDET_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<int>(n);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

ReconstructionPlan::ReconstructionPlan(const CalibrationProfile& profile,
                                       int image_width, int image_height)
    : projector_(profile.projector),
      rows_(profile.grid.rows()),
      cols_(profile.grid.cols()),
      width_(image_width),
      height_(image_height),
      total_(profile.projector.sum()) {
  check_total(total_);
  const int k = projector_.size();
  bounds_.reserve(static_cast<std::size_t>(rows_) * cols_);
  for (int r = 0; r < rows_; ++r) {
    for (int c = 0; c < cols_; ++c) {
      try {
        bounds_.push_back(extract_boundaries(profile.grid.site_position(r, c),
                                             width_, height_, k));
      } catch (const GeometryError& e) {
        throw GeometryError("site (" + std::to_string(r) + ", " +
                            std::to_string(c) + "): " + e.what());
      }
    }
  }
}

EmissionMatrix ReconstructionPlan::run(const Image& image, int threads) const {
  if (image.width() != width_ || image.height() != height_)
    throw GeometryError("image is " + std::to_string(image.width()) + "x" +
                        std::to_string(image.height()) + " but the plan expects " +
                        std::to_string(width_) + "x" + std::to_string(height_));
  if (threads <= 0) threads = default_thread_count();

  const int n = static_cast<int>(bounds_.size());
  std::vector<double> out(bounds_.size());
#pragma omp parallel for num_threads(threads) schedule(static)
  for (int s = 0; s < n; ++s) {
    out[s] = project(image, bounds_[s], projector_, total_).emission;
  }
  return EmissionMatrix(rows_, cols_, std::move(out));
}

EmissionMatrix reconstruct_all(const Image& image,
                               const CalibrationProfile& profile,
                               int threads) {
  return ReconstructionPlan(profile, image.width(), image.height())
      .run(image, threads);
}

TreeSum adder_tree_sum(std::span<const double> values) {
  if (values.empty()) return {};
  std::size_t width = 1;
  int depth = 0;
  while (width < values.size()) {
    width <<= 1;
    ++depth;
  }
  std::vector<double> lanes(width, 0.0);
  std::copy(values.begin(), values.end(), lanes.begin());
  for (std::size_t active = width; active > 1; active /= 2) {
    for (std::size_t i = 0; i < active / 2; ++i)
      lanes[i] = lanes[2 * i] + lanes[2 * i + 1];
  }
  return {lanes[0], depth};
}

OccupancyMatrix apply_threshold(const EmissionMatrix& emissions,
                                double threshold) {
  if (!std::isfinite(threshold))
    throw std::invalid_argument("threshold must be finite");
  std::vector<std::uint8_t> occ(emissions.values().size());
  std::transform(emissions.values().begin(), emissions.values().end(),
                 occ.begin(),
                 [threshold](double e) -> std::uint8_t { return e > threshold; });
  return OccupancyMatrix(emissions.rows(), emissions.cols(), std::move(occ));
}

}  // namespace atomdet
