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

// Test-only reference computations. None of these call into the library's
// numeric paths; they are deliberately naive.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "atomdet/core_types.hpp"

namespace atomdet::testing {

// Plain indexed accumulation loop.
inline double loop_sum(const std::vector<double>& v) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s = s + v[i];
  return s;
}

// Dense scatter of every (occupied site, kernel pixel) pair into a frame
// initialised to the background.
inline std::vector<double> scatter_image(const std::vector<double>& psf, int k,
                                         double background, double gamma,
                                         const std::vector<Point>& sites,
                                         const std::vector<bool>& occupied,
                                         int width, int height) {
  std::vector<double> img(static_cast<std::size_t>(width) * height, background);
  const int half = k / 2;
  for (std::size_t s = 0; s < sites.size(); ++s) {
    if (!occupied[s]) continue;
    // Nearest existing pixel.
    const int cx = std::min(static_cast<int>(std::floor(sites[s].x + 0.5)), width - 1);
    const int cy = std::min(static_cast<int>(std::floor(sites[s].y + 0.5)), height - 1);
    for (int p = 0; p < k * k; ++p) {
      const int x = cx + (p % k) - half;
      const int y = cy + (p / k) - half;
      if (x >= 0 && x < width && y >= 0 && y < height)
        img[static_cast<std::size_t>(y) * width + x] += gamma * psf[p];
    }
  }
  return img;
}

struct MaskedResult {
  double product_sum;
  double used_sum;
  double emission;
};

// Edge-normalised emission evaluated over the whole k x k kernel with an
// explicitly materialised usage mask u(i, j).
inline MaskedResult masked_emission(const std::vector<double>& image, int width,
                                    int height, const std::vector<double>& kernel,
                                    int k, Point site) {
  const int cx = std::min(static_cast<int>(std::floor(site.x + 0.5)), width - 1);
  const int cy = std::min(static_cast<int>(std::floor(site.y + 0.5)), height - 1);
  const int half = k / 2;
  std::vector<int> u(static_cast<std::size_t>(k) * k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const int x = cx - half + j;
      const int y = cy - half + i;
      u[i * k + j] = (x >= 0 && x < width && y >= 0 && y < height) ? 1 : 0;
    }
  double product = 0.0, used = 0.0, total = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double kij = kernel[i * k + j];
      total += kij;
      if (u[i * k + j] == 0) continue;
      const double iij = image[static_cast<std::size_t>(cy - half + i) * width + (cx - half + j)];
      product += kij * iij * u[i * k + j];
      used += kij * u[i * k + j];
    }
  return {product, used, product * used / total};
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::path(ATOMDET_TEST_TMPDIR) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace atomdet::testing
