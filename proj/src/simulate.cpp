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

#include "atomdet/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "atomdet/error.hpp"
#include "atomdet/random.hpp"

namespace atomdet {

void ForwardModel::validate() const {
  if (psf.size() == 0) throw std::invalid_argument("forward model has no psf");
  double total = 0.0;
  for (double v : psf.data()) {
    if (v < 0.0) throw std::invalid_argument("psf entries must be >= 0");
    total += v;
  }
  if (std::fabs(total - 1.0) > 1e-12)
    throw std::invalid_argument("psf must sum to 1");
  if (!std::isfinite(background) || background < 0.0)
    throw std::invalid_argument("background must be finite and >= 0");
  if (!std::isfinite(gamma) || !(gamma > 0.0))
    throw std::invalid_argument("gamma must be finite and > 0");
  if (!std::isfinite(noise.read_sigma) || noise.read_sigma < 0.0)
    throw std::invalid_argument("read noise sigma must be finite and >= 0");
}

Kernel gaussian_psf(int size, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("psf sigma must be > 0");
  if (size <= 0 || size % 2 == 0)
    throw std::invalid_argument("kernel size must be odd and positive");
  const int half = (size - 1) / 2;
  std::vector<double> data(static_cast<std::size_t>(size) * size);
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const double dy = i - half;
      const double dx = j - half;
      data[static_cast<std::size_t>(i) * size + j] =
          std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    }
  }
  const double total = canonical_sum(data);
  for (double& v : data) v /= total;
  // Division leaves the sum a few ulps from 1; push the residue into the
  // center pixel so the unit-sum check holds tightly.
  data[static_cast<std::size_t>(half) * size + half] += 1.0 - canonical_sum(data);
  return Kernel(size, std::move(data));
}

Kernel delta_psf(int size) {
  if (size <= 0 || size % 2 == 0)
    throw std::invalid_argument("kernel size must be odd and positive");
  std::vector<double> data(static_cast<std::size_t>(size) * size, 0.0);
  const int half = (size - 1) / 2;
  data[static_cast<std::size_t>(half) * size + half] = 1.0;
  return Kernel(size, std::move(data));
}

namespace {

void check_inputs(const ForwardModel& model, const GridGeometry& grid,
                  const OccupancyMatrix& occupancy, int width, int height) {
  model.validate();
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("image dimensions must be positive");
  if (occupancy.rows() != grid.rows() || occupancy.cols() != grid.cols())
    throw std::invalid_argument("occupancy shape does not match grid");
  for (int r = 0; r < grid.rows(); ++r) {
    for (int c = 0; c < grid.cols(); ++c) {
      const Point p = grid.site_position(r, c);
      if (!(p.x >= 0.0 && p.x < width && p.y >= 0.0 && p.y < height))
        throw GeometryError("site (" + std::to_string(r) + ", " +
                            std::to_string(c) + ") at (" + std::to_string(p.x) +
                            ", " + std::to_string(p.y) +
                            ") lies outside the " + std::to_string(width) + "x" +
                            std::to_string(height) + " image");
    }
  }
}

std::vector<double> lambda_map(const ForwardModel& model,
                               const GridGeometry& grid,
                               const OccupancyMatrix& occupancy, int width,
                               int height) {
  std::vector<double> img(static_cast<std::size_t>(width) * height,
                          model.background);
  const int size = model.psf.size();
  const int half = model.psf.half();
  for (int r = 0; r < grid.rows(); ++r) {
    for (int c = 0; c < grid.cols(); ++c) {
      if (!occupancy.at(r, c)) continue;
      const Point p = grid.site_position(r, c);
      const long cx = nearest_pixel(p.x, width);
      const long cy = nearest_pixel(p.y, height);
      for (int i = 0; i < size; ++i) {
        const long y = cy - half + i;
        if (y < 0 || y >= height) continue;
        for (int j = 0; j < size; ++j) {
          const long x = cx - half + j;
          if (x < 0 || x >= width) continue;
          img[static_cast<std::size_t>(y) * width + x] +=
              model.gamma * model.psf.at(i, j);
        }
      }
    }
  }
  return img;
}

}  // namespace

Image expected_image(const ForwardModel& model, const GridGeometry& grid,
                     const OccupancyMatrix& occupancy, int width, int height) {
  check_inputs(model, grid, occupancy, width, height);
  return Image(width, height, lambda_map(model, grid, occupancy, width, height));
}

Image sample_image(const ForwardModel& model, const GridGeometry& grid,
                   const OccupancyMatrix& occupancy, int width, int height) {
  check_inputs(model, grid, occupancy, width, height);
  std::vector<double> img = lambda_map(model, grid, occupancy, width, height);
  if (model.noise.kind == NoiseKind::kNone)
    return Image(width, height, std::move(img));

  const bool gaussian = model.noise.kind == NoiseKind::kPoissonGaussian &&
                        model.noise.read_sigma > 0.0;
  for (std::size_t p = 0; p < img.size(); ++p) {
    rng::CounterRng gen(model.seed, rng::kStreamPixelNoise, p);
    double v = static_cast<double>(gen.poisson(img[p]));
    if (gaussian) v = std::max(0.0, v + model.noise.read_sigma * gen.normal());
    img[p] = v;
  }
  return Image(width, height, std::move(img));
}

OccupancyMatrix make_truth(int rows, int cols, double fill_fraction,
                           std::uint64_t seed) {
  if (rows <= 0 || cols <= 0)
    throw std::invalid_argument("truth must have at least one site");
  if (!(fill_fraction >= 0.0 && fill_fraction <= 1.0))
    throw std::invalid_argument("fill fraction must lie in [0, 1]");
  std::vector<std::uint8_t> v(static_cast<std::size_t>(rows) * cols);
  for (std::size_t i = 0; i < v.size(); ++i) {
    rng::CounterRng gen(seed, rng::kStreamOccupancy, i);
    v[i] = gen.uniform() < fill_fraction ? 1 : 0;
  }
  return OccupancyMatrix(rows, cols, std::move(v));
}

int Scene::width() const {
  return static_cast<int>(std::lround(cols * spacing));
}

int Scene::height() const {
  return static_cast<int>(std::lround(rows * spacing));
}

GridGeometry centered_grid(int rows, int cols, double spacing, double angle,
                           int width, int height) {
  const double cx = (width - 1) / 2.0;
  const double cy = (height - 1) / 2.0;
  const double mr = (rows - 1) / 2.0;
  const double mc = (cols - 1) / 2.0;
  const double co = std::cos(angle);
  const double si = std::sin(angle);
  const Point origin{cx - (mr * spacing * -si + mc * spacing * co),
                     cy - (mr * spacing * co + mc * spacing * si)};
  return GridGeometry(origin, spacing, angle, rows, cols);
}

GridGeometry Scene::grid() const {
  return centered_grid(rows, cols, spacing, angle, width(), height());
}

ForwardModel Scene::model(std::uint64_t seed) const {
  ForwardModel m{gaussian_psf(kernel_size, psf_sigma), background, gamma,
                 noise, seed};
  m.validate();
  return m;
}

}  // namespace atomdet
