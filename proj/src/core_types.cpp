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

#include "atomdet/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace atomdet {

double canonical_sum(std::span<const double> values) noexcept {
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc;
}

int nearest_pixel(double v, int extent) noexcept {
  return static_cast<int>(std::min(std::lround(v), static_cast<long>(extent) - 1));
}

Image::Image(int width, int height, std::vector<double> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("image dimensions must be positive");
  if (data_.size() != static_cast<std::size_t>(width) * height)
    throw std::invalid_argument("image data length " +
                                std::to_string(data_.size()) +
                                " does not match " + std::to_string(width) +
                                "x" + std::to_string(height));
  for (double v : data_) {
    if (!std::isfinite(v) || v < 0.0)
      throw std::invalid_argument("image pixels must be finite and >= 0");
  }
}

Image Image::filled(int width, int height, double value) {
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("image dimensions must be positive");
  return Image(width, height,
               std::vector<double>(static_cast<std::size_t>(width) * height,
                                   value));
}

GridGeometry::GridGeometry(Point origin, double spacing, double angle_rad,
                           int rows, int cols)
    : origin_(origin),
      spacing_(spacing),
      angle_(angle_rad),
      rows_(rows),
      cols_(cols) {
  constexpr double kQuarter = std::numbers::pi / 4.0;
  if (!std::isfinite(origin.x) || !std::isfinite(origin.y))
    throw std::invalid_argument("grid origin must be finite");
  if (!(spacing > 0.0) || !std::isfinite(spacing))
    throw std::invalid_argument("grid spacing must be positive");
  if (!(angle_rad > -kQuarter && angle_rad <= kQuarter))
    throw std::invalid_argument("grid angle must lie in (-pi/4, pi/4]");
  if (rows <= 0 || cols <= 0)
    throw std::invalid_argument("grid must have at least one row and column");
}

Point GridGeometry::offset(int drow, int dcol) const noexcept {
  const double c = std::cos(angle_);
  const double s = std::sin(angle_);
  return {drow * spacing_ * -s + dcol * spacing_ * c,
          drow * spacing_ * c + dcol * spacing_ * s};
}

Point GridGeometry::site_position(int row, int col) const noexcept {
  if (row == 0 && col == 0) return origin_;
  const Point d = offset(row, col);
  return {origin_.x + d.x, origin_.y + d.y};
}

bool GridGeometry::fits(int width, int height) const noexcept {
  for (int r = 0; r < rows_; ++r) {
    for (int c = 0; c < cols_; ++c) {
      const Point p = site_position(r, c);
      if (!(p.x >= 0.0 && p.x < width && p.y >= 0.0 && p.y < height))
        return false;
    }
  }
  return true;
}

Kernel::Kernel(int size, std::vector<double> data)
    : size_(size), data_(std::move(data)) {
  if (size <= 0 || size % 2 == 0)
    throw std::invalid_argument("kernel size must be odd and positive, got " +
                                std::to_string(size));
  if (data_.size() != static_cast<std::size_t>(size) * size)
    throw std::invalid_argument("kernel data length does not match size");
  for (double v : data_) {
    if (!std::isfinite(v))
      throw std::invalid_argument("kernel entries must be finite");
  }
}

Kernel Kernel::zeros(int size) {
  return Kernel(size, std::vector<double>(
                          static_cast<std::size_t>(std::max(size, 0)) *
                          std::max(size, 0)));
}

double Kernel::sum() const noexcept { return canonical_sum(data_); }

EmissionMatrix::EmissionMatrix(int rows, int cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (rows < 0 || cols < 0 ||
      values_.size() != static_cast<std::size_t>(rows) * cols)
    throw std::invalid_argument("emission matrix shape mismatch");
  for (double v : values_) {
    if (!std::isfinite(v))
      throw std::invalid_argument("emission values must be finite");
  }
}

OccupancyMatrix::OccupancyMatrix(int rows, int cols,
                                 std::vector<std::uint8_t> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (rows < 0 || cols < 0 ||
      values_.size() != static_cast<std::size_t>(rows) * cols)
    throw std::invalid_argument("occupancy matrix shape mismatch");
  for (auto& v : values_) v = v != 0 ? 1 : 0;
}

OccupancyMatrix OccupancyMatrix::empty(int rows, int cols) {
  return OccupancyMatrix(
      rows, cols, std::vector<std::uint8_t>(static_cast<std::size_t>(rows) * cols, 0));
}

OccupancyMatrix OccupancyMatrix::full(int rows, int cols) {
  return OccupancyMatrix(
      rows, cols, std::vector<std::uint8_t>(static_cast<std::size_t>(rows) * cols, 1));
}

int OccupancyMatrix::count() const noexcept {
  return static_cast<int>(std::count(values_.begin(), values_.end(), 1));
}

}  // namespace atomdet
