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

// Shared value types for the detection pipeline.
//
// Coordinates are (x, y) with x running along image columns and y along image
// rows; pixel (0, 0) is the top-left corner and pixel centers sit on integer
// coordinates. Every type here is immutable once constructed and may be read
// from any number of threads.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace atomdet {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Left-to-right sequential double sum. This is the one summation order used
/// for every emission, so serial and parallel runs agree bit for bit.
double canonical_sum(std::span<const double> values) noexcept;

/// Nearest pixel index to coordinate v in [0, extent), halves away from zero.
/// Coordinates in [extent - 0.5, extent) map to the last pixel.
int nearest_pixel(double v, int extent) noexcept;

/// Camera or simulated frame of photoelectron counts, row-major.
class Image {
 public:
  Image() = default;
  /// Throws std::invalid_argument on zero dimensions, size mismatch, or a
  /// negative / non-finite pixel.
  Image(int width, int height, std::vector<double> data);

  /// Constant-valued frame.
  static Image filled(int width, int height, double value);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::span<const double> data() const noexcept { return data_; }
  double at(int x, int y) const noexcept {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  std::span<const double> row(int y) const noexcept {
    return std::span<const double>(data_).subspan(
        static_cast<std::size_t>(y) * width_, width_);
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

/// Rectangular tweezer lattice, possibly rotated.
///
/// site(r, c) = origin + r * spacing * (-sin a, cos a) + c * spacing * (cos a, sin a)
class GridGeometry {
 public:
  GridGeometry() = default;
  /// Throws std::invalid_argument unless spacing > 0, angle in (-pi/4, pi/4],
  /// rows, cols > 0 and the origin is finite.
  GridGeometry(Point origin, double spacing, double angle_rad, int rows,
               int cols);

  Point origin() const noexcept { return origin_; }
  double spacing() const noexcept { return spacing_; }
  double angle() const noexcept { return angle_; }
  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  int site_count() const noexcept { return rows_ * cols_; }

  Point site_position(int row, int col) const noexcept;
  /// Lattice displacement for a step of (drow, dcol) sites.
  Point offset(int drow, int dcol) const noexcept;

  /// True when every site lies in [0, width) x [0, height).
  bool fits(int width, int height) const noexcept;

 private:
  Point origin_;
  double spacing_ = 1.0;
  double angle_ = 0.0;
  int rows_ = 1;
  int cols_ = 1;
};

/// Square odd-sized real matrix; either a point-spread function or a
/// projector.
class Kernel {
 public:
  Kernel() = default;
  /// Throws std::invalid_argument unless size is odd and positive, data has
  /// size*size entries and all are finite.
  Kernel(int size, std::vector<double> data);

  static Kernel zeros(int size);

  int size() const noexcept { return size_; }
  int half() const noexcept { return (size_ - 1) / 2; }
  std::span<const double> data() const noexcept { return data_; }
  double at(int i, int j) const noexcept {
    return data_[static_cast<std::size_t>(i) * size_ + j];
  }
  /// canonical_sum over all entries.
  double sum() const noexcept;

  friend bool operator==(const Kernel&, const Kernel&) = default;

 private:
  int size_ = 0;
  std::vector<double> data_;
};

/// Reconstructed brightness per site, row-major.
class EmissionMatrix {
 public:
  EmissionMatrix() = default;
  EmissionMatrix(int rows, int cols, std::vector<double> values);

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::span<const double> values() const noexcept { return values_; }
  double at(int r, int c) const noexcept {
    return values_[static_cast<std::size_t>(r) * cols_ + c];
  }

  friend bool operator==(const EmissionMatrix&, const EmissionMatrix&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> values_;
};

/// Per-site detection result, row-major; 1 = atom present.
class OccupancyMatrix {
 public:
  OccupancyMatrix() = default;
  OccupancyMatrix(int rows, int cols, std::vector<std::uint8_t> values);

  static OccupancyMatrix empty(int rows, int cols);
  static OccupancyMatrix full(int rows, int cols);

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::span<const std::uint8_t> values() const noexcept { return values_; }
  bool at(int r, int c) const noexcept {
    return values_[static_cast<std::size_t>(r) * cols_ + c] != 0;
  }
  int count() const noexcept;

  friend bool operator==(const OccupancyMatrix&, const OccupancyMatrix&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::uint8_t> values_;
};

}  // namespace atomdet
