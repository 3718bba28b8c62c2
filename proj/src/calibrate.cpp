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

#include "atomdet/calibrate.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

#include "atomdet/error.hpp"
#include "atomdet/reconstruct.hpp"

namespace atomdet {

namespace {

constexpr double kPi = std::numbers::pi;

// Raised by detect_grid when nothing at all rises above the background.
class NoBrightSpot : public CalibrationError {
 public:
  using CalibrationError::CalibrationError;
};

void check_same_size(std::span<const Image> images, const char* stage) {
  if (images.empty()) throw CalibrationError(stage, "no calibration images");
  for (const Image& im : images) {
    if (im.width() != images[0].width() || im.height() != images[0].height())
      throw CalibrationError(
          stage, "dimension mismatch: " + std::to_string(im.width()) + "x" +
                     std::to_string(im.height()) + " vs " +
                     std::to_string(images[0].width()) + "x" +
                     std::to_string(images[0].height()));
  }
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

std::vector<double> average(std::span<const Image> images) {
  std::vector<double> avg(images[0].data().size(), 0.0);
  for (const Image& im : images) {
    const auto d = im.data();
    for (std::size_t p = 0; p < avg.size(); ++p) avg[p] += d[p];
  }
  const double inv = 1.0 / static_cast<double>(images.size());
  for (double& v : avg) v *= inv;
  return avg;
}

// 3x3 mean over the pixels that exist.
std::vector<double> box3(const std::vector<double>& src, int w, int h) {
  std::vector<double> out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          acc += src[static_cast<std::size_t>(yy) * w + xx];
          ++n;
        }
      }
      out[static_cast<std::size_t>(y) * w + x] = acc / n;
    }
  }
  return out;
}

struct Peak {
  Point pos;
  double value;
};

// Local maxima of `s` over a (2r+1)^2 neighbourhood above `thr`. Plateaus are
// broken in raster order so each flat top yields one pixel.
std::vector<Peak> local_maxima(const std::vector<double>& s, int w, int h,
                               double thr, int r) {
  std::vector<Peak> peaks;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = s[static_cast<std::size_t>(y) * w + x];
      if (!(v > thr)) continue;
      bool is_max = true;
      for (int dy = -r; dy <= r && is_max; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -r; dx <= r; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= w || (dx == 0 && dy == 0)) continue;
          const double q = s[static_cast<std::size_t>(yy) * w + xx];
          const bool earlier = dy < 0 || (dy == 0 && dx < 0);
          if (q > v || (earlier && q == v)) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) peaks.push_back({{double(x), double(y)}, v});
    }
  }
  return peaks;
}

// Intensity centroid of (img - bg)+ in a (2r+1)^2 window around a pixel.
Point centroid(const std::vector<double>& img, int w, int h, int px, int py,
               double bg, int r) {
  double sx = 0.0, sy = 0.0, sw = 0.0;
  for (int y = std::max(py - r, 0); y <= std::min(py + r, h - 1); ++y) {
    for (int x = std::max(px - r, 0); x <= std::min(px + r, w - 1); ++x) {
      const double v = img[static_cast<std::size_t>(y) * w + x] - bg;
      if (v <= 0.0) continue;
      sx += v * x;
      sy += v * y;
      sw += v;
    }
  }
  if (sw <= 0.0) return {double(px), double(py)};
  return {sx / sw, sy / sw};
}

struct LatticeFit {
  Point origin;
  double a;  // spacing * cos(angle)
  double b;  // spacing * sin(angle)
};

// Real-valued lattice coordinates (col, row) of p.
std::pair<double, double> lattice_coords(const LatticeFit& f, Point p) {
  const double dx = p.x - f.origin.x;
  const double dy = p.y - f.origin.y;
  const double s2 = f.a * f.a + f.b * f.b;
  return {(dx * f.a + dy * f.b) / s2, (-dx * f.b + dy * f.a) / s2};
}

// Least squares for x = ox + c*a - r*b, y = oy + c*b + r*a.
LatticeFit fit_lattice(const std::vector<Point>& pts,
                       const std::vector<std::pair<int, int>>& idx) {
  Eigen::MatrixXd m(2 * pts.size(), 4);
  Eigen::VectorXd rhs(2 * pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const double c = idx[k].first;
    const double r = idx[k].second;
    m.row(2 * k) << 1.0, 0.0, c, -r;
    m.row(2 * k + 1) << 0.0, 1.0, r, c;
    rhs(2 * k) = pts[k].x;
    rhs(2 * k + 1) = pts[k].y;
  }
  const Eigen::VectorXd sol = m.colPivHouseholderQr().solve(rhs);
  return {{sol(0), sol(1)}, sol(2), sol(3)};
}

}  // namespace

GridGeometry detect_grid(std::span<const Image> images, int expected_rows,
                         int expected_cols) {
  constexpr const char* kStage = "grid-detection";
  check_same_size(images, kStage);
  if (expected_rows <= 0 || expected_cols <= 0)
    throw CalibrationError(kStage, "expected lattice dimensions must be positive");

  const int w = images[0].width();
  const int h = images[0].height();
  const std::vector<double> avg = average(images);
  const std::vector<double> smooth = box3(avg, w, h);

  const double bg = median_of(smooth);
  std::vector<double> dev(smooth.size());
  std::transform(smooth.begin(), smooth.end(), dev.begin(),
                 [bg](double v) { return std::fabs(v - bg); });
  const double sigma = 1.4826 * median_of(std::move(dev));
  const double top = *std::max_element(smooth.begin(), smooth.end());
  const double thr = bg + std::max(5.0 * sigma, 0.2 * (top - bg));

  std::vector<Peak> raw = top > bg ? local_maxima(smooth, w, h, thr, 2)
                                   : std::vector<Peak>{};
  const auto too_few = [&](std::size_t n, const std::string& detail) {
    return CalibrationError(kStage, "found " + std::to_string(n) +
                                        " candidate peaks; " + detail);
  };
  if (raw.empty())
    throw NoBrightSpot(kStage, "found 0 candidate peaks; images show no bright spot");
  if (raw.size() < 2) throw too_few(raw.size(), "need at least 2 bright spots");

  std::vector<Point> pts;
  pts.reserve(raw.size());
  for (const Peak& p : raw)
    pts.push_back(centroid(avg, w, h, int(p.pos.x), int(p.pos.y), bg, 3));

  // Nearest-neighbour displacement per peak.
  std::vector<double> nn_len(pts.size());
  std::vector<Point> nn_vec(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (i == j) continue;
      const double dx = pts[j].x - pts[i].x;
      const double dy = pts[j].y - pts[i].y;
      const double d = std::hypot(dx, dy);
      if (d < best) {
        best = d;
        nn_vec[i] = {dx, dy};
      }
    }
    nn_len[i] = best;
  }
  const double nn_median = median_of(nn_len);
  double sum4s = 0.0, sum4c = 0.0, len_sum = 0.0;
  int len_n = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (nn_len[i] < 0.8 * nn_median || nn_len[i] > 1.2 * nn_median) continue;
    const double phi = std::atan2(nn_vec[i].y, nn_vec[i].x);
    sum4s += std::sin(4.0 * phi);
    sum4c += std::cos(4.0 * phi);
    len_sum += nn_len[i];
    ++len_n;
  }
  if (len_n == 0 || !(nn_median > 0.0))
    throw too_few(pts.size(), "no consistent neighbour spacing");
  double angle = std::atan2(sum4s, sum4c) / 4.0;
  if (angle <= -kPi / 4.0) angle += kPi / 2.0;
  const double spacing0 = len_sum / len_n;

  // Initial lattice through the phase of the projected coordinates.
  LatticeFit fit{{0.0, 0.0}, spacing0 * std::cos(angle), spacing0 * std::sin(angle)};
  {
    double su = 0.0, cu = 0.0, sv = 0.0, cv = 0.0;
    for (const Point& p : pts) {
      const auto [u, v] = lattice_coords(fit, p);
      su += std::sin(2.0 * kPi * u);
      cu += std::cos(2.0 * kPi * u);
      sv += std::sin(2.0 * kPi * v);
      cv += std::cos(2.0 * kPi * v);
    }
    const double pu = std::atan2(su, cu) / (2.0 * kPi);
    const double pv = std::atan2(sv, cv) / (2.0 * kPi);
    fit.origin = {pu * fit.a - pv * fit.b, pu * fit.b + pv * fit.a};
  }

  std::vector<std::pair<int, int>> idx(pts.size());
  std::vector<Point> kept_pts;
  std::vector<std::pair<int, int>> kept_idx;
  for (int iter = 0; iter < 10; ++iter) {
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const auto [u, v] = lattice_coords(fit, pts[k]);
      idx[k] = {static_cast<int>(std::lround(u)), static_cast<int>(std::lround(v))};
    }

    // Choose the expected_cols x expected_rows index window holding the most
    // peaks; anything outside is spurious.
    int cmin = idx[0].first, cmax = cmin, rmin = idx[0].second, rmax = rmin;
    for (const auto& [c, r] : idx) {
      cmin = std::min(cmin, c);
      cmax = std::max(cmax, c);
      rmin = std::min(rmin, r);
      rmax = std::max(rmax, r);
    }
    const int cols_seen = cmax - cmin + 1;
    const int rows_seen = rmax - rmin + 1;
    if (cols_seen < expected_cols || rows_seen < expected_rows)
      throw too_few(pts.size(),
                    "they span " + std::to_string(rows_seen) + " rows x " +
                        std::to_string(cols_seen) + " columns, expected " +
                        std::to_string(expected_rows) + " x " +
                        std::to_string(expected_cols));
    int best_c = cmin, best_r = rmin, best_n = -1;
    for (int c0 = cmin; c0 + expected_cols - 1 <= cmax; ++c0) {
      for (int r0 = rmin; r0 + expected_rows - 1 <= rmax; ++r0) {
        int n = 0;
        for (const auto& [c, r] : idx)
          n += c >= c0 && c < c0 + expected_cols && r >= r0 && r < r0 + expected_rows;
        if (n > best_n) {
          best_n = n;
          best_c = c0;
          best_r = r0;
        }
      }
    }

    kept_pts.clear();
    std::vector<std::pair<int, int>> next_idx;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const int c = idx[k].first - best_c;
      const int r = idx[k].second - best_r;
      if (c < 0 || c >= expected_cols || r < 0 || r >= expected_rows) continue;
      kept_pts.push_back(pts[k]);
      next_idx.emplace_back(c, r);
    }
    const bool stable = next_idx == kept_idx;
    kept_idx = std::move(next_idx);
    if (kept_pts.size() < 3)
      throw too_few(pts.size(), "fewer than 3 lie on the lattice");
    fit = fit_lattice(kept_pts, kept_idx);
    if (stable) break;
  }

  const double spacing = std::hypot(fit.a, fit.b);
  double fitted_angle = std::atan2(fit.b, fit.a);
  if (!(fitted_angle > -kPi / 4.0 && fitted_angle <= kPi / 4.0))
    throw CalibrationError(kStage, "fitted lattice angle out of range");
  GridGeometry grid(fit.origin, spacing, fitted_angle, expected_rows, expected_cols);
  if (!grid.fits(w, h))
    throw CalibrationError(kStage, "fitted lattice extends outside the image");
  return grid;
}

namespace {

// Distance from p to the nearest site of the grid.
double distance_to_grid(const GridGeometry& grid, Point p) {
  const LatticeFit f{grid.origin(), grid.spacing() * std::cos(grid.angle()),
                     grid.spacing() * std::sin(grid.angle())};
  const auto [u, v] = lattice_coords(f, p);
  const int c0 = std::clamp(static_cast<int>(std::lround(u)), 0, grid.cols() - 1);
  const int r0 = std::clamp(static_cast<int>(std::lround(v)), 0, grid.rows() - 1);
  double best = std::numeric_limits<double>::infinity();
  for (int r = std::max(r0 - 1, 0); r <= std::min(r0 + 1, grid.rows() - 1); ++r) {
    for (int c = std::max(c0 - 1, 0); c <= std::min(c0 + 1, grid.cols() - 1); ++c) {
      const Point s = grid.site_position(r, c);
      best = std::min(best, std::hypot(p.x - s.x, p.y - s.y));
    }
  }
  return best;
}

}  // namespace

double estimate_background(std::span<const Image> images,
                           const GridGeometry& grid, int kernel_size) {
  check_same_size(images, "background");
  const int w = images[0].width();
  const int h = images[0].height();
  std::vector<double> dist(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      dist[static_cast<std::size_t>(y) * w + x] = distance_to_grid(grid, {double(x), double(y)});

  double cut = kernel_size / 2.0;
  const double far = *std::max_element(dist.begin(), dist.end());
  if (!(far > cut)) {
    std::vector<double> sorted = dist;
    const auto q = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() * 95 / 100);
    std::nth_element(sorted.begin(), q, sorted.end());
    cut = std::nextafter(*q, -1.0);
  }

  std::vector<double> pool;
  for (const Image& im : images) {
    const auto d = im.data();
    for (std::size_t p = 0; p < d.size(); ++p)
      if (dist[p] > cut) pool.push_back(d[p]);
  }
  return median_of(std::move(pool));
}

Kernel extract_psf(std::span<const Image> images, const GridGeometry& grid,
                   int kernel_size, double background) {
  constexpr const char* kStage = "psf-extraction";
  check_same_size(images, kStage);
  if (kernel_size <= 0 || kernel_size % 2 == 0)
    throw CalibrationError(kStage, "kernel size must be odd and positive");
  const int w = images[0].width();
  const int h = images[0].height();
  if (!grid.fits(w, h))
    throw CalibrationError(kStage, "grid does not fit the images");

  std::vector<CropBounds> crops;
  for (int r = 0; r < grid.rows(); ++r)
    for (int c = 0; c < grid.cols(); ++c)
      crops.push_back(extract_boundaries(grid.site_position(r, c), w, h, kernel_size));

  // Background-subtracted sum of every crop in every frame.
  std::vector<double> excess(images.size() * crops.size());
  double max_excess = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t s = 0; s < crops.size(); ++s) {
      const CropBounds& b = crops[s];
      double acc = 0.0;
      for (int y = b.img_y0; y < b.img_y1; ++y)
        for (int x = b.img_x0; x < b.img_x1; ++x)
          acc += images[i].at(x, y) - background;
      excess[i * crops.size() + s] = acc;
      max_excess = std::max(max_excess, acc);
    }
  }
  const double shot = 5.0 * std::sqrt(std::max(background, 0.0) *
                                      kernel_size * kernel_size);
  const double cut = std::max(shot, 0.25 * max_excess);

  std::vector<double> sum(static_cast<std::size_t>(kernel_size) * kernel_size, 0.0);
  std::vector<int> count(sum.size(), 0);
  int bright = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t s = 0; s < crops.size(); ++s) {
      if (!(excess[i * crops.size() + s] > cut)) continue;
      ++bright;
      const CropBounds& b = crops[s];
      for (int ky = b.ker_y0; ky < b.ker_y1; ++ky) {
        for (int kx = b.ker_x0; kx < b.ker_x1; ++kx) {
          const std::size_t k = static_cast<std::size_t>(ky) * kernel_size + kx;
          sum[k] += images[i].at(b.img_x0 + kx - b.ker_x0, b.img_y0 + ky - b.ker_y0) -
                    background;
          ++count[k];
        }
      }
    }
  }
  if (bright == 0)
    throw CalibrationError(kStage, "no bright site found in " +
                                       std::to_string(images.size()) + " images");

  for (std::size_t k = 0; k < sum.size(); ++k)
    sum[k] = count[k] > 0 ? std::max(sum[k] / count[k], 0.0) : 0.0;
  const double total = canonical_sum(sum);
  if (!(total > 0.0))
    throw CalibrationError(kStage, "bright sites carry no signal above background");
  for (double& v : sum) v /= total;
  return Kernel(kernel_size, std::move(sum));
}

DesignMatrix build_design_matrix(const Kernel& psf, const GridGeometry& grid) {
  const int k = psf.size();
  DesignMatrix dm;
  dm.kernel_size = k;
  dm.columns.push_back(psf);
  dm.offsets.emplace_back(0, 0);
  for (int dr = -1; dr <= 1; ++dr) {
    for (int dc = -1; dc <= 1; ++dc) {
      if (dr == 0 && dc == 0) continue;
      const Point off = grid.offset(dr, dc);
      const int dx = static_cast<int>(std::lround(off.x));
      const int dy = static_cast<int>(std::lround(off.y));
      std::vector<double> col(static_cast<std::size_t>(k) * k, 0.0);
      bool touches = false;
      for (int i = 0; i < k; ++i) {
        const int si = i - dy;
        if (si < 0 || si >= k) continue;
        for (int j = 0; j < k; ++j) {
          const int sj = j - dx;
          if (sj < 0 || sj >= k) continue;
          const double v = psf.at(si, sj);
          col[static_cast<std::size_t>(i) * k + j] = v;
          touches = touches || v != 0.0;
        }
      }
      if (!touches) continue;
      dm.columns.emplace_back(k, std::move(col));
      dm.offsets.emplace_back(dx, dy);
    }
  }
  return dm;
}

Kernel build_projector(const Kernel& psf, const GridGeometry& grid) {
  constexpr const char* kStage = "projector";
  const DesignMatrix dm = build_design_matrix(psf, grid);
  const int k = psf.size();
  const std::size_t n = static_cast<std::size_t>(k) * k;

  if (dm.columns.size() == 1) {
    double norm2 = 0.0;
    for (double v : psf.data()) norm2 += v * v;
    if (!(norm2 > 0.0)) throw CalibrationError(kStage, "psf is identically zero");
    std::vector<double> out(psf.data().begin(), psf.data().end());
    for (double& v : out) v /= norm2;
    return Kernel(k, std::move(out));
  }

  Eigen::MatrixXd a(n, dm.columns.size());
  for (std::size_t c = 0; c < dm.columns.size(); ++c)
    for (std::size_t p = 0; p < n; ++p) a(p, c) = dm.columns[c].data()[p];

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  if (!(smax > 0.0)) throw CalibrationError(kStage, "design matrix is zero");
  const double cutoff = 1e-10 * smax;

  // Row 0 of pinv(A) = V.row(0) * diag(1/s) * U^T over the kept singular values.
  Eigen::RowVectorXd coeff = Eigen::RowVectorXd::Zero(sv.size());
  int kept = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) {
      coeff(i) = svd.matrixV()(0, i) / sv(i);
      ++kept;
    }
  }
  if (kept == 0) throw CalibrationError(kStage, "all singular values below cutoff");
  const Eigen::RowVectorXd row = coeff * svd.matrixU().transpose();
  return Kernel(k, std::vector<double>(row.data(), row.data() + row.size()));
}

double otsu_threshold(std::span<const double> samples) {
  std::vector<double> v(samples.begin(), samples.end());
  std::sort(v.begin(), v.end());
  if (v.size() < 2 || v.front() == v.back())
    throw CalibrationError("threshold", "need at least two distinct values");
  const double n = static_cast<double>(v.size());
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  double left = 0.0;
  double best = -1.0;
  double thr = 0.5 * (v.front() + v.back());
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    left += v[i];
    if (v[i] == v[i + 1]) continue;
    const double n0 = static_cast<double>(i + 1);
    const double n1 = n - n0;
    const double m0 = left / n0;
    const double m1 = (total - left) / n1;
    const double between = n0 * n1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      thr = 0.5 * (v[i] + v[i + 1]);
    }
  }
  return thr;
}

namespace {

struct Mixture {
  double w[2];
  double mean[2];
  double var[2];
};

double log_normal(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * std::log(2.0 * kPi * var) - d * d / (2.0 * var);
}

}  // namespace

double calibrate_threshold(std::span<const double> emissions) {
  constexpr const char* kStage = "threshold";
  if (emissions.size() < 2)
    throw CalibrationError(kStage, "need at least two emission samples");
  for (double e : emissions)
    if (!std::isfinite(e)) throw CalibrationError(kStage, "non-finite emission");
  const auto [lo_it, hi_it] = std::minmax_element(emissions.begin(), emissions.end());
  const double span = *hi_it - *lo_it;
  const auto degenerate = [&] {
    return CalibrationError(kStage,
                            "emission histogram is not bimodal; use more "
                            "calibration images with both empty and filled sites");
  };
  if (!(span > 0.0)) throw degenerate();

  const double otsu = otsu_threshold(emissions);
  const double var_floor = (1e-6 * span) * (1e-6 * span);

  Mixture m{};
  {
    double s[2] = {0, 0}, s2[2] = {0, 0}, cnt[2] = {0, 0};
    for (double e : emissions) {
      const int k = e > otsu ? 1 : 0;
      s[k] += e;
      s2[k] += e * e;
      cnt[k] += 1.0;
    }
    for (int k = 0; k < 2; ++k) {
      m.w[k] = cnt[k] / emissions.size();
      m.mean[k] = s[k] / cnt[k];
      m.var[k] = std::max(s2[k] / cnt[k] - m.mean[k] * m.mean[k], var_floor);
    }
  }

  bool converged = false;
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 200; ++iter) {
    double nk[2] = {0, 0}, sx[2] = {0, 0}, sxx[2] = {0, 0};
    double ll = 0.0;
    for (double e : emissions) {
      const double l0 = std::log(m.w[0]) + log_normal(e, m.mean[0], m.var[0]);
      const double l1 = std::log(m.w[1]) + log_normal(e, m.mean[1], m.var[1]);
      const double top = std::max(l0, l1);
      const double lse = top + std::log(std::exp(l0 - top) + std::exp(l1 - top));
      ll += lse;
      const double r1 = std::exp(l1 - lse);
      const double r0 = 1.0 - r1;
      nk[0] += r0;
      nk[1] += r1;
      sx[0] += r0 * e;
      sx[1] += r1 * e;
      sxx[0] += r0 * e * e;
      sxx[1] += r1 * e * e;
    }
    if (nk[0] <= 0.0 || nk[1] <= 0.0) break;  // a component collapsed
    for (int k = 0; k < 2; ++k) {
      m.w[k] = nk[k] / emissions.size();
      m.mean[k] = sx[k] / nk[k];
      m.var[k] = std::max(sxx[k] / nk[k] - m.mean[k] * m.mean[k], var_floor);
    }
    if (std::fabs(ll - prev_ll) <= 1e-10 * std::fabs(ll) + 1e-300) {
      converged = true;
      break;
    }
    prev_ll = ll;
  }

  if (!converged) {
    if (std::fabs(m.mean[1] - m.mean[0]) < 0.01 * span) throw degenerate();
    return otsu;
  }
  int lo = m.mean[0] <= m.mean[1] ? 0 : 1;
  int hi = 1 - lo;
  if (m.mean[hi] - m.mean[lo] < 0.01 * span) throw degenerate();

  // Equal-posterior point between the means, by bisection on the log ratio.
  const auto diff = [&](double x) {
    return (std::log(m.w[lo]) + log_normal(x, m.mean[lo], m.var[lo])) -
           (std::log(m.w[hi]) + log_normal(x, m.mean[hi], m.var[hi]));
  };
  double a = m.mean[lo];
  double b = m.mean[hi];
  if (!(diff(a) > 0.0 && diff(b) < 0.0)) return otsu;
  for (int i = 0; i < 200 && b - a > 0.0; ++i) {
    const double mid = 0.5 * (a + b);
    if (mid <= a || mid >= b) break;
    (diff(mid) > 0.0 ? a : b) = mid;
  }
  return 0.5 * (a + b);
}

CalibrationProfile calibrate(std::span<const Image> images, int expected_rows,
                             int expected_cols, int kernel_size) {
  check_same_size(images, "input");
  if (kernel_size <= 0 || kernel_size % 2 == 0)
    throw CalibrationError("input", "kernel size must be odd and positive");

  GridGeometry grid;
  try {
    grid = detect_grid(images, expected_rows, expected_cols);
  } catch (const NoBrightSpot&) {
    // Nothing to take a PSF from; that is the more useful diagnosis.
    throw CalibrationError("psf-extraction",
                           "no bright site found in calibration images");
  }

  const double background = estimate_background(images, grid, kernel_size);

  Kernel psf = extract_psf(images, grid, kernel_size, background);
  Kernel projector = build_projector(psf, grid);

  CalibrationProfile profile{grid, std::move(projector), std::move(psf), 0.0,
                             background};
  std::vector<double> pooled;
  try {
    const ReconstructionPlan plan(profile, images[0].width(), images[0].height());
    for (const Image& im : images) {
      const EmissionMatrix e = plan.run(im);
      pooled.insert(pooled.end(), e.values().begin(), e.values().end());
    }
  } catch (const Error& e) {
    throw CalibrationError("projector", e.what());
  }
  profile.threshold = calibrate_threshold(pooled);
  return profile;
}

}  // namespace atomdet
