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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "atomdet/calibrate.hpp"
#include "atomdet/error.hpp"
#include "atomdet/random.hpp"
#include "atomdet/reconstruct.hpp"
#include "atomdet/simulate.hpp"

using namespace atomdet;

namespace {

std::vector<Image> calibration_set(const Scene& s, int n, double fill, std::uint64_t seed,
                                   bool noisy = true) {
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) {
    const std::uint64_t si = rng::derive_seed(seed, i);
    ForwardModel m = s.model(si);
    if (!noisy) m.noise.kind = NoiseKind::kNone;
    out.push_back(sample_image(m, s.grid(), make_truth(s.rows, s.cols, fill, si),
                               s.width(), s.height()));
  }
  return out;
}

double pearson(const Kernel& a, const Kernel& b) {
  const auto& x = a.data();
  const auto& y = b.data();
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// psf moved by (dx, dy) pixels inside its own window, zero-filled.
double shifted_inner(const Kernel& projector, const Kernel& psf, int dx, int dy) {
  const int k = psf.size();
  double s = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const int si = i - dy, sj = j - dx;
      if (si < 0 || si >= k || sj < 0 || sj >= k) continue;
      s += projector.at(i, j) * psf.at(si, sj);
    }
  return s;
}

void check_grid(const GridGeometry& got, const GridGeometry& want, double origin_tol) {
  CHECK(std::fabs(got.origin().x - want.origin().x) <= origin_tol);
  CHECK(std::fabs(got.origin().y - want.origin().y) <= origin_tol);
  CHECK(std::fabs(got.spacing() - want.spacing()) <= 0.005 * want.spacing());
  CHECK(std::fabs(got.angle() - want.angle()) <= 0.01);
  CHECK(got.rows() == want.rows());
  CHECK(got.cols() == want.cols());
}

}  // namespace

TEST_CASE("detect_grid recovers simulated lattices") {
  for (double angle : {0.0, 0.05}) {
    CAPTURE(angle);
    Scene s;
    s.angle = angle;
    const auto imgs = calibration_set(s, 20, 0.6, 100);
    check_grid(detect_grid(imgs, 10, 10), s.grid(), 0.5);
  }

  SUBCASE("single noiseless full image") {
    // Integer site positions so nearest-pixel placement is exact.
    const GridGeometry truth({15.0, 15.0}, 25.0, 0.0, 10, 10);
    ForwardModel m{gaussian_psf(31, 2.0), 10.0, 2000.0, {NoiseKind::kNone, 0.0}, 1};
    const std::vector<Image> one{expected_image(m, truth, OccupancyMatrix::full(10, 10), 256, 256)};
    check_grid(detect_grid(one, 10, 10), truth, 0.1);
  }

  SUBCASE("too few peaks") {
    Scene s;
    const auto imgs = calibration_set(s, 1, 0.0, 3);
    CHECK_THROWS_AS(detect_grid(imgs, 10, 10), CalibrationError);
  }
}

TEST_CASE("extract_psf") {
  Scene s;
  const Kernel truth = gaussian_psf(31, 2.0);

  SUBCASE("noiseless gaussian") {
    const auto imgs = calibration_set(s, 5, 0.6, 7, false);
    const Kernel psf = extract_psf(imgs, s.grid(), 31, s.background);
    CHECK(pearson(psf, truth) >= 0.999);
    CHECK(psf.sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (double v : psf.data()) CHECK(v >= 0.0);
  }

  SUBCASE("noiseless delta") {
    const GridGeometry grid = s.grid();
    std::vector<Image> imgs;
    for (int i = 0; i < 3; ++i) {
      ForwardModel m{delta_psf(31), 10.0, 2000.0, {NoiseKind::kNone, 0.0}, 1};
      imgs.push_back(expected_image(m, grid, make_truth(10, 10, 0.6, i), 256, 256));
    }
    const Kernel psf = extract_psf(imgs, grid, 31, 10.0);
    CHECK(psf.at(15, 15) >= 0.999);
  }

  SUBCASE("poisson, 50 images") {
    const auto imgs = calibration_set(s, 50, 0.6, 9);
    const double b = estimate_background(imgs, s.grid(), 31);
    CHECK(b == doctest::Approx(10.0).epsilon(0.02));
    CHECK(pearson(extract_psf(imgs, s.grid(), 31, b), truth) >= 0.99);
  }

  SUBCASE("no bright site") {
    const auto imgs = calibration_set(s, 2, 0.0, 9);
    CHECK_THROWS_AS(extract_psf(imgs, s.grid(), 31, 10.0), CalibrationError);
  }
}

TEST_CASE("build_projector") {
  SUBCASE("delta psf gives delta") {
    const GridGeometry grid({40, 40}, 40.0, 0.0, 3, 3);
    const Kernel p = build_projector(delta_psf(31), grid);
    for (int i = 0; i < 31; ++i)
      for (int j = 0; j < 31; ++j)
        CHECK(std::fabs(p.at(i, j) - (i == 15 && j == 15 ? 1.0 : 0.0)) <= 1e-12);
  }

  SUBCASE("isolated gaussian is psf over its squared norm") {
    const Kernel psf = gaussian_psf(31, 2.0);
    const GridGeometry grid({40, 40}, 50.0, 0.0, 3, 3);
    CHECK(build_design_matrix(psf, grid).columns.size() == 1);
    double n2 = 0.0;
    for (double v : psf.data()) n2 += v * v;
    const Kernel p = build_projector(psf, grid);
    for (std::size_t i = 0; i < psf.data().size(); ++i)
      CHECK(std::fabs(p.data()[i] - psf.data()[i] / n2) <= 1e-9);
  }

  SUBCASE("overlapping gaussian annihilates neighbours") {
    const Kernel psf = gaussian_psf(31, 4.0);
    const GridGeometry grid({40, 40}, 12.0, 0.0, 3, 3);
    const Kernel p = build_projector(psf, grid);
    CHECK(std::fabs(shifted_inner(p, psf, 0, 0) - 1.0) <= 1e-6);
    int neighbours = 0;
    for (int dy : {-12, 0, 12})
      for (int dx : {-12, 0, 12}) {
        if (dx == 0 && dy == 0) continue;
        ++neighbours;
        CHECK(std::fabs(shifted_inner(p, psf, dx, dy)) <= 1e-6);
      }
    CHECK(neighbours == 8);
    CHECK(build_design_matrix(psf, grid).columns.size() == 9);
  }

  SUBCASE("rotated lattice uses rounded offsets") {
    const Kernel psf = gaussian_psf(31, 3.0);
    const GridGeometry grid({40, 40}, 14.0, 0.2, 3, 3);
    const DesignMatrix a = build_design_matrix(psf, grid);
    const Kernel p = build_projector(psf, grid);
    for (std::size_t c = 0; c < a.columns.size(); ++c) {
      const auto [dx, dy] = a.offsets[c];
      const double ip = shifted_inner(p, psf, dx, dy);
      CHECK(std::fabs(ip - (c == 0 ? 1.0 : 0.0)) <= 1e-6);
    }
    CHECK(a.offsets[0] == std::pair<int, int>{0, 0});
  }

  SUBCASE("zero psf") {
    CHECK_THROWS_AS(build_projector(Kernel::zeros(31), GridGeometry({40, 40}, 50, 0, 3, 3)),
                    CalibrationError);
  }
}

TEST_CASE("calibrate_threshold") {
  std::mt19937_64 gen(42);
  std::normal_distribution<double> n0(0.0, 1.0), n1(100.0, 1.0);
  std::vector<double> v;
  for (int i = 0; i < 500; ++i) v.push_back(n0(gen));
  for (int i = 0; i < 500; ++i) v.push_back(n1(gen));
  const double t = calibrate_threshold(v);
  CHECK(t >= 40.0);
  CHECK(t <= 60.0);

  const double t6 = calibrate_threshold(std::vector<double>{0, 0, 0, 10, 10, 10});
  CHECK(t6 > 0.0);
  CHECK(t6 < 10.0);

  CHECK_THROWS_AS(calibrate_threshold(std::vector<double>(50, 3.0)), CalibrationError);
  CHECK_THROWS_AS(calibrate_threshold(std::vector<double>{1.0}), CalibrationError);

  const double o = otsu_threshold(std::vector<double>{0, 0, 0, 10, 10, 10});
  CHECK(o > 0.0);
  CHECK(o < 10.0);
}

TEST_CASE("calibrate end to end") {
  Scene s;
  const auto imgs = calibration_set(s, 20, 0.6, 2024);
  const CalibrationProfile profile = calibrate(imgs, 10, 10);
  CHECK(profile.kernel_size() == 31);
  CHECK(profile.psf.size() == 31);
  CHECK(profile.background == doctest::Approx(10.0).epsilon(0.02));
  check_grid(profile.grid, s.grid(), 0.5);

  const ReconstructionPlan plan(profile, s.width(), s.height());
  int errors = 0;
  for (int i = 0; i < 50; ++i) {
    const std::uint64_t seed = rng::derive_seed(777, i);
    const OccupancyMatrix truth = make_truth(10, 10, 0.5, seed);
    const Image img = sample_image(s.model(seed), s.grid(), truth, s.width(), s.height());
    const OccupancyMatrix got = apply_threshold(plan.run(img, 1), profile.threshold);
    for (int k = 0; k < 100; ++k) errors += got.values()[k] != truth.values()[k];
  }
  CHECK(errors == 0);

  SUBCASE("deterministic") {
    const CalibrationProfile again = calibrate(imgs, 10, 10);
    CHECK(again.projector == profile.projector);
    CHECK(again.threshold == profile.threshold);
  }
}

TEST_CASE("calibrate errors carry their stage") {
  Scene s;
  auto stage_of = [](auto&& fn) -> std::string {
    try {
      fn();
    } catch (const CalibrationError& e) {
      return e.stage();
    }
    return "";
  };

  auto imgs = calibration_set(s, 3, 0.6, 1);
  imgs.push_back(Image::filled(200, 256, 10.0));
  CHECK(stage_of([&] { (void)calibrate(imgs, 10, 10); }) == "input");
  CHECK(stage_of([] { (void)calibrate(std::vector<Image>{}, 10, 10); }) == "input");

  const auto dark = calibration_set(s, 5, 0.0, 1);
  CHECK(stage_of([&] { (void)calibrate(dark, 10, 10); }) == "psf-extraction");
}

TEST_CASE("calibration is scale equivariant") {
  Scene s;
  s.background = 0.0;
  const double c = 3.0;
  Scene scaled = s;
  scaled.gamma = s.gamma * c;
  const auto a = calibration_set(s, 10, 0.6, 55, false);
  const auto b = calibration_set(scaled, 10, 0.6, 55, false);
  const CalibrationProfile pa = calibrate(a, 10, 10);
  const CalibrationProfile pb = calibrate(b, 10, 10);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const EmissionMatrix ea = reconstruct_all(a[i], pa, 1);
    const EmissionMatrix eb = reconstruct_all(b[i], pb, 1);
    for (std::size_t k = 0; k < ea.values().size(); ++k)
      CHECK(std::fabs(eb.values()[k] - c * ea.values()[k]) <=
            1e-9 * std::fabs(c * ea.values()[k]) + 1e-9);
    CHECK(apply_threshold(ea, pa.threshold) == apply_threshold(eb, pb.threshold));
  }
}
