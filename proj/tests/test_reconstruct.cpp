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
#include <numeric>
#include <random>

#include "atomdet/error.hpp"
#include "atomdet/reconstruct.hpp"
#include "atomdet/simulate.hpp"
#include "oracles.hpp"

using namespace atomdet;

namespace {

CalibrationProfile ideal_profile(const Scene& scene) {
  const GridGeometry grid = scene.grid();
  const Kernel psf = gaussian_psf(scene.kernel_size, scene.psf_sigma);
  return CalibrationProfile{grid, build_projector(psf, grid), psf, 0.0, scene.background};
}

Kernel ones(int k) { return Kernel(k, std::vector<double>(k * k, 1.0)); }

}  // namespace

TEST_CASE("extract_boundaries") {
  SUBCASE("interior") {
    const CropBounds b = extract_boundaries({128, 128}, 256, 256, 31);
    CHECK(b.img_x0 == 113);
    CHECK(b.img_x1 == 144);
    CHECK(b.ker_x0 == 0);
    CHECK(b.ker_x1 == 31);
    CHECK(b.full(31));
  }
  SUBCASE("near origin") {
    const CropBounds b = extract_boundaries({5, 5}, 256, 256, 31);
    CHECK(b.img_x0 == 0);
    CHECK(b.img_x1 == 21);
    CHECK(b.ker_x0 == 10);
    CHECK(b.ker_x1 == 31);
    CHECK(b.img_y0 == 0);
    CHECK(b.ker_y0 == 10);
  }
  SUBCASE("far corner") {
    const CropBounds b = extract_boundaries({255, 255}, 256, 256, 31);
    CHECK(b.img_x0 == 240);
    CHECK(b.img_x1 == 256);
    CHECK(b.ker_x0 == 0);
    CHECK(b.ker_x1 == 16);
  }
  SUBCASE("half-pixel positions round away from zero") {
    CHECK(extract_boundaries({4.5, 10.49}, 256, 256, 3).img_x0 == 4);   // center 5
    CHECK(extract_boundaries({4.5, 10.49}, 256, 256, 3).img_y0 == 9);   // center 10
    CHECK(extract_boundaries({254.6, 0.0}, 256, 256, 3).img_x1 == 256); // center 255
  }
  SUBCASE("last half pixel maps to the last pixel") {
    const CropBounds b = extract_boundaries({255.7, 0.2}, 256, 256, 1);
    CHECK(b.img_x0 == 255);
    CHECK(b.img_x1 == 256);
    CHECK(b.ker_x0 == 0);
    CHECK(b.ker_x1 == 1);
    CHECK(extract_boundaries({255.7, 0.2}, 256, 256, 31).img_x0 == 240);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(extract_boundaries({-0.1, 5}, 256, 256, 31), GeometryError);
    CHECK_THROWS_AS(extract_boundaries({5, 256}, 256, 256, 31), GeometryError);
    CHECK_THROWS_AS(extract_boundaries({5, 5}, 256, 256, 30), std::invalid_argument);
  }
  SUBCASE("windows stay aligned for random sites") {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> pos(0.0, 63.9999);
    for (int i = 0; i < 500; ++i) {
      const CropBounds b = extract_boundaries({pos(gen), pos(gen)}, 64, 64, 31);
      CHECK(b.img_x1 - b.img_x0 == b.ker_x1 - b.ker_x0);
      CHECK(b.img_y1 - b.img_y0 == b.ker_y1 - b.ker_y0);
      CHECK(b.img_x1 > b.img_x0);
      CHECK(b.ker_x0 >= 0);
      CHECK(b.ker_x1 <= 31);
    }
  }
}

TEST_CASE("reconstruct_site examples") {
  const Image img = Image::filled(256, 256, 1.0);
  const Kernel k = ones(31);

  const SiteEmission interior = reconstruct_site(img, extract_boundaries({128, 128}, 256, 256, 31), k);
  CHECK(interior.product_sum == 961.0);
  CHECK(interior.used_kernel_sum == 961.0);
  CHECK(interior.emission == 961.0);

  // 16 rows x 31 columns fit.
  const SiteEmission edge = reconstruct_site(img, extract_boundaries({128, 255}, 256, 256, 31), k);
  CHECK(edge.product_sum == 496.0);
  CHECK(edge.used_kernel_sum == 496.0);
  CHECK(edge.emission == doctest::Approx(496.0 * 496.0 / 961.0).epsilon(1e-15));
  CHECK(edge.emission == doctest::Approx(256.0));  // 496 * 496 = 256 * 961

  SUBCASE("zero-sum projector is rejected") {
    std::vector<double> v(9, 0.0);
    v[0] = 1.0;
    v[8] = -1.0;
    CHECK_THROWS_AS(reconstruct_site(img, extract_boundaries({10, 10}, 256, 256, 3), Kernel(3, v)),
                    InvalidProfileError);
  }
  SUBCASE("bounds not matching the image are rejected") {
    CropBounds b = extract_boundaries({10, 10}, 256, 256, 31);
    b.img_x1 += 1;
    CHECK_THROWS_AS(reconstruct_site(img, b, k), GeometryError);
  }
}

TEST_CASE("reconstruct_site matches the explicit-mask oracle") {
  std::mt19937_64 gen(1234);
  std::uniform_real_distribution<double> kv(-1.0, 1.0);
  std::uniform_real_distribution<double> iv(0.0, 1000.0);
  std::uniform_int_distribution<int> dim(20, 80);
  for (int trial = 0; trial < 1000; ++trial) {
    const int w = dim(gen), h = dim(gen);
    std::vector<double> im(static_cast<std::size_t>(w) * h);
    for (double& v : im) v = iv(gen);
    std::vector<double> kd(961);
    for (double& v : kd) v = kv(gen);
    kd[480] += 5.0;  // keep the total away from zero
    const Image image(w, h, im);
    const Kernel kernel(31, kd);
    const Point site{std::uniform_real_distribution<double>(0, w - 1e-9)(gen),
                     std::uniform_real_distribution<double>(0, h - 1e-9)(gen)};
    const SiteEmission got = reconstruct_site(image, extract_boundaries(site, w, h, 31), kernel);
    const auto want = testing::masked_emission(im, w, h, kd, 31, site);
    CHECK(std::fabs(got.product_sum - want.product_sum) <= 1e-12 * std::fabs(want.product_sum));
    CHECK(std::fabs(got.used_kernel_sum - want.used_sum) <= 1e-12 * std::fabs(want.used_sum) + 1e-15);
    CHECK(std::fabs(got.emission - want.emission) <= 1e-12 * std::fabs(want.emission));
  }
}

TEST_CASE("reconstruct_all") {
  const Scene scene;
  const CalibrationProfile profile = ideal_profile(scene);

  SUBCASE("zero image gives zero emissions") {
    const EmissionMatrix e = reconstruct_all(Image::filled(256, 256, 0.0), profile, 2);
    for (double v : e.values()) CHECK(v == 0.0);
  }

  SUBCASE("noiseless full lattice recovers gamma at interior sites") {
    Scene s = scene;
    s.background = 0.0;
    ForwardModel m = s.model(1);
    m.noise.kind = NoiseKind::kNone;
    const Image img = expected_image(m, s.grid(), OccupancyMatrix::full(10, 10), 256, 256);
    const EmissionMatrix e = reconstruct_all(img, profile);
    const ReconstructionPlan plan(profile, 256, 256);
    for (int r = 0; r < 10; ++r)
      for (int c = 0; c < 10; ++c) {
        if (!plan.bounds()[r * 10 + c].full(31)) continue;
        CHECK(e.at(r, c) == doctest::Approx(s.gamma).epsilon(0.02));
      }
  }

  SUBCASE("parallel runs are bit-identical and interior sites are unnormalised") {
    Scene big = scene;
    big.rows = big.cols = 40;
    const CalibrationProfile p = ideal_profile(big);
    const Image img = sample_image(big.model(5), big.grid(), make_truth(40, 40, 0.5, 5),
                                   big.width(), big.height());
    const EmissionMatrix e1 = reconstruct_all(img, p, 1);
    for (int t : {2, 3, 8}) CHECK(reconstruct_all(img, p, t) == e1);

    const ReconstructionPlan plan(p, img.width(), img.height());
    const double total = p.projector_total_sum();
    int interior = 0;
    for (int r = 0; r < 40; ++r)
      for (int c = 0; c < 40; ++c) {
        const CropBounds& b = plan.bounds()[r * 40 + c];
        if (!b.full(31)) continue;
        ++interior;
        const SiteEmission s = reconstruct_site(img, b, p.projector, total);
        CHECK(s.used_kernel_sum == total);
        CHECK(e1.at(r, c) == s.product_sum);
      }
    CHECK(interior > 1000);
  }

  SUBCASE("linear in the image") {
    std::mt19937_64 gen(77);
    std::uniform_real_distribution<double> u(0.0, 50.0);
    std::vector<double> a(256 * 256), b(256 * 256), mix(256 * 256);
    const double alpha = 1.7, beta = 0.3;
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = u(gen);
      b[i] = u(gen);
      mix[i] = alpha * a[i] + beta * b[i];
    }
    const EmissionMatrix ea = reconstruct_all(Image(256, 256, a), profile);
    const EmissionMatrix eb = reconstruct_all(Image(256, 256, b), profile);
    const EmissionMatrix em = reconstruct_all(Image(256, 256, mix), profile);
    for (std::size_t i = 0; i < em.values().size(); ++i) {
      const double want = alpha * ea.values()[i] + beta * eb.values()[i];
      CHECK(std::fabs(em.values()[i] - want) <= 1e-9 * std::fabs(want));
    }
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(reconstruct_all(Image::filled(200, 256, 0.0), profile), GeometryError);
    const ReconstructionPlan plan(profile, 256, 256);
    CHECK_THROWS_AS(plan.run(Image::filled(255, 256, 0.0)), GeometryError);
    try {
      (void)reconstruct_all(Image::filled(200, 256, 0.0), profile);
    } catch (const GeometryError& e) {
      CHECK(std::string(e.what()).find("site (0, 8)") != std::string::npos);
    }
  }
}

TEST_CASE("adder_tree_sum") {
  std::vector<double> series(31);
  std::iota(series.begin(), series.end(), 1.0);
  const TreeSum t = adder_tree_sum(series);
  CHECK(t.sum == 496.0);
  CHECK(t.depth == 5);

  const TreeSum z = adder_tree_sum(std::vector<double>(31, 0.0));
  CHECK(z.sum == 0.0);
  CHECK(z.depth == 5);

  CHECK(adder_tree_sum(std::vector<double>{3.0}).depth == 0);
  CHECK(adder_tree_sum(std::vector<double>(32, 1.0)).depth == 5);
  CHECK(adder_tree_sum(std::vector<double>(33, 1.0)).depth == 6);

  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> v(31);
    for (double& x : v) x = u(gen);
    const double ref = canonical_sum(v);
    CHECK(std::fabs(adder_tree_sum(v).sum - ref) <= 1e-12 * std::fabs(ref));
  }
}

TEST_CASE("apply_threshold") {
  const OccupancyMatrix o = apply_threshold(EmissionMatrix(1, 2, {0.0, 100.0}), 50.0);
  CHECK_FALSE(o.at(0, 0));
  CHECK(o.at(0, 1));
  CHECK_FALSE(apply_threshold(EmissionMatrix(1, 1, {50.0}), 50.0).at(0, 0));
  CHECK_THROWS_AS(apply_threshold(EmissionMatrix(1, 1, {1.0}), NAN), std::invalid_argument);
}

TEST_CASE("default_thread_count honours ATOMDET_THREADS") {
  setenv("ATOMDET_THREADS", "3", 1);
  CHECK(default_thread_count() == 3);
  setenv("ATOMDET_THREADS", "zero", 1);
  CHECK(default_thread_count() >= 1);
  unsetenv("ATOMDET_THREADS");
  CHECK(default_thread_count() >= 1);
}
