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

#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <locale>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "atomdet/calibrate.hpp"
#include "atomdet/error.hpp"
#include "atomdet/io.hpp"
#include "atomdet/pipeline_model.hpp"
#include "atomdet/random.hpp"
#include "atomdet/reconstruct.hpp"
#include "atomdet/simulate.hpp"

namespace atomdet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Bad flag values detected after parsing.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimulateOpts {
  int rows = 10;
  int cols = 10;
  std::optional<int> width;
  std::optional<int> height;
  double spacing = 25.6;
  double angle = 0.0;
  std::optional<double> origin_x;
  std::optional<double> origin_y;
  double fill = 0.5;
  std::uint64_t seed = 1;
  double gamma = 2000.0;
  double background = 10.0;
  double psf_sigma = 2.0;
  int kernel_size = 31;
  std::string noise = "poisson";
  double read_sigma = 0.0;
  int count = 1;
  std::string output;
  std::string truth;
};

struct CalibrateOpts {
  std::vector<std::string> images;
  int rows = 0;
  int cols = 0;
  int kernel_size = 31;
  std::string output;
};

struct DetectOpts {
  std::string profile;
  std::string image;
  std::string output;
  int threads = 0;
  std::string emissions_pgm;
  int scale = 8;
};

struct BenchOpts {
  std::vector<int> sizes{10, 20, 30, 40};
  int repeats = 50;
  int threads = 0;
  double spacing = 25.6;
  double fill = 0.5;
  int calib_images = 10;
  std::uint64_t seed = 1;
};

struct PipelineOpts {
  std::optional<std::int64_t> atoms;
  std::optional<int> rows;
  std::optional<int> cols;
  int kernel_size = 31;
  std::optional<int> image_width;
  HardwareParams hw;
};

// "out.pgm" -> "out_0003.pgm" when writing more than one frame.
fs::path numbered(const std::string& path, int i, int count) {
  if (count == 1) return path;
  fs::path p(path);
  std::ostringstream name;
  name << p.stem().string() << '_' << std::setw(4) << std::setfill('0') << i
       << p.extension().string();
  return p.parent_path() / name.str();
}

NoiseModel parse_noise(const std::string& name, double read_sigma) {
  if (name == "none") return {NoiseKind::kNone, 0.0};
  if (name == "poisson") return {NoiseKind::kPoisson, 0.0};
  return {NoiseKind::kPoissonGaussian, read_sigma};
}

int cmd_simulate(const SimulateOpts& o, std::ostream& out) {
  const int width = o.width.value_or(static_cast<int>(std::lround(o.cols * o.spacing)));
  const int height = o.height.value_or(static_cast<int>(std::lround(o.rows * o.spacing)));
  if (width <= 0 || height <= 0) throw UsageError("image size must be positive");

  GridGeometry grid;
  try {
    grid = centered_grid(o.rows, o.cols, o.spacing, o.angle, width, height);
    if (o.origin_x || o.origin_y)
      grid = GridGeometry({o.origin_x.value_or(grid.origin().x),
                           o.origin_y.value_or(grid.origin().y)},
                          o.spacing, o.angle, o.rows, o.cols);
  } catch (const std::invalid_argument& e) {
    throw GeometryError(std::string("invalid geometry: ") + e.what());
  }

  ForwardModel model;
  try {
    model = ForwardModel{gaussian_psf(o.kernel_size, o.psf_sigma), o.background, o.gamma,
                         parse_noise(o.noise, o.read_sigma), o.seed};
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  for (int i = 0; i < o.count; ++i) {
    const std::uint64_t seed = o.count == 1 ? o.seed : rng::derive_seed(o.seed, i);
    model.seed = seed;
    const OccupancyMatrix truth = make_truth(o.rows, o.cols, o.fill, seed);
    const Image img = sample_image(model, grid, truth, width, height);
    io::write_pgm(numbered(o.output, i, o.count), img);
    if (!o.truth.empty())
      io::write_json(numbered(o.truth, i, o.count),
                     io::truth_to_json({truth, o.gamma, o.background, seed}));
  }
  out << "wrote " << o.count << " frame(s) of " << width << "x" << height << " with "
      << o.rows << "x" << o.cols << " sites\n";
  return kExitOk;
}

int cmd_calibrate(const CalibrateOpts& o, std::ostream& out) {
  if (o.images.empty()) throw UsageError("calibrate needs at least one image");
  std::vector<Image> images;
  images.reserve(o.images.size());
  for (const auto& path : o.images) images.push_back(io::read_pgm(fs::path(path)));

  const CalibrationProfile p = calibrate(images, o.rows, o.cols, o.kernel_size);
  io::write_json(o.output, io::profile_to_json(p));

  const GridGeometry& g = p.grid;
  out << std::setprecision(6) << "grid: origin (" << g.origin().x << ", " << g.origin().y
      << ") spacing " << g.spacing() << " px angle " << g.angle() << " rad, " << g.rows()
      << "x" << g.cols() << " sites\n"
      << "background " << p.background << ", threshold " << p.threshold
      << ", projector sum " << p.projector_total_sum() << "\n";
  return kExitOk;
}

// Site-grid raster, `scale` pixels per site; darker means brighter emission.
Image render_emissions(const EmissionMatrix& e, int scale) {
  const auto [lo_it, hi_it] = std::minmax_element(e.values().begin(), e.values().end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  const int w = e.cols() * scale;
  const int h = e.rows() * scale;
  std::vector<double> px(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = e.at(y / scale, x / scale);
      const double t = span > 0.0 ? (v - lo) / span : 0.0;
      px[static_cast<std::size_t>(y) * w + x] = 65535.0 * (1.0 - t);
    }
  }
  return Image(w, h, std::move(px));
}

int cmd_detect(const DetectOpts& o, std::ostream& out) {
  if (o.scale <= 0) throw UsageError("--scale must be positive");
  const CalibrationProfile profile = io::profile_from_json(io::read_json(o.profile));
  const Image image = io::read_pgm(fs::path(o.image));
  const int threads = o.threads > 0 ? o.threads : default_thread_count();

  const ReconstructionPlan plan(profile, image.width(), image.height());
  const auto t0 = std::chrono::steady_clock::now();
  EmissionMatrix emissions = plan.run(image, threads);
  OccupancyMatrix occupancy = apply_threshold(emissions, profile.threshold);
  const auto t1 = std::chrono::steady_clock::now();

  io::DetectionResult result{std::move(emissions), std::move(occupancy),
                             std::chrono::duration<double, std::micro>(t1 - t0).count(),
                             threads};
  const json j = io::result_to_json(result);
  if (o.output.empty())
    out << j.dump(2) << '\n';
  else
    io::write_json(o.output, j);
  if (!o.emissions_pgm.empty())
    io::write_pgm(fs::path(o.emissions_pgm), render_emissions(result.emissions, o.scale));
  return kExitOk;
}

int cmd_bench(const BenchOpts& o, std::ostream& out) {
  if (o.repeats < 1) throw UsageError("--repeats must be >= 1");
  if (o.calib_images < 1) throw UsageError("--calib-images must be >= 1");
  if (o.sizes.empty()) throw UsageError("--sizes must list at least one size");
  const int par_threads = o.threads > 0 ? o.threads : default_thread_count();

  out << kBenchCsvHeader << '\n';
  for (int n : o.sizes) {
    if (n <= 0) throw UsageError("array sizes must be positive");
    Scene scene;
    scene.rows = n;
    scene.cols = n;
    scene.spacing = o.spacing;
    const GridGeometry grid = scene.grid();

    std::vector<Image> calib;
    for (int i = 0; i < o.calib_images; ++i) {
      const std::uint64_t seed = rng::derive_seed(o.seed, static_cast<std::uint64_t>(i));
      calib.push_back(sample_image(scene.model(seed), grid,
                                   make_truth(n, n, o.fill, seed), scene.width(),
                                   scene.height()));
    }
    const CalibrationProfile profile = calibrate(calib, n, n, scene.kernel_size);
    const std::uint64_t test_seed = rng::derive_seed(o.seed, 1u << 20);
    const Image frame = sample_image(scene.model(test_seed), grid,
                                     make_truth(n, n, o.fill, test_seed), scene.width(),
                                     scene.height());
    const ReconstructionPlan plan(profile, frame.width(), frame.height());

    for (const auto& [variant, threads] :
         {std::pair<const char*, int>{"serial", 1}, {"parallel", par_threads}}) {
      (void)plan.run(frame, threads);  // warm-up
      std::vector<double> samples;
      samples.reserve(o.repeats);
      for (int r = 0; r < o.repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const EmissionMatrix e = plan.run(frame, threads);
        const auto t1 = std::chrono::steady_clock::now();
        samples.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
      }
      BenchRecord rec = summarize(samples);
      rec.rows = n;
      rec.cols = n;
      rec.width = frame.width();
      rec.height = frame.height();
      rec.variant = variant;
      rec.threads = threads;
      out << to_csv(rec) << '\n';
    }
  }
  return kExitOk;
}

int cmd_pipeline(const PipelineOpts& o, std::ostream& out) {
  std::int64_t atoms = 0;
  if (o.atoms) {
    atoms = *o.atoms;
  } else if (o.rows && o.cols) {
    atoms = static_cast<std::int64_t>(*o.rows) * *o.cols;
  } else {
    throw UsageError("pipeline needs --atoms or both --rows and --cols");
  }
  if (atoms < 0) throw UsageError("--atoms must be >= 0");
  int width = 256;
  if (o.image_width) {
    width = *o.image_width;
  } else if (o.cols) {
    width = static_cast<int>(std::lround(*o.cols * 25.6));
  }

  LatencyReport r;
  try {
    r = estimate_latency(o.hw, atoms, o.kernel_size, width);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  json stages = json::object();
  for (int s = 0; s < 4; ++s)
    stages[std::string(stage_name(static_cast<Stage>(s)))] = r.per_atom_stage_cycles.cycles[s];
  const json j{{"atoms", r.atoms},
               {"kernel_size", o.kernel_size},
               {"image_width", width},
               {"clock_mhz", o.hw.clock_mhz},
               {"per_atom_stage_cycles", stages},
               {"bottleneck_stage", std::string(stage_name(r.bottleneck_stage))},
               {"cycles_per_atom", r.per_atom_stage_cycles.max()},
               {"fill_cycles", o.hw.fill_cycles},
               {"total_cycles", r.total_cycles},
               {"total_us", r.total_us}};
  out << j.dump(2) << '\n';
  return kExitOk;
}

void report(std::ostream& err, bool as_json, int code, const std::string& kind,
            const std::string& message, const std::string& stage = {}) {
  if (as_json) {
    json j{{"error", message}, {"kind", kind}, {"exit_code", code}};
    if (!stage.empty()) j["stage"] = stage;
    err << j.dump() << '\n';
  } else {
    err << "atomdet: " << message << '\n';
  }
}

}  // namespace

BenchRecord summarize(std::span<const double> samples_us) {
  BenchRecord r;
  r.repeats = static_cast<int>(samples_us.size());
  if (samples_us.empty()) return r;
  r.mean_us = canonical_sum(samples_us) / samples_us.size();
  if (samples_us.size() > 1) {
    double ss = 0.0;
    for (double v : samples_us) ss += (v - r.mean_us) * (v - r.mean_us);
    r.std_us = std::sqrt(ss / (samples_us.size() - 1));
  }
  return r;
}

std::string to_csv(const BenchRecord& r) {
  std::ostringstream s;
  s.imbue(std::locale::classic());
  s << r.rows << ',' << r.cols << ',' << r.width << ',' << r.height << ',' << r.variant
    << ',' << r.threads << ',' << r.repeats << ',' << std::fixed << std::setprecision(3)
    << r.mean_us << ',' << r.std_us;
  return s.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Projection-based atom detection for tweezer arrays", "atomdet"};
  app.require_subcommand(1);
  bool json_errors = false;
  app.add_flag("--json-errors", json_errors, "Write errors as JSON on stderr");

  SimulateOpts sim;
  auto* simulate = app.add_subcommand("simulate", "Render synthetic fluorescence frames");
  simulate->add_option("--rows", sim.rows, "Lattice rows")->check(CLI::PositiveNumber);
  simulate->add_option("--cols", sim.cols, "Lattice columns")->check(CLI::PositiveNumber);
  simulate->add_option("--width", sim.width, "Frame width (default cols*spacing)");
  simulate->add_option("--height", sim.height, "Frame height (default rows*spacing)");
  simulate->add_option("--spacing", sim.spacing, "Site spacing in pixels");
  simulate->add_option("--angle", sim.angle, "Lattice angle in radians");
  simulate->add_option("--origin-x", sim.origin_x, "Site (0,0) x (default: centered)");
  simulate->add_option("--origin-y", sim.origin_y, "Site (0,0) y (default: centered)");
  simulate->add_option("--fill", sim.fill, "Occupation probability")->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--seed", sim.seed, "Random seed");
  simulate->add_option("--gamma", sim.gamma, "Photoelectrons per atom");
  simulate->add_option("--background", sim.background, "Background photoelectrons per pixel");
  simulate->add_option("--psf-sigma", sim.psf_sigma, "Gaussian PSF sigma in pixels");
  simulate->add_option("--kernel-size", sim.kernel_size, "PSF kernel size (odd)");
  simulate->add_option("--noise", sim.noise, "none | poisson | poisson+gaussian")
      ->check(CLI::IsMember({"none", "poisson", "poisson+gaussian"}));
  simulate->add_option("--read-sigma", sim.read_sigma, "Gaussian read noise sigma");
  simulate->add_option("--count", sim.count, "Number of frames")->check(CLI::PositiveNumber);
  simulate->add_option("-o,--output", sim.output, "Output PGM path")->required();
  simulate->add_option("--truth", sim.truth, "Ground-truth JSON path");

  CalibrateOpts cal;
  auto* calib = app.add_subcommand("calibrate", "Fit grid, PSF, projector and threshold");
  calib->add_option("images", cal.images, "Calibration frames (PGM)");
  calib->add_option("--rows", cal.rows, "Lattice rows")->required()->check(CLI::PositiveNumber);
  calib->add_option("--cols", cal.cols, "Lattice columns")->required()->check(CLI::PositiveNumber);
  calib->add_option("--kernel-size", cal.kernel_size, "Kernel size (odd)");
  calib->add_option("-o,--output", cal.output, "Profile JSON path")->required();

  DetectOpts det;
  auto* detect = app.add_subcommand("detect", "Reconstruct and threshold one frame");
  detect->add_option("--profile", det.profile, "Calibration profile JSON")->required();
  detect->add_option("--image", det.image, "Frame to analyse (PGM)")->required();
  detect->add_option("-o,--output", det.output, "Result JSON path (default: stdout)");
  detect->add_option("--threads", det.threads, "Worker threads (default ATOMDET_THREADS or cores)");
  detect->add_option("--emissions-pgm", det.emissions_pgm, "Write emission raster as PGM");
  detect->add_option("--scale", det.scale, "Raster pixels per site");

  BenchOpts ben;
  auto* bench = app.add_subcommand("bench", "Time reconstruction over array sizes (CSV)");
  bench->add_option("--sizes", ben.sizes, "Array sizes (n for n x n)")->delimiter(',');
  bench->add_option("--repeats", ben.repeats, "Timed runs per variant");
  bench->add_option("--threads", ben.threads, "Threads for the parallel variant");
  bench->add_option("--spacing", ben.spacing, "Site spacing in pixels");
  bench->add_option("--fill", ben.fill, "Occupation probability")->check(CLI::Range(0.0, 1.0));
  bench->add_option("--calib-images", ben.calib_images, "Frames used for calibration");
  bench->add_option("--seed", ben.seed, "Random seed");

  PipelineOpts pip;
  auto* pipeline = app.add_subcommand("pipeline", "Accelerator latency estimate (JSON)");
  pipeline->add_option("--atoms", pip.atoms, "Number of atom sites");
  pipeline->add_option("--rows", pip.rows, "Lattice rows (atoms = rows*cols)");
  pipeline->add_option("--cols", pip.cols, "Lattice columns");
  pipeline->add_option("--kernel-size", pip.kernel_size, "Kernel size (odd)");
  pipeline->add_option("--image-width", pip.image_width, "Image width in pixels");
  pipeline->add_option("--clock-mhz", pip.hw.clock_mhz, "Clock frequency");
  pipeline->add_option("--bus-width", pip.hw.bus_width_bits, "Bus width in bits");
  pipeline->add_option("--word-bits", pip.hw.word_bits, "Data word width in bits");
  pipeline->add_option("--burst-overhead", pip.hw.burst_overhead_cycles, "Cycles per burst request");
  pipeline->add_option("--boundary-cycles", pip.hw.boundary_cycles, "Boundary stage cycles");
  pipeline->add_option("--conv-ii", pip.hw.conv_ii, "Convolution initiation interval");
  pipeline->add_option("--tree-depth", pip.hw.tree_depth, "Adder tree depth");
  pipeline->add_option("--agg-cycles", pip.hw.agg_cycles, "Aggregation stage cycles");
  pipeline->add_option("--fill-cycles", pip.hw.fill_cycles, "One-time pipeline fill cycles");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(std::move(rev));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    if (json_errors) {
      report(err, true, kExitUsage, "usage", e.what());
    } else {
      app.exit(e, out, err);
    }
    return kExitUsage;
  }

  try {
    if (*simulate) return cmd_simulate(sim, out);
    if (*calib) return cmd_calibrate(cal, out);
    if (*detect) return cmd_detect(det, out);
    if (*bench) return cmd_bench(ben, out);
    if (*pipeline) return cmd_pipeline(pip, out);
  } catch (const UsageError& e) {
    report(err, json_errors, kExitUsage, "usage", e.what());
    return kExitUsage;
  } catch (const CalibrationError& e) {
    report(err, json_errors, kExitDomain, "calibration", e.what(), e.stage());
    return kExitDomain;
  } catch (const GeometryError& e) {
    report(err, json_errors, kExitDomain, "geometry", e.what());
    return kExitDomain;
  } catch (const FormatError& e) {
    report(err, json_errors, kExitDomain, "format", e.what());
    return kExitDomain;
  } catch (const Error& e) {
    report(err, json_errors, kExitDomain, "domain", e.what());
    return kExitDomain;
  } catch (const std::invalid_argument& e) {
    report(err, json_errors, kExitDomain, "domain", e.what());
    return kExitDomain;
  }
  return kExitUsage;
}

}  // namespace atomdet::cli
