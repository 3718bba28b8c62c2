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

// On-disk formats.
//
// Images are binary PGM ("P5"). Writing always uses maxval 65535 with
// big-endian 16-bit samples, pixel = round(clamp(value, 0, 65535)). Reading
// also accepts 8-bit files (maxval < 256) and header comments.
//
// Profiles, detection results and ground truth are JSON documents; reals are
// written with enough digits to round-trip exactly.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "json.hpp"

#include "atomdet/calibrate.hpp"
#include "atomdet/core_types.hpp"

namespace atomdet::io {

void write_pgm(std::ostream& out, const Image& image);
void write_pgm(const std::filesystem::path& path, const Image& image);
/// Throws FormatError on malformed input.
Image read_pgm(std::istream& in);
Image read_pgm(const std::filesystem::path& path);

inline constexpr int kFormatVersion = 1;

// { "version": 1,
//   "grid": {"origin_x", "origin_y", "spacing", "angle_rad", "rows", "cols"},
//   "kernel_size": k, "psf": [k*k], "projector": [k*k],
//   "projector_total_sum": s, "threshold": t, "background": b }
nlohmann::json profile_to_json(const CalibrationProfile& profile);
/// Throws FormatError on a missing field, wrong version, wrong array length or
/// a projector_total_sum that disagrees with the projector.
CalibrationProfile profile_from_json(const nlohmann::json& j);

struct DetectionResult {
  EmissionMatrix emissions;
  OccupancyMatrix occupancy;
  double elapsed_us = 0.0;
  int threads = 1;
};

// { "version": 1, "emissions": [[...]], "occupancy": [[0/1,...]],
//   "elapsed_us": t, "threads": n }
nlohmann::json result_to_json(const DetectionResult& result);
DetectionResult result_from_json(const nlohmann::json& j);

struct Truth {
  OccupancyMatrix occupancy;
  double gamma = 0.0;
  double background = 0.0;
  std::uint64_t seed = 0;
};

// { "rows", "cols", "occupancy": [[0/1,...]], "gamma", "background", "seed" }
nlohmann::json truth_to_json(const Truth& truth);
Truth truth_from_json(const nlohmann::json& j);

/// Serialises with a trailing newline. Throws FormatError if the file cannot
/// be written.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
/// Throws FormatError if the file is missing or not valid JSON.
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace atomdet::io
