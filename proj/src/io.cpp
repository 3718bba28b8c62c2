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

#include "atomdet/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

#include "atomdet/error.hpp"

namespace atomdet::io {

using nlohmann::json;

void write_pgm(std::ostream& out, const Image& image) {
  out << "P5\n" << image.width() << ' ' << image.height() << "\n65535\n";
  std::vector<unsigned char> buf(image.data().size() * 2);
  std::size_t i = 0;
  for (double v : image.data()) {
    const auto s = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 65535.0)));
    buf[i++] = static_cast<unsigned char>(s >> 8);
    buf[i++] = static_cast<unsigned char>(s & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError("failed writing PGM data");
}

void write_pgm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_pgm(out, image);
}

namespace {

// Next header integer, skipping whitespace and '#' comments.
long read_header_int(std::istream& in) {
  int c = in.get();
  for (;;) {
    while (c != EOF && std::isspace(c)) c = in.get();
    if (c == '#') {
      while (c != EOF && c != '\n' && c != '\r') c = in.get();
      continue;
    }
    break;
  }
  if (c == EOF || !std::isdigit(c)) throw FormatError("malformed PGM header");
  long v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    if (v > (1L << 30)) throw FormatError("PGM header value too large");
    c = in.get();
  }
  // Exactly one whitespace byte terminates the last header field.
  if (c == EOF || !std::isspace(c)) throw FormatError("malformed PGM header");
  return v;
}

}  // namespace

Image read_pgm(std::istream& in) {
  char magic[2] = {};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5')
    throw FormatError("not a binary PGM (P5) file");
  const long w = read_header_int(in);
  const long h = read_header_int(in);
  const long maxval = read_header_int(in);
  if (w <= 0 || h <= 0) throw FormatError("PGM dimensions must be positive");
  if (maxval <= 0 || maxval > 65535) throw FormatError("PGM maxval out of range");

  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  const std::size_t bytes = maxval < 256 ? 1 : 2;
  std::vector<unsigned char> buf(n * bytes);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size())
    throw FormatError("PGM pixel data truncated");

  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned v = bytes == 1 ? buf[i] : (unsigned(buf[2 * i]) << 8) | buf[2 * i + 1];
    if (v > static_cast<unsigned>(maxval)) throw FormatError("PGM sample exceeds maxval");
    data[i] = v;
  }
  return Image(static_cast<int>(w), static_cast<int>(h), std::move(data));
}

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return read_pgm(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

namespace {

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key))
    throw FormatError(std::string("missing field '") + key + "'");
  return j.at(key);
}

template <typename T>
T get(const json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("field '") + key + "': " + e.what());
  }
}

void check_version(const json& j) {
  if (get<int>(j, "version") != kFormatVersion)
    throw FormatError("unsupported format version");
}

Kernel kernel_from(const json& j, const char* key, int size) {
  auto v = get<std::vector<double>>(j, key);
  if (v.size() != static_cast<std::size_t>(size) * size)
    throw FormatError(std::string("field '") + key + "' must hold " +
                      std::to_string(size * size) + " numbers");
  try {
    return Kernel(size, std::move(v));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("field '") + key + "': " + e.what());
  }
}

json occupancy_rows(const OccupancyMatrix& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m.at(r, c) ? 1 : 0);
    rows.push_back(std::move(row));
  }
  return rows;
}

OccupancyMatrix occupancy_from(const json& j, const char* key) {
  const auto rows = get<std::vector<std::vector<int>>>(j, key);
  const int nr = static_cast<int>(rows.size());
  const int nc = nr > 0 ? static_cast<int>(rows[0].size()) : 0;
  std::vector<std::uint8_t> v;
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != nc)
      throw FormatError(std::string("field '") + key + "' is ragged");
    for (int x : row) {
      if (x != 0 && x != 1)
        throw FormatError(std::string("field '") + key + "' must hold 0/1");
      v.push_back(static_cast<std::uint8_t>(x));
    }
  }
  return OccupancyMatrix(nr, nc, std::move(v));
}

}  // namespace

json profile_to_json(const CalibrationProfile& p) {
  const GridGeometry& g = p.grid;
  return json{
      {"version", kFormatVersion},
      {"grid",
       {{"origin_x", g.origin().x},
        {"origin_y", g.origin().y},
        {"spacing", g.spacing()},
        {"angle_rad", g.angle()},
        {"rows", g.rows()},
        {"cols", g.cols()}}},
      {"kernel_size", p.kernel_size()},
      {"psf", std::vector<double>(p.psf.data().begin(), p.psf.data().end())},
      {"projector",
       std::vector<double>(p.projector.data().begin(), p.projector.data().end())},
      {"projector_total_sum", p.projector_total_sum()},
      {"threshold", p.threshold},
      {"background", p.background},
  };
}

CalibrationProfile profile_from_json(const json& j) {
  check_version(j);
  const json& g = field(j, "grid");
  GridGeometry grid;
  try {
    grid = GridGeometry({get<double>(g, "origin_x"), get<double>(g, "origin_y")},
                        get<double>(g, "spacing"), get<double>(g, "angle_rad"),
                        get<int>(g, "rows"), get<int>(g, "cols"));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("grid: ") + e.what());
  }
  const int k = get<int>(j, "kernel_size");
  if (k <= 0 || k % 2 == 0) throw FormatError("kernel_size must be odd and positive");

  CalibrationProfile p{grid, kernel_from(j, "projector", k), kernel_from(j, "psf", k),
                       get<double>(j, "threshold"), get<double>(j, "background")};
  if (!std::isfinite(p.threshold)) throw FormatError("threshold must be finite");
  if (!std::isfinite(p.background) || p.background < 0.0)
    throw FormatError("background must be finite and >= 0");
  const double stored = get<double>(j, "projector_total_sum");
  const double actual = p.projector_total_sum();
  if (std::fabs(stored - actual) > 1e-9 * std::max(1.0, std::fabs(actual)))
    throw FormatError("projector_total_sum does not match projector");
  return p;
}

json result_to_json(const DetectionResult& r) {
  json em = json::array();
  for (int row = 0; row < r.emissions.rows(); ++row) {
    json line = json::array();
    for (int c = 0; c < r.emissions.cols(); ++c) line.push_back(r.emissions.at(row, c));
    em.push_back(std::move(line));
  }
  return json{{"version", kFormatVersion},
              {"emissions", std::move(em)},
              {"occupancy", occupancy_rows(r.occupancy)},
              {"elapsed_us", r.elapsed_us},
              {"threads", r.threads}};
}

DetectionResult result_from_json(const json& j) {
  check_version(j);
  const auto rows = get<std::vector<std::vector<double>>>(j, "emissions");
  const int nr = static_cast<int>(rows.size());
  const int nc = nr > 0 ? static_cast<int>(rows[0].size()) : 0;
  std::vector<double> v;
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != nc) throw FormatError("emissions are ragged");
    v.insert(v.end(), row.begin(), row.end());
  }
  DetectionResult r{EmissionMatrix(nr, nc, std::move(v)), occupancy_from(j, "occupancy"),
                    get<double>(j, "elapsed_us"), get<int>(j, "threads")};
  if (r.occupancy.rows() != nr || r.occupancy.cols() != nc)
    throw FormatError("emission and occupancy shapes differ");
  return r;
}

json truth_to_json(const Truth& t) {
  return json{{"rows", t.occupancy.rows()},
              {"cols", t.occupancy.cols()},
              {"occupancy", occupancy_rows(t.occupancy)},
              {"gamma", t.gamma},
              {"background", t.background},
              {"seed", t.seed}};
}

Truth truth_from_json(const json& j) {
  Truth t{occupancy_from(j, "occupancy"), get<double>(j, "gamma"),
          get<double>(j, "background"), get<std::uint64_t>(j, "seed")};
  if (t.occupancy.rows() != get<int>(j, "rows") || t.occupancy.cols() != get<int>(j, "cols"))
    throw FormatError("truth shape does not match rows/cols");
  return t;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw FormatError("failed writing " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace atomdet::io
