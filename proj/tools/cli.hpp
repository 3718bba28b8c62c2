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

#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace atomdet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitDomain = 2;

/// Runs the `atomdet` command line. `args` excludes the program name.
/// Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct BenchRecord {
  int rows = 0;
  int cols = 0;
  int width = 0;
  int height = 0;
  std::string variant;  // "serial" or "parallel"
  int threads = 1;
  int repeats = 1;
  double mean_us = 0.0;
  double std_us = 0.0;  // sample standard deviation; 0 for a single repeat
};

/// Mean and sample standard deviation of timings.
BenchRecord summarize(std::span<const double> samples_us);

inline constexpr const char* kBenchCsvHeader =
    "rows,cols,width,height,variant,threads,repeats,mean_us,std_us";

/// One CSV line (no newline), '.' decimal separator regardless of locale.
std::string to_csv(const BenchRecord& r);

}  // namespace atomdet::cli
