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

#include <stdexcept>
#include <string>

namespace atomdet {

// Base for every domain failure raised by the library. The CLI maps these to
// exit code 2; std::invalid_argument (bad construction arguments) maps to 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A site position or crop that does not fit the image it is applied to.
class GeometryError : public Error {
 public:
  using Error::Error;
};

// Calibration could not produce a usable profile. `stage()` names the step
// that failed ("input", "grid-detection", "background", "psf-extraction",
// "projector", "threshold").
class CalibrationError : public Error {
 public:
  CalibrationError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

// A profile that cannot be used for reconstruction (e.g. zero kernel sum).
class InvalidProfileError : public Error {
 public:
  using Error::Error;
};

// Malformed or unreadable on-disk data.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace atomdet
