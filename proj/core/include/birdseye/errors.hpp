// Copyright 2026 The Birdseye Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace birdseye {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

/// Singular or otherwise unusable point correspondences / homographies.
class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

class ScheduleError : public Error {
 public:
  using Error::Error;
};

class UnsupportedGradient : public Error {
 public:
  using Error::Error;
};

class UndefinedSimilarity : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class BackendUnavailable : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss during finetuning.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& stage, std::size_t iteration)
      : Error(stage + ": non-finite loss at iteration " +
              std::to_string(iteration)),
        stage_(stage),
        iteration_(iteration) {}

  const std::string& stage() const { return stage_; }
  std::size_t iteration() const { return iteration_; }

 private:
  std::string stage_;
  std::size_t iteration_;
};

/// Non-finite guidance gradient during sampling.
class GuidanceFailure : public Error {
 public:
  explicit GuidanceFailure(std::size_t step)
      : Error("non-finite guidance gradient at sampling step " +
              std::to_string(step)),
        step_(step) {}

  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

}  // namespace birdseye
