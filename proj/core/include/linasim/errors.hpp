// Copyright 2026 The LinaSim Authors
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

#ifndef LINASIM_ERRORS_HPP_
#define LINASIM_ERRORS_HPP_

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace linasim {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidSpec : public Error {
 public:
  explicit InvalidSpec(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const noexcept {
    return violations_;
  }

 private:
  std::vector<std::string> violations_;
};

class UnknownDevice : public Error {
 public:
  UnknownDevice(std::int64_t device, std::int64_t num_devices);
  std::int64_t device() const noexcept { return device_; }

 private:
  std::int64_t device_;
};

class DeadlockDetected : public Error {
 public:
  DeadlockDetected(const std::string& reason, std::vector<std::uint64_t> ops);
  // Ops forming the cycle, or ops left unfinished when the run went quiet.
  const std::vector<std::uint64_t>& ops() const noexcept { return ops_; }

 private:
  std::vector<std::uint64_t> ops_;
};

class NegativeRemainder : public Error {
 public:
  using Error::Error;
};

class EmptyWindow : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SchemaMismatch : public Error {
 public:
  using Error::Error;
};

class TraceTooShort : public Error {
 public:
  using Error::Error;
};

class LayerTooEarly : public Error {
 public:
  using Error::Error;
};

class InfeasiblePlan : public Error {
 public:
  using Error::Error;
};

class PlanMissing : public Error {
 public:
  using Error::Error;
};

class ProfileMissing : public Error {
 public:
  using Error::Error;
};

}  // namespace linasim

#endif  // LINASIM_ERRORS_HPP_
