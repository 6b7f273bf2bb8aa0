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

#include "linasim/errors.hpp"

#include <sstream>
#include <utility>

namespace linasim {
namespace {

std::string JoinViolations(const std::vector<std::string>& violations) {
  std::ostringstream os;
  os << "invalid spec (" << violations.size() << " violation"
     << (violations.size() == 1 ? "" : "s") << ")";
  for (const auto& v : violations) os << "\n  - " << v;
  return os.str();
}

std::string JoinOps(const std::string& reason,
                    const std::vector<std::uint64_t>& ops) {
  std::ostringstream os;
  os << "deadlock: " << reason << " [";
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (i) os << " -> ";
    os << ops[i];
  }
  os << "]";
  return os.str();
}

}  // namespace

InvalidSpec::InvalidSpec(std::vector<std::string> violations)
    : Error(JoinViolations(violations)), violations_(std::move(violations)) {}

UnknownDevice::UnknownDevice(std::int64_t device, std::int64_t num_devices)
    : Error("unknown device " + std::to_string(device) + " (cluster has " +
            std::to_string(num_devices) + " devices)"),
      device_(device) {}

DeadlockDetected::DeadlockDetected(const std::string& reason,
                                   std::vector<std::uint64_t> ops)
    : Error(JoinOps(reason, ops)), ops_(std::move(ops)) {}

ParseError::ParseError(std::size_t line, const std::string& what)
    : Error("parse error at line " + std::to_string(line) + ": " + what),
      line_(line) {}

}  // namespace linasim
