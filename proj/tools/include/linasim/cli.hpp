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

#ifndef LINASIM_CLI_HPP_
#define LINASIM_CLI_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "linasim/errors.hpp"
#include "linasim/infersched.hpp"
#include "linasim/trainsched.hpp"
#include "linasim/types.hpp"
#include "linasim/workload.hpp"

namespace linasim::cli {

inline constexpr int kSummaryVersion = 1;
inline constexpr std::string_view kSummaryFormat = "linasim-summary";

// Bad command line or config document. Maps to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct SlowdownConfig {
  train::SlowdownScenarioParams params;
  std::int32_t scenarios = 500;
};

struct TrainConfig {
  std::vector<train::PolicyKind> policies;
  train::SchedulerPolicy policy;  // kind is replaced per run
  std::int64_t tokens_per_device = 1024;
  train::TrainingRunOptions run;
  std::vector<Bytes> partition_sweep;
  std::optional<SlowdownConfig> slowdown;
  bool timeline = true;
};

struct InferConfig {
  std::vector<infer::InferenceMode> modes;
  std::int32_t max_packed = 4;
  std::int32_t path_length = 3;
  std::optional<std::filesystem::path> profile;
  // Trace the profile is built from when no profile file is given.
  std::optional<workload::GeneratorParams> profile_generator;
  bool timeline = false;
};

struct WorkloadConfig {
  workload::TraceMode mode = workload::TraceMode::kInferenceSkewed;
  std::optional<workload::GeneratorParams> generator;
  std::optional<std::filesystem::path> trace;
};

struct ScenarioConfig {
  ClusterSpec cluster;
  ModelSpec model;
  CostModel cost;
  std::uint64_t seed = 0;
  std::optional<TrainConfig> train;
  std::optional<InferConfig> infer;
  std::optional<WorkloadConfig> workload;
  // The document with the effective seed filled in.
  nlohmann::json document;
};

// Throws UsageError naming the offending key for unknown keys, wrong types
// and missing sections, and InvalidSpec for violated type invariants.
// Relative paths resolve against base_dir. A seed override replaces the
// document's seed.
ScenarioConfig parse_config(const nlohmann::json& doc,
                            const std::filesystem::path& base_dir,
                            std::optional<std::uint64_t> seed = std::nullopt);
ScenarioConfig load_config(const std::filesystem::path& path,
                           std::optional<std::uint64_t> seed = std::nullopt);

std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);
std::string config_hash(const ScenarioConfig& config);

// The trace the workload section describes, generated or read from disk.
workload::GeneratedTrace resolve_trace(const ScenarioConfig& config);
std::optional<infer::PopularityProfile> resolve_profile(
    const ScenarioConfig& config);

// Each command writes its artifacts and summary.json under out_dir and
// returns the summary.
nlohmann::json cmd_gen_trace(const ScenarioConfig& config,
                             const std::filesystem::path& out_dir);
nlohmann::json cmd_build_profile(const ScenarioConfig& config,
                                 const std::filesystem::path& out_dir);
nlohmann::json cmd_train_sim(const ScenarioConfig& config,
                             const std::filesystem::path& out_dir);
nlohmann::json cmd_infer_sim(const ScenarioConfig& config,
                             const std::filesystem::path& out_dir);

// Comparison of summary files: text table on `text`, CSV on `csv`. Throws
// UsageError for an empty input list and SchemaMismatch for a foreign or
// differently versioned summary.
nlohmann::json cmd_report(const std::vector<std::filesystem::path>& inputs,
                          std::ostream& text, std::ostream* csv);

// Linear interpolation between closest ranks; NaN for an empty sample.
double quantile(std::vector<double> sample, double q);

// Pretty JSON with a trailing newline; identical input gives identical bytes.
std::string dump_summary(const nlohmann::json& summary);
void write_summary(const nlohmann::json& summary,
                   const std::filesystem::path& path);

// Whole command line. Returns the process exit code: 0 on success, 2 on a
// usage or config error, 1 on any other failure.
int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err);

}  // namespace linasim::cli

#endif  // LINASIM_CLI_HPP_
