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

#ifndef LINASIM_WORKLOAD_HPP_
#define LINASIM_WORKLOAD_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "linasim/types.hpp"

namespace linasim::workload {

enum class TraceMode { kTrainingBalanced, kInferenceSkewed };

std::string_view to_string(TraceMode mode);
// Throws std::invalid_argument for unknown names.
TraceMode parse_mode(std::string_view name);

struct GeneratorParams {
  // Probability that a token follows its path-consistent expert.
  double pattern_strength = 0.42;
  double zipf_s = 0.0;
  std::int64_t tokens_per_batch = 1024;
  std::int64_t num_batches = 1;
  std::uint64_t seed = 0;
  // Layers of routing history the transition map reads. With 1 the next
  // expert depends on the current expert only.
  std::int32_t memory = 1;
  // Seeds the transition maps and popularity orders. Defaults to `seed`, so
  // a separate value lets two traces share one model.
  std::optional<std::uint64_t> model_seed;

  std::uint64_t effective_model_seed() const {
    return model_seed.value_or(seed);
  }
  friend bool operator==(const GeneratorParams&,
                         const GeneratorParams&) = default;
};

void validate_params(const GeneratorParams& params);

struct TraceMeta {
  std::int32_t layers = 0;
  std::int32_t experts = 0;
  std::int32_t top_k = 1;
  std::uint64_t seed = 0;
  std::optional<TraceMode> mode;
  std::optional<GeneratorParams> params;

  friend bool operator==(const TraceMeta&, const TraceMeta&) = default;
};

struct TokenRecord {
  std::int64_t batch = 0;
  std::int64_t token = 0;
  // sel[layer] holds the ordered top-k experts of that layer.
  std::vector<std::vector<ExpertId>> sel;

  ExpertId top1(std::int32_t layer) const { return sel[layer][0]; }
  friend bool operator==(const TokenRecord&, const TokenRecord&) = default;
};

struct TraceSet {
  TraceMeta meta;
  std::vector<TokenRecord> tokens;  // ordered by (batch, token)

  // Distinct batch ids in order of appearance.
  std::vector<std::int64_t> batches() const;
  // Indices into `tokens` belonging to batch b.
  std::vector<std::size_t> batch_tokens(std::int64_t b) const;

  friend bool operator==(const TraceSet&, const TraceSet&) = default;
};

// Throws SchemaMismatch when a record disagrees with the metadata.
void validate_trace(const TraceSet& trace);

// The seeded model behind a generated trace. Layer i+1's follow target for a
// token is target[i+1][context * E + e_i], where the context encodes the
// token's memory-1 experts before layer i. Targets are drawn once from the
// layer's Zipf popularity, so popular experts are reached by many paths.
struct GroundTruth {
  TraceMode mode = TraceMode::kInferenceSkewed;
  double pattern_strength = 0;
  std::int32_t memory = 1;
  std::int32_t layers = 0;
  std::int32_t experts = 0;
  std::vector<std::vector<double>> marginal;  // per layer, non-follower draw
  std::vector<std::vector<ExpertId>> target;

  // history holds the top-1 experts of layers 0..i.
  ExpertId follow(std::int32_t next_layer,
                  const std::vector<ExpertId>& history) const;
  // Distribution of the layer-(i+1) top-1 expert given the history. Exact in
  // inference mode; training quotas perturb it slightly.
  std::vector<double> row(std::int32_t next_layer,
                          const std::vector<ExpertId>& history) const;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct GeneratedTrace {
  TraceSet trace;
  GroundTruth truth;
};

GeneratedTrace gen_trace(const GeneratorParams& params, const ModelSpec& model,
                         TraceMode mode);

// Per layer i, the share of tokens whose layer-(i+1) top-1 expert is among
// the k most frequent next experts of the tokens that shared their layer-i
// expert. Throws TraceTooShort below two layers.
std::vector<double> measure_pattern(const TraceSet& trace, std::int32_t k);

// Per layer, fraction of all selections that picked each expert.
std::vector<std::vector<double>> expert_marginals(const TraceSet& trace);

// Largest over smallest per-expert selection count of one layer. Infinity if
// some expert is never selected.
double skew_ratio(const TraceSet& trace, std::int32_t layer);

// Tokens of one batch at one layer. Origin devices are contiguous blocks.
BatchAssignment batch_assignment(const TraceSet& trace, std::int64_t batch,
                                 std::int32_t layer, std::int32_t num_devices);

void save_trace(const TraceSet& trace, std::ostream& os);
void save_trace(const TraceSet& trace, const std::filesystem::path& path);
TraceSet load_trace(std::istream& is);
TraceSet load_trace(const std::filesystem::path& path);

void save_ground_truth(const GroundTruth& truth, std::ostream& os);
void save_ground_truth(const GroundTruth& truth,
                       const std::filesystem::path& path);
GroundTruth load_ground_truth(const std::filesystem::path& path);

}  // namespace linasim::workload

#endif  // LINASIM_WORKLOAD_HPP_
