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

#ifndef LINASIM_INFERSCHED_HPP_
#define LINASIM_INFERSCHED_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string_view>
#include <vector>

#include "linasim/engine.hpp"
#include "linasim/report.hpp"
#include "linasim/types.hpp"
#include "linasim/workload.hpp"

namespace linasim::infer {

using Path = std::vector<ExpertId>;

// Next-layer expert distributions keyed by the experts a token picked in the
// preceding layers. Paths of every length 1..l are kept so unseen paths can
// back off to their suffixes and finally to the layer marginal.
class PopularityProfile {
 public:
  PopularityProfile() = default;
  PopularityProfile(std::int32_t path_length, std::int32_t layers,
                    std::int32_t experts);

  std::int32_t path_length() const { return path_length_; }
  std::int32_t layers() const { return layers_; }
  std::int32_t experts() const { return experts_; }

  // `path` ends at layer next_layer - 1.
  void set(std::int32_t next_layer, const Path& path, std::vector<double> dist);
  const std::vector<double>* find(std::int32_t next_layer,
                                  const Path& path) const;
  void set_marginal(std::int32_t layer, std::vector<double> dist);
  const std::vector<double>& marginal(std::int32_t layer) const;

  // history holds the top-1 experts of layers 0..next_layer-1. Returns the
  // distribution of the longest stored suffix of at most l experts, or the
  // marginal. matched_length receives the suffix length used (0: marginal).
  const std::vector<double>& lookup(std::int32_t next_layer,
                                    const std::vector<ExpertId>& history,
                                    std::int32_t* matched_length = nullptr) const;

  const std::map<Path, std::vector<double>>& entries(
      std::int32_t next_layer) const {
    return table_.at(next_layer);
  }
  std::size_t size() const;

  friend bool operator==(const PopularityProfile&,
                         const PopularityProfile&) = default;

 private:
  std::int32_t path_length_ = 0;
  std::int32_t layers_ = 0;
  std::int32_t experts_ = 0;
  std::vector<std::map<Path, std::vector<double>>> table_;
  std::vector<std::vector<double>> marginal_;
};

// Throws TraceTooShort unless the trace spans at least l+1 layers.
PopularityProfile build_profile(const workload::TraceSet& trace,
                                std::int32_t path_length);

void save_profile(const PopularityProfile& profile, std::ostream& os);
void save_profile(const PopularityProfile& profile,
                  const std::filesystem::path& path);
PopularityProfile load_profile(std::istream& is);
PopularityProfile load_profile(const std::filesystem::path& path);

struct PopularityEstimate {
  std::vector<double> popularity;                 // per expert of layer i+1
  std::vector<std::vector<ExpertId>> token_top_k;  // per token
};

// histories[t] holds token t's top-1 experts of layers 0..layer. Each token
// contributes the profile probabilities of its k most likely next experts;
// the sum is divided by the token count.
// Throws LayerTooEarly when fewer than l layers precede the estimate.
PopularityEstimate estimate_popularity(
    const PopularityProfile& profile,
    const std::vector<std::vector<ExpertId>>& histories, std::int32_t layer,
    std::int32_t k);

struct AllocationPlan {
  std::int32_t num_devices = 0;
  std::int32_t num_experts = 0;
  std::int32_t max_packed = 1;
  std::vector<double> popularity;  // input the plan was computed from
  std::vector<std::int32_t> replicas;
  std::vector<std::vector<DeviceId>> hosts;    // per expert, ascending
  std::vector<std::vector<ExpertId>> hosted;   // per device, placement order
  // Devices occupied by experts that had a popularity estimate, and the
  // per-device load bound, in devices' worth of tokens, they were packed to.
  std::int32_t packed_devices = 0;
  double capacity = 0;

  std::int32_t devices_used() const;
  friend bool operator==(const AllocationPlan&, const AllocationPlan&) = default;
};

// Throws InvalidSpec when the plan breaks a placement invariant.
void validate_plan(const AllocationPlan& plan);

// Expert e on device e mod N.
AllocationPlan identity_plan(std::int32_t num_devices, std::int32_t experts,
                             std::int32_t max_packed);

// Replica counts proportional to popularity (nearest integer, at least one
// for every expert with an estimate), then grown on the experts with the
// heaviest replicas while that lightens the heaviest device. Replicas are
// packed first-fit-decreasing by load at the smallest per-device load bound
// that fits the cluster. Throws InfeasiblePlan when the experts cannot all
// be placed.
AllocationPlan allocate(const std::vector<double>& popularity,
                        std::int32_t num_devices, std::int32_t k,
                        std::int32_t max_packed, std::uint64_t seed = 0);

// One replica to pack: owning expert and its share of the tokens.
struct PackItem {
  ExpertId owner = 0;
  double load = 0;
};

// Items in decreasing load, each into the first device with a free slot,
// room under `capacity` and no replica of the same expert. Returns item
// indices per opened device.
std::vector<std::vector<std::size_t>> first_fit_decreasing(
    const std::vector<PackItem>& items, double capacity,
    std::int32_t max_packed);

// Fewest devices able to hold the items under the same rules, by
// exhaustive search; max_devices + 1 when none up to max_devices do.
std::int32_t min_devices_bruteforce(const std::vector<PackItem>& items,
                                    double capacity, std::int32_t max_packed,
                                    std::int32_t max_devices);

// Replicas allocate() packs for a popularity vector and the load bound it
// packs them to.
std::vector<PackItem> packing_items(const std::vector<double>& popularity,
                                    std::int32_t num_devices, std::int32_t k,
                                    std::int32_t max_packed,
                                    double* capacity = nullptr);

// Tokens per replica: counts[e] split round-robin over plan.hosts[e].
std::vector<std::vector<std::int64_t>> split_tokens(
    const AllocationPlan& plan, const std::vector<std::int64_t>& counts);

// Destination device of every (token, rank) selection.
std::vector<std::vector<DeviceId>> route(const AllocationPlan& plan,
                                         const BatchAssignment& batch);

std::vector<std::int64_t> selection_counts(const BatchAssignment& batch,
                                           std::int32_t experts);
// Share of the batch's tokens selecting each expert.
std::vector<double> actual_popularity(const BatchAssignment& batch,
                                      std::int32_t experts);

// The 2k most popular experts, ties broken by ascending id; sorted by id.
std::vector<ExpertId> top_2k(const std::vector<double>& popularity,
                             std::int32_t k);

struct PhaseTwoOutcome {
  std::vector<ExpertId> estimated_top;
  std::vector<ExpertId> actual_top;
  bool matched = false;
  AllocationPlan plan_used;
  Seconds overhead_charged = 0;
};

PhaseTwoOutcome two_phase_step(const AllocationPlan& plan_estimated,
                               const BatchAssignment& actual,
                               std::int32_t k, const CostModel& cost,
                               std::uint64_t seed = 0);

struct LayerSchedule {
  std::optional<AllocationPlan> plan;
  BatchAssignment routing;
  Seconds blocking = 0;   // phase-two window after the gate
  Seconds phase_one = 0;  // estimation cost, hidden behind compute if possible
};

// One batch through every layer. Throws PlanMissing for a layer without a
// plan.
sim::Workload build_inference_step(const ModelSpec& model,
                                   const ClusterSpec& cluster,
                                   const CostModel& cost,
                                   const std::vector<LayerSchedule>& layers);

enum class InferenceMode {
  kBaseline,
  kIdeal,
  kLina,
  kLinaNoEstimation,
  kLinaNoFinetune,
};

std::string_view to_string(InferenceMode mode);
// Throws std::invalid_argument for unknown names.
InferenceMode parse_inference_mode(std::string_view name);

struct InferenceOptions {
  InferenceMode mode = InferenceMode::kLina;
  std::int32_t max_packed = 4;
  std::uint64_t seed = 0;
  // First scheduled layer when running without a profile.
  std::int32_t path_length = 3;
};

struct InferenceRun {
  std::vector<Seconds> inference_times;  // per batch
  // Over scheduled (batch, layer) pairs; zero when nothing was scheduled.
  double estimation_accuracy = 0;
  double finetune_rate = 0;
  std::vector<double> layer_accuracy;  // per layer, NaN if unscheduled
  std::vector<Seconds> layer_all_to_all;  // per layer mean, both exchanges
  std::int64_t scheduled_layers = 0;
  SimReport last_report;
};

// Lina variants require a profile (ProfileMissing otherwise) whose path
// length decides the first scheduled layer.
InferenceRun simulate_inference(const ModelSpec& model,
                                const ClusterSpec& cluster,
                                const CostModel& cost,
                                const workload::TraceSet& trace,
                                const PopularityProfile* profile,
                                const InferenceOptions& options);

// fraction of matched phase-two checks.
struct AccuracySummary {
  double estimation_accuracy = 0;
  double finetune_rate = 0;
};
AccuracySummary accuracy(const std::vector<bool>& matched);

}  // namespace linasim::infer

#endif  // LINASIM_INFERSCHED_HPP_
