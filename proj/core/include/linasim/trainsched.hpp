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

#ifndef LINASIM_TRAINSCHED_HPP_
#define LINASIM_TRAINSCHED_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string_view>
#include <vector>

#include "linasim/engine.hpp"
#include "linasim/report.hpp"
#include "linasim/types.hpp"

namespace linasim::train {

enum class Pass { kForward = 0, kBackward = 1 };
enum class Stage {
  kAttention = 0,
  kGate = 1,
  kA2AFirst = 2,
  kFfn = 3,
  kA2ASecond = 4,
  kCombine = 5,
  kAllReduce = 6,
  kParamExchange = 7,
};

std::int32_t make_role(Pass pass, Stage stage);
Pass role_pass(std::int32_t role);
Stage role_stage(std::int32_t role);

// Work of one MoE layer in one pass, identical on every device under the
// balanced training assumption. `a2a` is the token exchange; the return
// exchange carries the same bytes in the opposite direction.
struct MoeLayerWork {
  std::int32_t layer = 0;
  Seconds attention = 0;
  Seconds gate = 0;
  Seconds ffn = 0;
  Seconds combine = 0;
  Payload a2a;
};

struct BackwardWorkload {
  std::int32_t num_devices = 0;
  std::vector<MoeLayerWork> layers;  // last layer first
  // gradients[i] are emitted, in order, by the attention backward that
  // follows layers[i]'s gate backward.
  std::vector<std::vector<Bytes>> gradients;
};

struct StepWorkload {
  std::int32_t num_devices = 0;
  std::int32_t experts_per_device = 1;
  std::vector<MoeLayerWork> forward;  // first layer first
  BackwardWorkload backward;
  // Parameter exchange run once before the step after packing changed.
  std::vector<Payload> param_exchange;
};

// Devices per expert group when every device hosts `experts_per_device`
// experts. Throws InvalidSpec when the packing does not tile the cluster.
std::int32_t group_size(std::int32_t num_devices, std::int32_t experts,
                        std::int32_t experts_per_device);

// Balanced token exchange: every device spreads `bytes_per_device` evenly
// over the devices of its expert group, itself included.
Payload balanced_all_to_all(std::int32_t num_devices, std::int32_t group,
                            Bytes bytes_per_device);

// Expert weights each device must fetch when packing moves from `from` to
// `to` experts per device.
Payload param_exchange_payload(std::int32_t num_devices, std::int32_t experts,
                               std::int32_t from, std::int32_t to,
                               Bytes expert_param_bytes);

std::int32_t initial_experts_per_device(std::int32_t num_devices,
                                        std::int32_t experts);

BackwardWorkload build_backward(const ModelSpec& model,
                                const ClusterSpec& cluster,
                                const CostModel& cost,
                                std::int64_t tokens_per_device,
                                std::int32_t experts_per_device = 0);

// experts_per_device 0 selects the initial packing. A positive
// previous_experts_per_device different from experts_per_device inserts the
// parameter exchange.
StepWorkload build_step(const ModelSpec& model, const ClusterSpec& cluster,
                        const CostModel& cost, std::int64_t tokens_per_device,
                        std::int32_t experts_per_device = 0,
                        std::int32_t previous_experts_per_device = 0);

enum class PolicyKind {
  kBaseline,
  kNaivePriority,
  kPriorityOnly,
  kPriorityPartition,
  kLina,
  kFixedDeferral,
};

std::string_view to_string(PolicyKind kind);
// Throws std::invalid_argument for unknown names.
PolicyKind parse_policy(std::string_view name);
const std::vector<PolicyKind>& all_policies();

struct SchedulerPolicy {
  PolicyKind kind = PolicyKind::kLina;
  Bytes partition_bytes = 30 * kMB;
  Bytes allreduce_bucket_bytes = 25 * kMB;
  // Concurrent all-reduce streams for the bucketed fair-share policies.
  std::int32_t allreduce_streams = 1;
  // Hold all-reduce micro-ops while a backward combine is running.
  bool combine_lookahead = true;
};

void validate_policy(const SchedulerPolicy& policy);

struct MaterializedStep {
  sim::Workload workload;
  // Whole collective per group id, before partitioning.
  std::map<OpId, Payload> collectives;
};

MaterializedStep materialize(const StepWorkload& step,
                             const SchedulerPolicy& policy,
                             bool include_forward = true);

// One backward MoE layer split into micro-ops with FFN micro-tasks between
// them, for inspection and tests. Gradients are ignored.
sim::Workload pipeline_moe_layer(const MoeLayerWork& layer,
                                 std::int32_t num_devices,
                                 Bytes partition_bytes);

// The workload tells FixedDeferral how many backward exchanges to expect.
std::unique_ptr<sim::DispatchPolicy> make_dispatcher(
    const SchedulerPolicy& policy, const sim::Workload& workload);

struct AllToAllStat {
  OpId group = 0;
  std::int32_t layer = 0;
  Pass pass = Pass::kForward;
  Stage stage = Stage::kA2AFirst;
  std::int32_t micro_ops = 1;
  Seconds first_start = 0;
  Seconds last_end = 0;
  Seconds duration = 0;  // summed in-flight time of its micro-ops
  Seconds isolated = 0;  // whole collective alone on the network
  double slowdown() const { return isolated > 0 ? duration / isolated : 1.0; }
};

struct AllReduceStat {
  OpId group = 0;
  std::int32_t layer = 0;
  Bytes bytes = 0;
  Seconds first_start = 0;
  Seconds end = 0;
};

struct StepMetrics {
  SimReport report;
  std::vector<AllToAllStat> all_to_all;
  std::vector<AllReduceStat> all_reduce;
  Seconds ffn_micro_time = 0;  // forward pass means
  Seconds a2a_micro_time = 0;
};

StepMetrics analyze(SimReport report, const MaterializedStep& step,
                    const ClusterSpec& cluster);

StepMetrics simulate_step(const StepWorkload& step,
                          const SchedulerPolicy& policy,
                          const ClusterSpec& cluster,
                          bool include_forward = true);

struct PackingState {
  std::int32_t experts_per_device = 1;
  std::int32_t max_experts_per_device = 1;
  std::int32_t start_step = 10;
  std::int32_t cadence_steps = 4;
};

struct PackingMeasurement {
  Seconds ffn_micro_time = 0;
  Seconds a2a_micro_time = 0;
};

// One controller decision: doubles when the measured FFN micro-task does not
// exceed the all-to-all micro-op and the cap allows it.
std::int32_t next_packing(const PackingState& state,
                          const PackingMeasurement& measured);

// Repeats next_packing against a cost curve until it stops.
std::int32_t adjust_packing(
    const PackingState& state,
    const std::function<PackingMeasurement(std::int32_t)>& measure);

struct TrainingRunOptions {
  std::int32_t steps = 1;
  bool packing = false;
  PackingState packing_state;  // experts_per_device 0 means initial
  bool include_forward = true;
};

struct TrainingRun {
  std::vector<std::int32_t> packing_trajectory;  // experts per device, per step
  std::vector<Seconds> step_times;
  StepMetrics last;  // metrics of the final step
};

TrainingRun simulate_training(const ModelSpec& model,
                              const ClusterSpec& cluster,
                              const CostModel& cost,
                              std::int64_t tokens_per_device,
                              const SchedulerPolicy& policy,
                              const TrainingRunOptions& options);

// Randomised overlap of all-reduces with a single backward MoE layer, run
// under Baseline with one stream per all-reduce.
struct SlowdownScenarioParams {
  std::int32_t num_devices = 16;
  std::int32_t devices_per_node = 4;
  double inter_node_bw = 12.5e9;
  double intra_node_bw = 1.0e11;
  Bytes a2a_bytes_per_device = 32 * kMB;
  Seconds compute_gap = 1e-3;  // combine, FFN and gate backward each
  std::int32_t max_allreduces = 3;
  double min_allreduce_ratio = 0.5;  // all-reduce alone / all-to-all alone
  double max_allreduce_ratio = 2.0;
  double arrival_spread = 0.5;  // arrivals within +-spread * a2a duration
};

// Slowdown of every all-to-all in one randomised scenario.
std::vector<double> sample_slowdowns(const SlowdownScenarioParams& params,
                                     std::uint64_t seed);

}  // namespace linasim::train

#endif  // LINASIM_TRAINSCHED_HPP_
