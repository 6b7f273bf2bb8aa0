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

#include <algorithm>
#include <map>
#include <random>
#include <utility>

#include "linasim/errors.hpp"
#include "linasim/netmodel.hpp"
#include "linasim/trainsched.hpp"

namespace linasim::train {

std::int32_t next_packing(const PackingState& state,
                          const PackingMeasurement& measured) {
  const std::int32_t p = std::max(1, state.experts_per_device);
  if (2 * p > state.max_experts_per_device) return p;
  if (measured.ffn_micro_time > measured.a2a_micro_time) return p;
  return 2 * p;
}

std::int32_t adjust_packing(
    const PackingState& state,
    const std::function<PackingMeasurement(std::int32_t)>& measure) {
  PackingState s = state;
  s.experts_per_device = std::max(1, s.experts_per_device);
  for (;;) {
    const std::int32_t next = next_packing(s, measure(s.experts_per_device));
    if (next == s.experts_per_device) return next;
    s.experts_per_device = next;
  }
}

namespace {

// Largest power-of-two multiple of p0 that still tiles the cluster.
std::int32_t PackingCap(std::int32_t requested, std::int32_t p0,
                        std::int32_t num_devices, std::int32_t experts) {
  std::int32_t cap = p0;
  while (2 * cap <= std::max(requested, p0)) {
    try {
      group_size(num_devices, experts, 2 * cap);
    } catch (const InvalidSpec&) {
      break;
    }
    cap *= 2;
  }
  return cap;
}

}  // namespace

TrainingRun simulate_training(const ModelSpec& model,
                              const ClusterSpec& cluster,
                              const CostModel& cost,
                              std::int64_t tokens_per_device,
                              const SchedulerPolicy& policy,
                              const TrainingRunOptions& options) {
  validate_spec(cluster, model, cost);
  if (options.steps < 1) throw InvalidSpec({"steps must be >= 1"});
  const std::int32_t p0 =
      options.packing_state.experts_per_device > 0
          ? options.packing_state.experts_per_device
          : initial_experts_per_device(cluster.num_devices,
                                       model.experts_per_layer);
  PackingState state = options.packing_state;
  state.experts_per_device = p0;
  state.max_experts_per_device =
      PackingCap(state.max_experts_per_device, p0, cluster.num_devices,
                 model.experts_per_layer);
  state.cadence_steps = std::max(1, state.cadence_steps);

  std::map<std::pair<std::int32_t, std::int32_t>, StepMetrics> memo;
  auto step_metrics = [&](std::int32_t p, std::int32_t from) -> StepMetrics& {
    auto key = std::make_pair(p, from);
    auto it = memo.find(key);
    if (it == memo.end()) {
      StepWorkload step =
          build_step(model, cluster, cost, tokens_per_device, p, from);
      it = memo.emplace(key, simulate_step(step, policy, cluster,
                                           options.include_forward))
               .first;
    }
    return it->second;
  };

  TrainingRun run;
  std::int32_t p = p0;
  std::int32_t from = 0;
  const StepMetrics* last = nullptr;
  for (std::int32_t s = 0; s < options.steps; ++s) {
    if (options.packing && last != nullptr && s >= state.start_step &&
        (s - state.start_step) % state.cadence_steps == 0) {
      state.experts_per_device = p;
      const std::int32_t next = next_packing(
          state, {last->ffn_micro_time, last->a2a_micro_time});
      if (next != p) {
        from = p;
        p = next;
      }
    }
    last = &step_metrics(p, from);
    from = 0;
    run.packing_trajectory.push_back(p);
    run.step_times.push_back(last->report.step_time);
  }
  run.last = *last;
  return run;
}

std::vector<double> sample_slowdowns(const SlowdownScenarioParams& params,
                                     std::uint64_t seed) {
  ClusterSpec cluster;
  cluster.num_devices = params.num_devices;
  cluster.devices_per_node = params.devices_per_node;
  cluster.inter_node_bw = params.inter_node_bw;
  cluster.intra_node_bw = params.intra_node_bw;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  StepWorkload step;
  step.num_devices = params.num_devices;
  MoeLayerWork layer;
  layer.layer = 0;
  layer.combine = params.compute_gap;
  layer.ffn = params.compute_gap;
  layer.gate = params.compute_gap;
  layer.a2a = balanced_all_to_all(params.num_devices, params.num_devices,
                                  params.a2a_bytes_per_device);
  step.backward.num_devices = params.num_devices;
  step.backward.layers.push_back(layer);
  step.backward.gradients.emplace_back();

  const std::int32_t k = 1 + static_cast<std::int32_t>(
                                 unit(rng) * std::max(1, params.max_allreduces));
  SchedulerPolicy policy;
  policy.kind = PolicyKind::kBaseline;
  policy.allreduce_streams = std::min(k, std::max(1, params.max_allreduces));
  MaterializedStep mat = materialize(step, policy, false);

  const Seconds a = net::isolated_duration(layer.a2a, cluster);
  const double n = static_cast<double>(params.num_devices);
  const double per_byte = 2.0 * (n - 1.0) / n / cluster.inter_node_bw;
  std::vector<DeviceId> everyone(params.num_devices);
  for (DeviceId d = 0; d < params.num_devices; ++d) everyone[d] = d;
  OpId next = 1;
  for (const auto& t : mat.workload.compute) next = std::max(next, t.id + 1);
  for (const auto& t : mat.workload.comm) next = std::max(next, t.id + 1);
  for (const auto& [g, p] : mat.collectives) next = std::max(next, g + 1);

  for (std::int32_t i = 0; i < policy.allreduce_streams; ++i) {
    const double ratio =
        uniform(params.min_allreduce_ratio, params.max_allreduce_ratio);
    const Seconds transfer = std::max(0.0, ratio * a - cluster.launch_latency);
    const Bytes bytes = std::max<Bytes>(1, static_cast<Bytes>(transfer / per_byte));
    sim::CommTask t;
    t.id = next++;
    t.payload = Payload::AllReduce(bytes, everyone);
    t.priority = Priority::kLow;
    t.arrival = std::max(
        0.0, params.compute_gap +
                 uniform(-params.arrival_spread, params.arrival_spread) * a);
    t.tag.label = "bwd.allreduce";
    t.tag.role = make_role(Pass::kBackward, Stage::kAllReduce);
    t.tag.group = next++;
    t.tag.stream = 1 + i;
    mat.collectives[t.tag.group] = t.payload;
    mat.workload.comm.push_back(std::move(t));
  }

  auto dispatcher = make_dispatcher(policy, mat.workload);
  SimReport report = sim::run(mat.workload, cluster, *dispatcher);
  StepMetrics m = analyze(std::move(report), mat, cluster);

  std::vector<double> out;
  for (const AllToAllStat& s : m.all_to_all) {
    bool overlapped = false;
    for (const AllReduceStat& r : m.all_reduce) {
      if (r.first_start < s.last_end && r.end > s.first_start) overlapped = true;
    }
    if (overlapped) out.push_back(s.slowdown());
  }
  return out;
}

}  // namespace linasim::train
