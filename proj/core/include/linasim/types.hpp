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

#ifndef LINASIM_TYPES_HPP_
#define LINASIM_TYPES_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace linasim {

using Seconds = double;
using Bytes = std::uint64_t;
using DeviceId = std::int32_t;
using ExpertId = std::int32_t;
using OpId = std::uint64_t;

inline constexpr Bytes kMB = 1000ull * 1000ull;

// Ring moves 2(N-1)/N of the tensor through every participant's link.
// Tree is charged 2x the tensor on every participant (reduce then broadcast).
enum class AllReduceAlgorithm { kRing, kTree };

struct ClusterSpec {
  std::int32_t num_devices = 1;
  std::int32_t devices_per_node = 1;
  double inter_node_bw = 12.5e9;  // bytes per second, per device NIC
  double intra_node_bw = 1.0e11;  // bytes per second, per device fabric port
  // Fixed cost paid by every dispatched collective before it moves bytes.
  Seconds launch_latency = 50e-6;
  AllReduceAlgorithm allreduce_algorithm = AllReduceAlgorithm::kRing;

  std::int32_t num_nodes() const { return num_devices / devices_per_node; }
  std::int32_t node_of(DeviceId d) const { return d / devices_per_node; }
  bool same_node(DeviceId a, DeviceId b) const {
    return node_of(a) == node_of(b);
  }
};

// Per-token costs apply to the forward pass. Backward compute is the forward
// cost scaled by backward_compute_factor.
struct CostModel {
  Seconds gate_cost_per_token = 0;
  Seconds ffn_cost_per_token = 0;
  Seconds combine_cost_per_token = 0;
  Seconds attention_cost_per_token = 0;
  Seconds expert_swap_cost = 0;
  Seconds sched_phase_cost = 6.2e-3;
  Seconds resume_signal_cost = 1.45e-3;
  double backward_compute_factor = 2.0;
};

struct ModelSpec {
  std::int32_t num_layers = 1;
  std::int32_t experts_per_layer = 1;
  Bytes token_embedding_bytes = 1;
  // Gradient tensors emitted by the non-expert part of every layer during
  // backward, in emission order.
  std::vector<Bytes> nonexpert_grad_bytes;
  std::int32_t gating_top_k = 1;
  // Size of one expert's parameters; moved when packing changes placement.
  Bytes expert_param_bytes = 0;
};

enum class CollectiveKind { kAllToAll, kAllReduce, kPointToPoint };
enum class Priority { kHigh, kLow };

std::string_view to_string(CollectiveKind kind);
std::string_view to_string(Priority priority);

struct PairBytes {
  DeviceId src = 0;
  DeviceId dst = 0;
  Bytes bytes = 0;
  friend bool operator==(const PairBytes&, const PairBytes&) = default;
};

// Byte content of a collective. AllToAll and PointToPoint use `pairs`;
// AllReduce uses `tensor_bytes` over `participants`.
struct Payload {
  CollectiveKind kind = CollectiveKind::kAllToAll;
  std::vector<PairBytes> pairs;
  Bytes tensor_bytes = 0;
  std::vector<DeviceId> participants;

  static Payload AllToAll(std::vector<PairBytes> pairs);
  static Payload AllReduce(Bytes tensor_bytes,
                           std::vector<DeviceId> participants);
  static Payload PointToPoint(DeviceId src, DeviceId dst, Bytes bytes);

  // Sum of pair bytes, or tensor_bytes for AllReduce.
  Bytes total_bytes() const;
  // Largest number of bytes any single device sends.
  Bytes max_send_bytes() const;
  // Devices touched by this payload, ascending.
  std::vector<DeviceId> devices() const;

  friend bool operator==(const Payload&, const Payload&) = default;
};

struct CollectiveOp {
  OpId op_id = 0;
  Payload payload;
  Priority priority_class = Priority::kLow;
  Seconds arrival_time = 0;
  std::vector<OpId> dependencies;
};

struct MicroOp {
  OpId parent_id = 0;
  std::size_t index = 0;
  std::size_t count = 1;
  Payload payload;
};

// Splits into chunks of chunk_bytes. AllReduce and PointToPoint cut the
// tensor into full chunks plus a smaller remainder. AllToAll picks the chunk
// count from the largest per-device send volume and divides every pair evenly,
// the last chunk taking the remainder.
std::vector<MicroOp> partition(const CollectiveOp& op, Bytes chunk_bytes);
std::vector<MicroOp> partition(const Payload& payload, OpId parent,
                               Bytes chunk_bytes);
Payload concatenate(const std::vector<MicroOp>& micro_ops);

struct BatchAssignment {
  std::size_t num_tokens = 0;
  std::vector<DeviceId> origin_device;
  std::vector<std::vector<ExpertId>> selection;
};

struct Scenario {
  ClusterSpec cluster;
  ModelSpec model;
  CostModel cost;
};

// Throws InvalidSpec naming every violated invariant.
Scenario validate_spec(const ClusterSpec& cluster, const ModelSpec& model,
                       const CostModel& cost);
void validate_batch(const BatchAssignment& batch, std::int32_t num_devices,
                    std::int32_t num_experts);

}  // namespace linasim

#endif  // LINASIM_TYPES_HPP_
