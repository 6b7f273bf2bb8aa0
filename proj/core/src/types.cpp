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

#include "linasim/types.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>

#include "linasim/errors.hpp"

namespace linasim {

std::string_view to_string(CollectiveKind kind) {
  switch (kind) {
    case CollectiveKind::kAllToAll:
      return "all_to_all";
    case CollectiveKind::kAllReduce:
      return "all_reduce";
    case CollectiveKind::kPointToPoint:
      return "point_to_point";
  }
  return "unknown";
}

std::string_view to_string(Priority priority) {
  return priority == Priority::kHigh ? "high" : "low";
}

Payload Payload::AllToAll(std::vector<PairBytes> pairs) {
  Payload p;
  p.kind = CollectiveKind::kAllToAll;
  p.pairs = std::move(pairs);
  return p;
}

Payload Payload::AllReduce(Bytes tensor_bytes,
                           std::vector<DeviceId> participants) {
  Payload p;
  p.kind = CollectiveKind::kAllReduce;
  p.tensor_bytes = tensor_bytes;
  p.participants = std::move(participants);
  return p;
}

Payload Payload::PointToPoint(DeviceId src, DeviceId dst, Bytes bytes) {
  Payload p;
  p.kind = CollectiveKind::kPointToPoint;
  p.pairs.push_back({src, dst, bytes});
  return p;
}

Bytes Payload::total_bytes() const {
  if (kind == CollectiveKind::kAllReduce) return tensor_bytes;
  Bytes total = 0;
  for (const auto& pr : pairs) total += pr.bytes;
  return total;
}

Bytes Payload::max_send_bytes() const {
  if (kind == CollectiveKind::kAllReduce) return tensor_bytes;
  std::map<DeviceId, Bytes> sent;
  for (const auto& pr : pairs) sent[pr.src] += pr.bytes;
  Bytes best = 0;
  for (const auto& [dev, b] : sent) best = std::max(best, b);
  return best;
}

std::vector<DeviceId> Payload::devices() const {
  std::vector<DeviceId> out;
  if (kind == CollectiveKind::kAllReduce) {
    out = participants;
  } else {
    for (const auto& pr : pairs) {
      out.push_back(pr.src);
      out.push_back(pr.dst);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

Bytes CeilDiv(Bytes a, Bytes b) { return a / b + (a % b != 0 ? 1 : 0); }

std::vector<Bytes> TensorChunks(Bytes total, Bytes chunk) {
  std::vector<Bytes> out;
  if (total == 0) return {0};
  for (Bytes done = 0; done < total; done += chunk) {
    out.push_back(std::min(chunk, total - done));
  }
  return out;
}

}  // namespace

std::vector<MicroOp> partition(const Payload& payload, OpId parent,
                               Bytes chunk_bytes) {
  if (chunk_bytes == 0) {
    throw std::invalid_argument("partition: chunk_bytes must be positive");
  }
  std::vector<MicroOp> out;
  auto emit = [&](Payload p) {
    MicroOp m;
    m.parent_id = parent;
    m.index = out.size();
    m.payload = std::move(p);
    out.push_back(std::move(m));
  };

  switch (payload.kind) {
    case CollectiveKind::kAllReduce:
      for (Bytes b : TensorChunks(payload.tensor_bytes, chunk_bytes)) {
        emit(Payload::AllReduce(b, payload.participants));
      }
      break;
    case CollectiveKind::kPointToPoint: {
      const PairBytes& pr = payload.pairs.at(0);
      for (Bytes b : TensorChunks(pr.bytes, chunk_bytes)) {
        emit(Payload::PointToPoint(pr.src, pr.dst, b));
      }
      break;
    }
    case CollectiveKind::kAllToAll: {
      const Bytes m =
          std::max<Bytes>(1, CeilDiv(payload.max_send_bytes(), chunk_bytes));
      for (Bytes i = 0; i < m; ++i) {
        std::vector<PairBytes> pairs;
        pairs.reserve(payload.pairs.size());
        for (const auto& pr : payload.pairs) {
          const Bytes base = pr.bytes / m;
          const Bytes b = (i + 1 == m) ? pr.bytes - base * (m - 1) : base;
          pairs.push_back({pr.src, pr.dst, b});
        }
        emit(Payload::AllToAll(std::move(pairs)));
      }
      break;
    }
  }
  for (auto& m : out) m.count = out.size();
  return out;
}

std::vector<MicroOp> partition(const CollectiveOp& op, Bytes chunk_bytes) {
  return partition(op.payload, op.op_id, chunk_bytes);
}

Payload concatenate(const std::vector<MicroOp>& micro_ops) {
  if (micro_ops.empty()) {
    throw std::invalid_argument("concatenate: no micro-ops");
  }
  Payload out = micro_ops.front().payload;
  for (std::size_t i = 1; i < micro_ops.size(); ++i) {
    const Payload& p = micro_ops[i].payload;
    if (p.kind != out.kind) {
      throw std::invalid_argument("concatenate: mixed collective kinds");
    }
    if (out.kind == CollectiveKind::kAllReduce) {
      out.tensor_bytes += p.tensor_bytes;
      continue;
    }
    if (p.pairs.size() != out.pairs.size()) {
      throw std::invalid_argument("concatenate: pair sets differ");
    }
    for (std::size_t j = 0; j < p.pairs.size(); ++j) {
      if (p.pairs[j].src != out.pairs[j].src ||
          p.pairs[j].dst != out.pairs[j].dst) {
        throw std::invalid_argument("concatenate: pair sets differ");
      }
      out.pairs[j].bytes += p.pairs[j].bytes;
    }
  }
  return out;
}

Scenario validate_spec(const ClusterSpec& cluster, const ModelSpec& model,
                       const CostModel& cost) {
  std::vector<std::string> v;
  auto positive = [&](double x, const char* name) {
    if (!(x > 0) || !std::isfinite(x)) {
      v.push_back(std::string(name) + " must be > 0");
    }
  };
  auto nonnegative = [&](double x, const char* name) {
    if (!(x >= 0) || !std::isfinite(x)) {
      v.push_back(std::string(name) + " must be >= 0");
    }
  };

  positive(cluster.num_devices, "cluster.num_devices");
  positive(cluster.devices_per_node, "cluster.devices_per_node");
  if (cluster.num_devices > 0 && cluster.devices_per_node > 0 &&
      cluster.num_devices % cluster.devices_per_node != 0) {
    v.push_back("cluster.devices_per_node must divide cluster.num_devices");
  }
  positive(cluster.inter_node_bw, "cluster.inter_node_bw");
  positive(cluster.intra_node_bw, "cluster.intra_node_bw");
  if (cluster.intra_node_bw < cluster.inter_node_bw) {
    v.push_back("cluster.intra_node_bw must be >= cluster.inter_node_bw");
  }
  nonnegative(cluster.launch_latency, "cluster.launch_latency");

  positive(model.num_layers, "model.num_layers");
  positive(model.experts_per_layer, "model.experts_per_layer");
  positive(static_cast<double>(model.token_embedding_bytes),
           "model.token_embedding_bytes");
  positive(model.gating_top_k, "model.gating_top_k");
  if (model.gating_top_k > model.experts_per_layer) {
    v.push_back("model.gating_top_k must be <= model.experts_per_layer");
  }
  for (std::size_t i = 0; i < model.nonexpert_grad_bytes.size(); ++i) {
    if (model.nonexpert_grad_bytes[i] == 0) {
      v.push_back("model.nonexpert_grad_bytes[" + std::to_string(i) +
                  "] must be > 0");
    }
  }

  nonnegative(cost.gate_cost_per_token, "cost.gate_cost_per_token");
  nonnegative(cost.ffn_cost_per_token, "cost.ffn_cost_per_token");
  nonnegative(cost.combine_cost_per_token, "cost.combine_cost_per_token");
  nonnegative(cost.attention_cost_per_token, "cost.attention_cost_per_token");
  nonnegative(cost.expert_swap_cost, "cost.expert_swap_cost");
  nonnegative(cost.sched_phase_cost, "cost.sched_phase_cost");
  nonnegative(cost.resume_signal_cost, "cost.resume_signal_cost");
  nonnegative(cost.backward_compute_factor, "cost.backward_compute_factor");

  if (!v.empty()) throw InvalidSpec(std::move(v));
  return Scenario{cluster, model, cost};
}

void validate_batch(const BatchAssignment& batch, std::int32_t num_devices,
                    std::int32_t num_experts) {
  std::vector<std::string> v;
  if (batch.num_tokens == 0) v.push_back("batch.num_tokens must be > 0");
  if (batch.origin_device.size() != batch.num_tokens) {
    v.push_back("batch.origin_device must have one entry per token");
  }
  if (batch.selection.size() != batch.num_tokens) {
    v.push_back("batch.selection must have one entry per token");
  }
  for (std::size_t t = 0; t < batch.origin_device.size(); ++t) {
    const DeviceId d = batch.origin_device[t];
    if (d < 0 || d >= num_devices) {
      v.push_back("token " + std::to_string(t) + " has origin device " +
                  std::to_string(d) + " outside the cluster");
    }
  }
  for (std::size_t t = 0; t < batch.selection.size(); ++t) {
    for (ExpertId e : batch.selection[t]) {
      if (e < 0 || e >= num_experts) {
        v.push_back("token " + std::to_string(t) + " selects expert " +
                    std::to_string(e) + " outside the layer");
      }
    }
  }
  if (!v.empty()) throw InvalidSpec(std::move(v));
}

}  // namespace linasim
