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

#include "linasim/trainsched.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>

#include "linasim/errors.hpp"
#include "linasim/netmodel.hpp"

namespace linasim::train {

std::int32_t make_role(Pass pass, Stage stage) {
  return static_cast<std::int32_t>(pass) * 16 +
         static_cast<std::int32_t>(stage);
}
Pass role_pass(std::int32_t role) { return static_cast<Pass>(role / 16); }
Stage role_stage(std::int32_t role) { return static_cast<Stage>(role % 16); }

std::int32_t group_size(std::int32_t num_devices, std::int32_t experts,
                        std::int32_t experts_per_device) {
  std::vector<std::string> v;
  if (experts_per_device <= 0 || experts % experts_per_device != 0) {
    v.push_back("experts_per_device " + std::to_string(experts_per_device) +
                " must divide experts_per_layer " + std::to_string(experts));
  } else {
    const std::int32_t g = experts / experts_per_device;
    if (g > num_devices || num_devices % g != 0) {
      v.push_back("expert group of " + std::to_string(g) +
                  " devices does not tile " + std::to_string(num_devices) +
                  " devices");
    } else {
      return g;
    }
  }
  throw InvalidSpec(std::move(v));
}

std::int32_t initial_experts_per_device(std::int32_t num_devices,
                                        std::int32_t experts) {
  return std::max<std::int32_t>(1, experts / num_devices);
}

Payload balanced_all_to_all(std::int32_t num_devices, std::int32_t group,
                            Bytes bytes_per_device) {
  std::vector<PairBytes> pairs;
  const Bytes g = static_cast<Bytes>(group);
  for (DeviceId d = 0; d < num_devices; ++d) {
    const DeviceId base = (d / group) * group;
    for (std::int32_t q = 0; q < group; ++q) {
      const Bytes extra = static_cast<Bytes>(q) < bytes_per_device % g ? 1 : 0;
      pairs.push_back({d, base + q, bytes_per_device / g + extra});
    }
  }
  return Payload::AllToAll(std::move(pairs));
}

Payload param_exchange_payload(std::int32_t num_devices, std::int32_t experts,
                               std::int32_t from, std::int32_t to,
                               Bytes expert_param_bytes) {
  const std::int32_t g_from = group_size(num_devices, experts, from);
  const std::int32_t g_to = group_size(num_devices, experts, to);
  std::map<std::pair<DeviceId, DeviceId>, Bytes> moved;
  for (DeviceId d = 0; d < num_devices; ++d) {
    const std::int32_t lo = d % g_from;
    const std::int32_t li = d % g_to;
    const DeviceId base_from = d - lo;
    for (std::int32_t e = li * to; e < (li + 1) * to; ++e) {
      if (e >= lo * from && e < (lo + 1) * from) continue;
      const DeviceId src = base_from + e / from;
      moved[{src, d}] += expert_param_bytes;
    }
  }
  std::vector<PairBytes> pairs;
  for (const auto& [key, b] : moved) pairs.push_back({key.first, key.second, b});
  return Payload::AllToAll(std::move(pairs));
}

namespace {

Payload Reversed(const Payload& p) {
  Payload out = p;
  for (auto& pr : out.pairs) std::swap(pr.src, pr.dst);
  std::sort(out.pairs.begin(), out.pairs.end(),
            [](const PairBytes& a, const PairBytes& b) {
              return std::tie(a.src, a.dst) < std::tie(b.src, b.dst);
            });
  return out;
}

MoeLayerWork LayerWork(std::int32_t layer, const CostModel& cost,
                       std::int64_t tokens, std::int32_t k,
                       std::int32_t experts_per_device, double factor,
                       const Payload& a2a) {
  const double t = static_cast<double>(tokens);
  MoeLayerWork w;
  w.layer = layer;
  w.attention = t * cost.attention_cost_per_token * factor;
  w.gate = t * cost.gate_cost_per_token * factor;
  w.ffn = t * k * cost.ffn_cost_per_token * factor +
          (experts_per_device - 1) * cost.expert_swap_cost;
  w.combine = t * k * cost.combine_cost_per_token * factor;
  w.a2a = a2a;
  return w;
}

}  // namespace

BackwardWorkload build_backward(const ModelSpec& model,
                                const ClusterSpec& cluster,
                                const CostModel& cost,
                                std::int64_t tokens_per_device,
                                std::int32_t experts_per_device) {
  validate_spec(cluster, model, cost);
  if (tokens_per_device < 0) {
    throw InvalidSpec({"tokens_per_device must be >= 0"});
  }
  const std::int32_t p =
      experts_per_device > 0
          ? experts_per_device
          : initial_experts_per_device(cluster.num_devices,
                                       model.experts_per_layer);
  const std::int32_t g =
      group_size(cluster.num_devices, model.experts_per_layer, p);
  const Bytes per_device = static_cast<Bytes>(tokens_per_device) *
                           static_cast<Bytes>(model.gating_top_k) *
                           model.token_embedding_bytes;
  const Payload a2a = balanced_all_to_all(cluster.num_devices, g, per_device);

  BackwardWorkload bw;
  bw.num_devices = cluster.num_devices;
  for (std::int32_t layer = model.num_layers - 1; layer >= 0; --layer) {
    bw.layers.push_back(LayerWork(layer, cost, tokens_per_device,
                                  model.gating_top_k, p,
                                  cost.backward_compute_factor, a2a));
    bw.gradients.push_back(model.nonexpert_grad_bytes);
  }
  return bw;
}

StepWorkload build_step(const ModelSpec& model, const ClusterSpec& cluster,
                        const CostModel& cost, std::int64_t tokens_per_device,
                        std::int32_t experts_per_device,
                        std::int32_t previous_experts_per_device) {
  StepWorkload step;
  step.backward = build_backward(model, cluster, cost, tokens_per_device,
                                 experts_per_device);
  step.num_devices = cluster.num_devices;
  step.experts_per_device =
      experts_per_device > 0
          ? experts_per_device
          : initial_experts_per_device(cluster.num_devices,
                                       model.experts_per_layer);
  for (std::int32_t layer = 0; layer < model.num_layers; ++layer) {
    step.forward.push_back(LayerWork(layer, cost, tokens_per_device,
                                     model.gating_top_k,
                                     step.experts_per_device, 1.0,
                                     step.backward.layers.front().a2a));
  }
  if (previous_experts_per_device > 0 &&
      previous_experts_per_device != step.experts_per_device) {
    step.param_exchange.push_back(param_exchange_payload(
        cluster.num_devices, model.experts_per_layer,
        previous_experts_per_device, step.experts_per_device,
        model.expert_param_bytes));
  }
  return step;
}

namespace {

std::string Label(Pass pass, Stage stage) {
  static const char* kStage[] = {"attn", "gate", "a2a1", "ffn",
                                 "a2a2", "combine", "allreduce", "param_exchange"};
  return std::string(pass == Pass::kForward ? "fwd." : "bwd.") +
         kStage[static_cast<int>(stage)];
}

TaskTag Tag(Pass pass, Stage stage, std::int32_t layer) {
  TaskTag t;
  t.label = Label(pass, stage);
  t.role = make_role(pass, stage);
  t.layer = layer;
  return t;
}

struct Emission {
  std::int32_t layer = 0;
  Bytes bytes = 0;
  std::vector<OpId> emitted_by;
};

class Builder {
 public:
  Builder(const SchedulerPolicy& policy, std::int32_t num_devices)
      : policy_(policy), n_(num_devices), tail_(num_devices, 0) {
    partition_a2a_ = policy.kind == PolicyKind::kPriorityPartition ||
                     policy.kind == PolicyKind::kLina;
    pipelined_ = policy.kind == PolicyKind::kLina;
  }

  MaterializedStep Build(const StepWorkload& step, bool include_forward) {
    std::vector<OpId> barrier;
    for (const Payload& p : step.param_exchange) {
      auto ids = Collective(p, Priority::kHigh,
                            [](std::size_t) { return std::vector<OpId>{}; },
                            Tag(Pass::kForward, Stage::kParamExchange, -1), 0);
      barrier.insert(barrier.end(), ids.begin(), ids.end());
    }
    if (include_forward) {
      for (const MoeLayerWork& w : step.forward) {
        Stages(w.attention, barrier, Tag(Pass::kForward, Stage::kAttention,
                                         w.layer));
        barrier.clear();
        auto gate = Stages(w.gate, {}, Tag(Pass::kForward, Stage::kGate,
                                           w.layer));
        auto a2 = MoeExchange(w, Pass::kForward, gate);
        Stages(w.combine, a2, Tag(Pass::kForward, Stage::kCombine, w.layer));
      }
    }
    const BackwardWorkload& bw = step.backward;
    for (std::size_t i = 0; i < bw.layers.size(); ++i) {
      const MoeLayerWork& w = bw.layers[i];
      auto comb = Stages(w.combine, barrier,
                         Tag(Pass::kBackward, Stage::kCombine, w.layer));
      barrier.clear();
      auto a2 = MoeExchange(w, Pass::kBackward, comb);
      Stages(w.gate, a2, Tag(Pass::kBackward, Stage::kGate, w.layer));
      const auto& grads = bw.gradients[i];
      const std::size_t segments = std::max<std::size_t>(1, grads.size());
      for (std::size_t s = 0; s < segments; ++s) {
        auto seg = Stages(w.attention / static_cast<double>(segments), {},
                          Tag(Pass::kBackward, Stage::kAttention, w.layer));
        if (s < grads.size()) emissions_.push_back({w.layer, grads[s], seg});
      }
    }
    AllReduces();
    return std::move(out_);
  }

  std::vector<OpId> MoeExchange(const MoeLayerWork& w, Pass pass,
                                const std::vector<OpId>& pre) {
    const Bytes chunk = partition_a2a_ ? policy_.partition_bytes : 0;
    auto a1 = Collective(w.a2a, Priority::kHigh,
                         [&](std::size_t) { return pre; },
                         Tag(pass, Stage::kA2AFirst, w.layer), chunk);
    const Payload back = Reversed(w.a2a);
    if (pipelined_) {
      const auto micro = partition(w.a2a, 0, chunk);
      const double total = static_cast<double>(w.a2a.total_bytes());
      std::vector<std::vector<OpId>> ffn(a1.size());
      for (std::size_t j = 0; j < a1.size(); ++j) {
        const double share =
            total > 0 ? static_cast<double>(micro[j].payload.total_bytes()) /
                            total
                      : 1.0 / static_cast<double>(a1.size());
        TaskTag tag = Tag(pass, Stage::kFfn, w.layer);
        tag.micro_index = static_cast<std::int32_t>(j);
        tag.micro_count = static_cast<std::int32_t>(a1.size());
        ffn[j] = Stages(w.ffn * share, {a1[j]}, tag);
      }
      return Collective(back, Priority::kHigh,
                        [&](std::size_t j) { return ffn[j]; },
                        Tag(pass, Stage::kA2ASecond, w.layer), chunk);
    }
    auto ffn = Stages(w.ffn, a1, Tag(pass, Stage::kFfn, w.layer));
    return Collective(back, Priority::kHigh,
                      [&](std::size_t) { return ffn; },
                      Tag(pass, Stage::kA2ASecond, w.layer), chunk);
  }

 private:
  // One compute task per device, chained after the device's previous task.
  std::vector<OpId> Stages(Seconds duration, const std::vector<OpId>& extra,
                           const TaskTag& tag) {
    std::vector<OpId> ids;
    for (DeviceId d = 0; d < n_; ++d) {
      sim::ComputeTask t;
      t.id = next_++;
      t.device = d;
      t.duration = duration;
      t.deps = extra;
      if (tail_[d] != 0) t.deps.push_back(tail_[d]);
      t.tag = tag;
      tail_[d] = t.id;
      ids.push_back(t.id);
      out_.workload.compute.push_back(std::move(t));
    }
    return ids;
  }

  std::vector<OpId> Collective(
      const Payload& payload, Priority priority,
      const std::function<std::vector<OpId>(std::size_t)>& deps, TaskTag tag,
      Bytes chunk) {
    const OpId group = next_++;
    out_.collectives[group] = payload;
    std::vector<MicroOp> micro;
    if (chunk == 0) {
      micro.push_back({group, 0, 1, payload});
    } else {
      micro = partition(payload, group, chunk);
    }
    std::vector<OpId> ids;
    for (std::size_t j = 0; j < micro.size(); ++j) {
      sim::CommTask t;
      t.id = next_++;
      t.payload = std::move(micro[j].payload);
      t.priority = priority;
      t.deps = deps(j);
      t.tag = tag;
      t.tag.group = group;
      t.tag.micro_index = static_cast<std::int32_t>(j);
      t.tag.micro_count = static_cast<std::int32_t>(micro.size());
      ids.push_back(t.id);
      out_.workload.comm.push_back(std::move(t));
    }
    return ids;
  }

  void AllReduces() {
    std::vector<DeviceId> everyone(n_);
    for (DeviceId d = 0; d < n_; ++d) everyone[d] = d;
    auto emit = [&](Bytes bytes, const std::vector<OpId>& deps,
                    std::int32_t layer, std::int32_t stream, Bytes chunk) {
      TaskTag tag = Tag(Pass::kBackward, Stage::kAllReduce, layer);
      tag.stream = stream;
      Collective(Payload::AllReduce(bytes, everyone), Priority::kLow,
                 [&](std::size_t) { return deps; }, tag, chunk);
    };

    switch (policy_.kind) {
      case PolicyKind::kBaseline:
      case PolicyKind::kNaivePriority:
      case PolicyKind::kFixedDeferral: {
        Bytes filled = 0;
        std::int32_t bucket = 0;
        for (std::size_t i = 0; i < emissions_.size(); ++i) {
          filled += emissions_[i].bytes;
          const bool last = i + 1 == emissions_.size();
          if (filled >= policy_.allreduce_bucket_bytes || last) {
            const std::int32_t streams = std::max(1, policy_.allreduce_streams);
            emit(filled, emissions_[i].emitted_by, emissions_[i].layer,
                 1 + bucket % streams, 0);
            ++bucket;
            filled = 0;
          }
        }
        break;
      }
      case PolicyKind::kPriorityOnly:
        for (const auto& e : emissions_) emit(e.bytes, e.emitted_by, e.layer, 1, 0);
        break;
      case PolicyKind::kPriorityPartition:
      case PolicyKind::kLina:
        for (const auto& e : emissions_) {
          emit(e.bytes, e.emitted_by, e.layer, 1, policy_.partition_bytes);
        }
        break;
    }
  }

  const SchedulerPolicy& policy_;
  std::int32_t n_;
  std::vector<OpId> tail_;
  bool partition_a2a_ = false;
  bool pipelined_ = false;
  OpId next_ = 1;
  std::vector<Emission> emissions_;
  MaterializedStep out_;
};

}  // namespace

MaterializedStep materialize(const StepWorkload& step,
                             const SchedulerPolicy& policy,
                             bool include_forward) {
  validate_policy(policy);
  Builder b(policy, step.num_devices);
  return b.Build(step, include_forward);
}

sim::Workload pipeline_moe_layer(const MoeLayerWork& layer,
                                 std::int32_t num_devices,
                                 Bytes partition_bytes) {
  SchedulerPolicy policy;
  policy.kind = PolicyKind::kLina;
  policy.partition_bytes = partition_bytes;
  validate_policy(policy);
  StepWorkload step;
  step.num_devices = num_devices;
  step.backward.num_devices = num_devices;
  step.backward.layers.push_back(layer);
  step.backward.gradients.emplace_back();
  MoeLayerWork no_attention = layer;
  no_attention.attention = 0;
  step.backward.layers.back() = no_attention;
  Builder b(policy, num_devices);
  return b.Build(step, false).workload;
}

StepMetrics analyze(SimReport report, const MaterializedStep& step,
                    const ClusterSpec& cluster) {
  StepMetrics m;
  std::map<OpId, AllToAllStat> a2a;
  std::map<OpId, AllReduceStat> ar;
  struct Span {
    Seconds start = std::numeric_limits<Seconds>::infinity();
    Seconds end = 0;
  };
  // (layer, pass) -> spans of the MoE layer and of its exchange window.
  std::map<std::pair<std::int32_t, Pass>, Span> layer_span;
  std::map<std::pair<std::int32_t, Pass>, Span> a2a_window;
  double ffn_sum = 0;
  std::size_t ffn_n = 0;
  double micro_sum[2] = {0, 0};
  std::size_t micro_n[2] = {0, 0};

  for (const OpRecord& r : report.records) {
    const Pass pass = role_pass(r.tag.role);
    const Stage stage = role_stage(r.tag.role);
    const auto key = std::make_pair(r.tag.layer, pass);
    const bool opens = (pass == Pass::kForward && stage == Stage::kGate) ||
                       (pass == Pass::kBackward && stage == Stage::kCombine);
    const bool closes = (pass == Pass::kForward && stage == Stage::kCombine) ||
                        (pass == Pass::kBackward && stage == Stage::kGate);
    if (opens) layer_span[key].start = std::min(layer_span[key].start, r.start);
    if (closes) layer_span[key].end = std::max(layer_span[key].end, r.end);

    if (stage == Stage::kFfn && r.device == 0) {
      ffn_sum += r.end - r.start;
      ++ffn_n;
    }
    if (stage == Stage::kA2AFirst || stage == Stage::kA2ASecond) {
      AllToAllStat& s = a2a[r.tag.group];
      if (s.group == 0) {
        s.group = r.tag.group;
        s.layer = r.tag.layer;
        s.pass = pass;
        s.stage = stage;
        s.micro_ops = r.tag.micro_count;
        s.first_start = r.start;
        s.isolated =
            net::isolated_duration(step.collectives.at(r.tag.group), cluster);
      }
      s.first_start = std::min(s.first_start, r.start);
      s.last_end = std::max(s.last_end, r.end);
      s.duration += r.end - r.start;
      micro_sum[static_cast<int>(pass)] += r.end - r.start;
      ++micro_n[static_cast<int>(pass)];
      Span& w = a2a_window[key];
      w.start = std::min(w.start, r.start);
      w.end = std::max(w.end, r.end);
    }
    if (stage == Stage::kAllReduce) {
      AllReduceStat& s = ar[r.tag.group];
      if (s.group == 0) {
        s.group = r.tag.group;
        s.layer = r.tag.layer;
        s.bytes = step.collectives.at(r.tag.group).tensor_bytes;
        s.first_start = r.start;
      }
      s.first_start = std::min(s.first_start, r.start);
      s.end = std::max(s.end, r.end);
    }
  }

  for (auto& [g, s] : a2a) m.all_to_all.push_back(s);
  std::sort(m.all_to_all.begin(), m.all_to_all.end(),
            [](const AllToAllStat& a, const AllToAllStat& b) {
              return std::tie(a.first_start, a.group) <
                     std::tie(b.first_start, b.group);
            });
  for (auto& [g, s] : ar) m.all_reduce.push_back(s);
  for (const auto& s : m.all_to_all) {
    report.all_to_all_times.push_back(s.duration);
  }

  std::map<std::int32_t, LayerTime> layers;
  for (const auto& [key, span] : layer_span) {
    if (key.first < 0 || span.end < span.start) continue;
    LayerTime& lt = layers[key.first];
    lt.layer = key.first;
    (key.second == Pass::kForward ? lt.forward : lt.backward) =
        span.end - span.start;
  }
  for (const auto& [l, lt] : layers) report.moe_layer_times.push_back(lt);

  double eff = 0;
  std::size_t eff_n = 0;
  for (const auto& [key, w] : a2a_window) {
    if (w.end > w.start && !report.compute_intervals.empty()) {
      eff += busy_fraction(report, 0, w.start, w.end);
      ++eff_n;
    }
  }
  report.pipelining_efficiency = eff_n ? eff / static_cast<double>(eff_n) : 0;

  const int src = micro_n[0] > 0 ? 0 : 1;
  m.a2a_micro_time =
      micro_n[src] ? micro_sum[src] / static_cast<double>(micro_n[src]) : 0;
  m.ffn_micro_time = ffn_n ? ffn_sum / static_cast<double>(ffn_n) : 0;
  if (micro_n[0] > 0) {
    // Restrict the FFN mean to the forward pass as well.
    double f = 0;
    std::size_t n = 0;
    for (const OpRecord& r : report.records) {
      if (r.device == 0 && role_stage(r.tag.role) == Stage::kFfn &&
          role_pass(r.tag.role) == Pass::kForward &&
          r.kind == RecordKind::kCompute) {
        f += r.end - r.start;
        ++n;
      }
    }
    if (n) m.ffn_micro_time = f / static_cast<double>(n);
  }
  m.report = std::move(report);
  return m;
}

StepMetrics simulate_step(const StepWorkload& step,
                          const SchedulerPolicy& policy,
                          const ClusterSpec& cluster, bool include_forward) {
  MaterializedStep mat = materialize(step, policy, include_forward);
  auto dispatcher = make_dispatcher(policy, mat.workload);
  SimReport report = sim::run(mat.workload, cluster, *dispatcher);
  return analyze(std::move(report), mat, cluster);
}

}  // namespace linasim::train
