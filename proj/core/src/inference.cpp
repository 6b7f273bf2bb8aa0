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
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

#include "linasim/errors.hpp"
#include "linasim/infersched.hpp"

namespace linasim::infer {
namespace {

std::uint64_t SplitMix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::vector<PairBytes> ToPairs(const std::map<std::pair<DeviceId, DeviceId>, Bytes>& m,
                               bool reverse) {
  std::vector<PairBytes> out;
  out.reserve(m.size());
  for (const auto& [k, b] : m) {
    out.push_back(reverse ? PairBytes{k.second, k.first, b}
                          : PairBytes{k.first, k.second, b});
  }
  std::sort(out.begin(), out.end(), [](const PairBytes& a, const PairBytes& b) {
    return std::tie(a.src, a.dst) < std::tie(b.src, b.dst);
  });
  return out;
}

}  // namespace

std::string_view to_string(InferenceMode mode) {
  switch (mode) {
    case InferenceMode::kBaseline: return "baseline";
    case InferenceMode::kIdeal: return "ideal";
    case InferenceMode::kLina: return "lina";
    case InferenceMode::kLinaNoEstimation: return "lina_no_estimation";
    case InferenceMode::kLinaNoFinetune: return "lina_no_finetune";
  }
  return "unknown";
}

InferenceMode parse_inference_mode(std::string_view name) {
  for (auto m : {InferenceMode::kBaseline, InferenceMode::kIdeal,
                 InferenceMode::kLina, InferenceMode::kLinaNoEstimation,
                 InferenceMode::kLinaNoFinetune}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown inference mode '" + std::string(name) +
                              "'");
}

sim::Workload build_inference_step(const ModelSpec& model,
                                   const ClusterSpec& cluster,
                                   const CostModel& cost,
                                   const std::vector<LayerSchedule>& layers) {
  const std::int32_t n_dev = cluster.num_devices;
  const std::int32_t experts = model.experts_per_layer;
  sim::Workload w;
  OpId next_id = 0;
  // Last task on each device's stream.
  std::vector<std::vector<OpId>> tail(static_cast<std::size_t>(n_dev));
  // Compute since the previous gate that can hide phase-one estimation.
  std::vector<Seconds> carry(static_cast<std::size_t>(n_dev), 0.0);

  auto add_compute = [&](DeviceId d, Seconds dur, const char* label,
                         std::int32_t layer, std::vector<OpId> deps) {
    sim::ComputeTask t;
    t.id = next_id++;
    t.device = d;
    t.duration = dur;
    t.deps = std::move(deps);
    t.tag.label = label;
    t.tag.layer = layer;
    w.compute.push_back(std::move(t));
    tail[d] = {w.compute.back().id};
    return w.compute.back().id;
  };

  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto layer = static_cast<std::int32_t>(li);
    const auto& ls = layers[li];
    if (!ls.plan) {
      throw PlanMissing("no placement for layer " + std::to_string(layer));
    }
    const auto& plan = *ls.plan;
    if (plan.num_devices != n_dev || plan.num_experts != experts) {
      throw InvalidSpec({"plan for layer " + std::to_string(layer) +
                         " does not match the cluster or model"});
    }
    const auto& batch = ls.routing;
    validate_batch(batch, n_dev, experts);
    const auto dest = route(plan, batch);

    std::vector<std::int64_t> origin_tokens(static_cast<std::size_t>(n_dev), 0);
    std::vector<std::int64_t> routed(static_cast<std::size_t>(n_dev), 0);
    std::vector<std::int64_t> selections(static_cast<std::size_t>(n_dev), 0);
    std::map<std::pair<DeviceId, DeviceId>, Bytes> traffic;
    for (std::size_t t = 0; t < batch.selection.size(); ++t) {
      const DeviceId o = batch.origin_device[t];
      ++origin_tokens[o];
      selections[o] += static_cast<std::int64_t>(dest[t].size());
      for (DeviceId d : dest[t]) {
        ++routed[d];
        if (d != o) traffic[{o, d}] += model.token_embedding_bytes;
      }
    }

    std::vector<OpId> ready;
    for (DeviceId d = 0; d < n_dev; ++d) {
      const auto tok = static_cast<double>(origin_tokens[d]);
      const Seconds attn = tok * cost.attention_cost_per_token;
      const Seconds gate = tok * cost.gate_cost_per_token;
      add_compute(d, attn, "attention", layer, tail[d]);
      add_compute(d, gate, "gate", layer, tail[d]);
      if (ls.blocking > 0) add_compute(d, ls.blocking, "phase_two", layer, tail[d]);
      const Seconds residual =
          std::max(0.0, ls.phase_one - (carry[d] + attn + gate));
      if (residual > 0) add_compute(d, residual, "phase_one", layer, tail[d]);
      ready.push_back(tail[d].front());
    }

    sim::CommTask a2a1;
    a2a1.id = next_id++;
    a2a1.payload = Payload::AllToAll(ToPairs(traffic, false));
    a2a1.priority = Priority::kHigh;
    a2a1.deps = ready;
    a2a1.tag.label = "a2a1";
    a2a1.tag.layer = layer;
    a2a1.tag.group = a2a1.id;
    const OpId a2a1_id = a2a1.id;
    w.comm.push_back(std::move(a2a1));

    std::vector<OpId> experts_done;
    std::vector<Seconds> expert_time(static_cast<std::size_t>(n_dev), 0.0);
    for (DeviceId d = 0; d < n_dev; ++d) {
      Seconds swaps = 0;
      for (ExpertId e : plan.hosted[d]) {
        if (e % n_dev != d) swaps += cost.expert_swap_cost;
      }
      expert_time[d] =
          static_cast<double>(routed[d]) * cost.ffn_cost_per_token + swaps;
      experts_done.push_back(
          add_compute(d, expert_time[d], "expert", layer, {a2a1_id}));
    }

    sim::CommTask a2a2;
    a2a2.id = next_id++;
    a2a2.payload = Payload::AllToAll(ToPairs(traffic, true));
    a2a2.priority = Priority::kHigh;
    a2a2.deps = experts_done;
    a2a2.tag.label = "a2a2";
    a2a2.tag.layer = layer;
    a2a2.tag.group = a2a2.id;
    const OpId a2a2_id = a2a2.id;
    w.comm.push_back(std::move(a2a2));

    for (DeviceId d = 0; d < n_dev; ++d) {
      const Seconds comb =
          static_cast<double>(selections[d]) * cost.combine_cost_per_token;
      add_compute(d, comb, "combine", layer, {a2a2_id});
      carry[d] = expert_time[d] + comb;
    }
  }
  return w;
}

InferenceRun simulate_inference(const ModelSpec& model,
                                const ClusterSpec& cluster,
                                const CostModel& cost,
                                const workload::TraceSet& trace,
                                const PopularityProfile* profile,
                                const InferenceOptions& options) {
  const auto& meta = trace.meta;
  if (meta.experts != model.experts_per_layer) {
    throw InvalidSpec({"trace has " + std::to_string(meta.experts) +
                       " experts, model has " +
                       std::to_string(model.experts_per_layer)});
  }
  if (meta.layers < model.num_layers) {
    throw InvalidSpec({"trace has fewer layers than the model"});
  }
  const auto mode = options.mode;
  const bool estimates = mode == InferenceMode::kLina ||
                         mode == InferenceMode::kLinaNoFinetune;
  if (estimates && profile == nullptr) {
    throw ProfileMissing(std::string(to_string(mode)) +
                         " needs a popularity profile");
  }
  if (profile && (profile->experts() != meta.experts ||
                  profile->layers() < model.num_layers)) {
    throw SchemaMismatch("profile does not match the trace");
  }
  const std::int32_t n_dev = cluster.num_devices;
  const std::int32_t layers = model.num_layers;
  const std::int32_t experts = model.experts_per_layer;
  const std::int32_t k = meta.top_k;
  const std::int32_t first =
      std::max(1, profile ? profile->path_length() : options.path_length);
  const bool scheduled_mode = mode == InferenceMode::kLina ||
                              mode == InferenceMode::kLinaNoFinetune ||
                              mode == InferenceMode::kLinaNoEstimation;
  const auto identity = identity_plan(n_dev, experts, options.max_packed);

  InferenceRun run;
  std::vector<std::int64_t> layer_checks(static_cast<std::size_t>(layers), 0);
  std::vector<std::int64_t> layer_hits(static_cast<std::size_t>(layers), 0);
  std::vector<Seconds> a2a_sum(static_cast<std::size_t>(layers), 0.0);
  std::vector<bool> matched_all;

  const auto batches = trace.batches();
  for (std::int64_t b : batches) {
    const auto idx = trace.batch_tokens(b);
    std::vector<LayerSchedule> sched(static_cast<std::size_t>(layers));
    std::vector<std::vector<ExpertId>> history(idx.size());
    for (std::int32_t n = 0; n < layers; ++n) {
      auto& ls = sched[n];
      ls.routing.num_tokens = idx.size();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        ls.routing.origin_device.push_back(static_cast<DeviceId>(
            (i * static_cast<std::size_t>(n_dev)) / idx.size()));
        if (mode == InferenceMode::kIdeal) {
          std::vector<ExpertId> sel;
          for (std::int32_t r = 0; r < k; ++r) {
            sel.push_back(static_cast<ExpertId>(
                (i * static_cast<std::size_t>(k) + r) % experts));
          }
          ls.routing.selection.push_back(std::move(sel));
        } else {
          ls.routing.selection.push_back(trace.tokens[idx[i]].sel.at(n));
        }
      }

      const std::uint64_t seed = SplitMix(
          options.seed ^ SplitMix(static_cast<std::uint64_t>(b) * 1315423911ull +
                                  static_cast<std::uint64_t>(n)));
      if (!scheduled_mode || n < first) {
        ls.plan = identity;
      } else if (mode == InferenceMode::kLinaNoEstimation) {
        ls.plan = allocate(actual_popularity(ls.routing, experts), n_dev, k,
                           options.max_packed, seed);
        ls.blocking = cost.sched_phase_cost;
      } else {
        const auto est = estimate_popularity(*profile, history, n - 1, k);
        auto plan = allocate(est.popularity, n_dev, k, options.max_packed, seed);
        ls.phase_one = cost.sched_phase_cost;
        bool matched;
        if (mode == InferenceMode::kLina) {
          auto outcome = two_phase_step(plan, ls.routing, k, cost, seed + 1);
          matched = outcome.matched;
          ls.blocking = outcome.overhead_charged;
          ls.plan = std::move(outcome.plan_used);
        } else {
          matched = top_2k(plan.popularity, k) ==
                    top_2k(actual_popularity(ls.routing, experts), k);
          ls.plan = std::move(plan);
        }
        ++layer_checks[n];
        if (matched) ++layer_hits[n];
        matched_all.push_back(matched);
      }
      for (std::size_t i = 0; i < idx.size(); ++i) {
        history[i].push_back(trace.tokens[idx[i]].sel.at(n).at(0));
      }
    }

    const auto w = build_inference_step(model, cluster, cost, sched);
    sim::DispatchAll policy;
    auto report = sim::run(w, cluster, policy);
    run.inference_times.push_back(report.step_time);
    for (const auto& r : report.records) {
      if (r.kind == RecordKind::kAllToAll && r.tag.layer >= 0) {
        a2a_sum[r.tag.layer] += r.end - r.start;
      }
    }
    run.last_report = std::move(report);
  }

  const auto acc = accuracy(matched_all);
  run.estimation_accuracy = acc.estimation_accuracy;
  run.finetune_rate = acc.finetune_rate;
  run.scheduled_layers = static_cast<std::int64_t>(matched_all.size());
  const double nb = batches.empty() ? 1.0 : static_cast<double>(batches.size());
  for (std::int32_t n = 0; n < layers; ++n) {
    run.layer_accuracy.push_back(
        layer_checks[n] == 0
            ? std::numeric_limits<double>::quiet_NaN()
            : static_cast<double>(layer_hits[n]) / layer_checks[n]);
    run.layer_all_to_all.push_back(a2a_sum[n] / nb);
  }
  run.last_report.inference_times = run.inference_times;
  run.last_report.estimation_accuracy = run.estimation_accuracy;
  run.last_report.finetune_rate = run.finetune_rate;
  return run;
}

}  // namespace linasim::infer
