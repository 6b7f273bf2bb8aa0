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

#include "linasim/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "linasim/errors.hpp"

namespace linasim::net {
namespace {

// Relative slack used to snap nearly drained flows to exactly zero.
constexpr double kSnap = 1e-9;
constexpr double kOvershoot = 1e-6;
// Flows that would finish within this much simulated time count as done.
constexpr double kTimeSnap = 1e-12;

void CheckDevice(DeviceId d, const ClusterSpec& cluster) {
  if (d < 0 || d >= cluster.num_devices) {
    throw UnknownDevice(d, cluster.num_devices);
  }
}

}  // namespace

double resource_capacity(ResourceId r, const ClusterSpec& cluster) {
  return is_nic(r) ? cluster.inter_node_bw : cluster.intra_node_bw;
}

std::string resource_name(ResourceId r) {
  return (is_nic(r) ? "nic" : "port") + std::to_string(resource_device(r));
}

double Demand::on(ResourceId r) const {
  auto it = std::lower_bound(
      per_resource.begin(), per_resource.end(), r,
      [](const auto& entry, ResourceId key) { return entry.first < key; });
  return (it != per_resource.end() && it->first == r) ? it->second : 0.0;
}

double Demand::peak() const {
  double best = 0;
  for (const auto& [r, b] : per_resource) best = std::max(best, b);
  return best;
}

Demand op_demand(const Payload& payload, const ClusterSpec& cluster) {
  std::map<ResourceId, double> out;
  std::map<ResourceId, double> in;

  if (payload.kind == CollectiveKind::kAllReduce) {
    std::set<DeviceId> members(payload.participants.begin(),
                               payload.participants.end());
    for (DeviceId d : members) CheckDevice(d, cluster);
    const double n = static_cast<double>(members.size());
    if (members.size() > 1 && payload.tensor_bytes > 0) {
      const double s = static_cast<double>(payload.tensor_bytes);
      const double per_device =
          cluster.allreduce_algorithm == AllReduceAlgorithm::kRing
              ? 2.0 * (n - 1.0) / n * s
              : 2.0 * s;
      const bool one_node = cluster.same_node(*members.begin(),
                                              *members.rbegin());
      for (DeviceId d : members) {
        const ResourceId r = one_node ? port_resource(d) : nic_resource(d);
        out[r] += per_device;
        in[r] += per_device;
      }
    }
  } else {
    for (const auto& pr : payload.pairs) {
      CheckDevice(pr.src, cluster);
      CheckDevice(pr.dst, cluster);
      if (pr.src == pr.dst || pr.bytes == 0) continue;
      const bool local = cluster.same_node(pr.src, pr.dst);
      const double b = static_cast<double>(pr.bytes);
      out[local ? port_resource(pr.src) : nic_resource(pr.src)] += b;
      in[local ? port_resource(pr.dst) : nic_resource(pr.dst)] += b;
    }
  }

  std::map<ResourceId, double> merged = out;
  for (const auto& [r, b] : in) merged[r] = std::max(merged[r], b);
  Demand demand;
  for (const auto& [r, b] : merged) {
    if (b > 0) demand.per_resource.emplace_back(r, b);
  }
  return demand;
}

Seconds transfer_time(const Demand& demand, const ClusterSpec& cluster) {
  Seconds t = 0;
  for (const auto& [r, b] : demand.per_resource) {
    t = std::max(t, b / resource_capacity(r, cluster));
  }
  return t;
}

Seconds isolated_duration(const Payload& payload, const ClusterSpec& cluster) {
  const Demand d = op_demand(payload, cluster);
  if (d.empty()) return 0;
  return cluster.launch_latency + transfer_time(d, cluster);
}

void ActiveFlowSet::add(OpId id, Demand demand) {
  if (demand.empty()) {
    throw std::invalid_argument("ActiveFlowSet::add: zero-demand flow");
  }
  Flow f;
  f.peak = demand.peak();
  f.remaining = f.peak;
  f.demand = std::move(demand);
  flows_[id] = std::move(f);
}

double ActiveFlowSet::remaining(OpId id, ResourceId r) const {
  const Flow& f = flows_.at(id);
  return f.remaining * (f.demand.on(r) / f.peak);
}

std::vector<OpId> ActiveFlowSet::advance(const RateMap& rates, Seconds dt) {
  std::vector<OpId> done;
  for (auto& [id, f] : flows_) {
    auto it = rates.find(id);
    const double rate = it == rates.end() ? 0.0 : it->second;
    const double left = f.remaining - rate * dt;
    if (left < -std::max(kOvershoot * f.peak, rate * 1e-9)) {
      throw NegativeRemainder("flow " + std::to_string(id) +
                              " overshot by " + std::to_string(-left) +
                              " bytes");
    }
    if (left <= std::max(kSnap * f.peak, rate * kTimeSnap)) {
      f.remaining = 0;
      done.push_back(id);
    } else {
      f.remaining = left;
    }
  }
  for (OpId id : done) flows_.erase(id);
  return done;
}

RateMap fair_share_rates(const ActiveFlowSet& flows,
                         const ClusterSpec& cluster) {
  RateMap rates;
  std::map<ResourceId, double> used;
  std::set<OpId> unfrozen;
  for (const auto& [id, f] : flows.flows()) unfrozen.insert(id);

  while (!unfrozen.empty()) {
    // Weighted count of unfrozen ops per resource.
    std::map<ResourceId, double> weight;
    for (OpId id : unfrozen) {
      const auto& f = flows.flows().at(id);
      for (const auto& [r, b] : f.demand.per_resource) weight[r] += b / f.peak;
    }
    ResourceId tight = -1;
    double level = std::numeric_limits<double>::infinity();
    for (const auto& [r, w] : weight) {
      const double l = (resource_capacity(r, cluster) - used[r]) / w;
      if (l < level) {
        level = l;
        tight = r;
      }
    }
    level = std::max(level, 0.0);
    std::vector<OpId> freeze;
    for (OpId id : unfrozen) {
      if (flows.flows().at(id).demand.uses(tight)) freeze.push_back(id);
    }
    for (OpId id : freeze) {
      const auto& f = flows.flows().at(id);
      rates[id] = level;
      for (const auto& [r, b] : f.demand.per_resource) {
        used[r] += level * b / f.peak;
      }
      unfrozen.erase(id);
    }
  }
  return rates;
}

Seconds time_to_next_completion(const ActiveFlowSet& flows,
                                const RateMap& rates) {
  Seconds best = std::numeric_limits<Seconds>::infinity();
  for (const auto& [id, f] : flows.flows()) {
    auto it = rates.find(id);
    if (it == rates.end() || it->second <= 0) continue;
    best = std::min(best, f.remaining / it->second);
  }
  return best;
}

}  // namespace linasim::net
