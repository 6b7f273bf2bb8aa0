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

#ifndef LINASIM_NETMODEL_HPP_
#define LINASIM_NETMODEL_HPP_

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "linasim/types.hpp"

namespace linasim::net {

// Every device owns two resources: its inter-node NIC and its intra-node
// fabric port. Both are full duplex, so a device's demand on a resource is
// max(bytes out, bytes in).
using ResourceId = std::int32_t;

inline ResourceId nic_resource(DeviceId d) { return 2 * d; }
inline ResourceId port_resource(DeviceId d) { return 2 * d + 1; }
inline DeviceId resource_device(ResourceId r) { return r / 2; }
inline bool is_nic(ResourceId r) { return r % 2 == 0; }

double resource_capacity(ResourceId r, const ClusterSpec& cluster);
std::string resource_name(ResourceId r);

struct Demand {
  // Strictly positive byte demands, sorted by resource.
  std::vector<std::pair<ResourceId, double>> per_resource;

  bool empty() const { return per_resource.empty(); }
  double on(ResourceId r) const;
  double peak() const;
  bool uses(ResourceId r) const { return on(r) > 0; }
};

// Throws UnknownDevice if any endpoint lies outside the cluster.
Demand op_demand(const Payload& payload, const ClusterSpec& cluster);

// Time to move the demand alone on an idle network, without launch latency.
Seconds transfer_time(const Demand& demand, const ClusterSpec& cluster);

// Launch latency plus transfer time. Zero-demand payloads are local copies
// and take no time at all.
Seconds isolated_duration(const Payload& payload, const ClusterSpec& cluster);

// Rate of an op is measured in bytes per second on its largest-demand
// resource; the op drains every other resource proportionally.
using RateMap = std::map<OpId, double>;

class ActiveFlowSet {
 public:
  struct Flow {
    Demand demand;
    double peak = 0;       // demand.peak()
    double remaining = 0;  // bytes left on the peak resource
  };

  // Zero-demand flows are rejected; callers complete those immediately.
  void add(OpId id, Demand demand);
  bool contains(OpId id) const { return flows_.count(id) != 0; }
  bool empty() const { return flows_.empty(); }
  std::size_t size() const { return flows_.size(); }

  // Bytes still to move for `id` on resource r.
  double remaining(OpId id, ResourceId r) const;
  const std::map<OpId, Flow>& flows() const { return flows_; }

  // Drains every flow by rate * dt. Returns ops that finished, ascending.
  // Throws NegativeRemainder if dt overshoots a completion.
  std::vector<OpId> advance(const RateMap& rates, Seconds dt);

 private:
  std::map<OpId, Flow> flows_;
};

// Progressive-filling max-min allocation. Ties between equally contended
// resources are broken by resource id so rates are deterministic.
RateMap fair_share_rates(const ActiveFlowSet& flows, const ClusterSpec& cluster);

// Smallest time until some flow finishes under `rates`; infinity when empty.
Seconds time_to_next_completion(const ActiveFlowSet& flows,
                                const RateMap& rates);

}  // namespace linasim::net

#endif  // LINASIM_NETMODEL_HPP_
