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

#include <cmath>

#include <gtest/gtest.h>

#include "linasim/errors.hpp"
#include "linasim/netmodel.hpp"

namespace linasim::net {
namespace {

ClusterSpec TwoNodes() {
  ClusterSpec c;
  c.num_devices = 4;
  c.devices_per_node = 2;
  c.inter_node_bw = 10e9;
  c.intra_node_bw = 100e9;
  c.launch_latency = 0;
  return c;
}

TEST(OpDemandTest, CrossNodeTrafficUsesNics) {
  const auto d = op_demand(Payload::PointToPoint(0, 2, 1000), TwoNodes());
  EXPECT_DOUBLE_EQ(d.on(nic_resource(0)), 1000);
  EXPECT_DOUBLE_EQ(d.on(nic_resource(2)), 1000);
  EXPECT_FALSE(d.uses(port_resource(0)));
}

TEST(OpDemandTest, IntraNodeTrafficUsesPorts) {
  const auto d = op_demand(Payload::PointToPoint(0, 1, 1000), TwoNodes());
  EXPECT_DOUBLE_EQ(d.on(port_resource(0)), 1000);
  EXPECT_FALSE(d.uses(nic_resource(0)));
}

TEST(OpDemandTest, FullDuplexTakesMaxOfDirections) {
  const auto d = op_demand(Payload::AllToAll({{0, 2, 300}, {2, 0, 500}}), TwoNodes());
  EXPECT_DOUBLE_EQ(d.on(nic_resource(0)), 500);
  EXPECT_DOUBLE_EQ(d.on(nic_resource(2)), 500);
}

TEST(OpDemandTest, SelfTrafficIsLocal) {
  const auto p = Payload::AllToAll({{1, 1, 1000}});
  EXPECT_TRUE(op_demand(p, TwoNodes()).empty());
  EXPECT_EQ(isolated_duration(p, TwoNodes()), 0);
}

TEST(OpDemandTest, RingAllReduceCharge) {
  const auto d = op_demand(Payload::AllReduce(1000, {0, 1, 2, 3}), TwoNodes());
  // 2 (N - 1) / N of the tensor on every participant.
  EXPECT_DOUBLE_EQ(d.peak(), 1500);
}

TEST(OpDemandTest, UnknownDeviceThrows) {
  EXPECT_THROW(op_demand(Payload::PointToPoint(0, 4, 1), TwoNodes()), UnknownDevice);
}

TEST(IsolatedDurationTest, AddsLaunchLatency) {
  auto c = TwoNodes();
  c.launch_latency = 1e-3;
  EXPECT_DOUBLE_EQ(isolated_duration(Payload::PointToPoint(0, 2, 10'000'000), c),
                   1e-3 + 1e-3);
}

TEST(FairShareTest, EqualFlowsSplitBottleneck) {
  const auto c = TwoNodes();
  ActiveFlowSet flows;
  flows.add(1, op_demand(Payload::PointToPoint(0, 2, 1000), c));
  flows.add(2, op_demand(Payload::PointToPoint(0, 3, 1000), c));
  const auto rates = fair_share_rates(flows, c);
  EXPECT_DOUBLE_EQ(rates.at(1), 5e9);
  EXPECT_DOUBLE_EQ(rates.at(2), 5e9);
}

TEST(FairShareTest, UnconstrainedFlowTakesLeftover) {
  auto c = TwoNodes();
  c.num_devices = 6;
  ActiveFlowSet flows;
  // Three flows leave NIC 0; flow 4 shares only NIC 2 with flow 1.
  flows.add(1, op_demand(Payload::PointToPoint(0, 2, 1000), c));
  flows.add(2, op_demand(Payload::PointToPoint(0, 4, 1000), c));
  flows.add(3, op_demand(Payload::PointToPoint(0, 5, 1000), c));
  flows.add(4, op_demand(Payload::PointToPoint(1, 2, 1000), c));
  const auto rates = fair_share_rates(flows, c);
  EXPECT_DOUBLE_EQ(rates.at(1), 10e9 / 3);
  EXPECT_DOUBLE_EQ(rates.at(3), 10e9 / 3);
  EXPECT_NEAR(rates.at(4), 10e9 * 2 / 3, 1);
}

TEST(FairShareTest, NoResourceOversubscribed) {
  auto c = TwoNodes();
  c.num_devices = 8;
  c.devices_per_node = 4;
  ActiveFlowSet flows;
  OpId id = 1;
  for (DeviceId s = 0; s < 8; ++s) {
    flows.add(id++, op_demand(Payload::PointToPoint(s, (s * 3 + 1) % 8, 1000 + 100 * s), c));
  }
  flows.add(id++, op_demand(Payload::AllReduce(5000, {0, 1, 2, 3, 4, 5, 6, 7}), c));
  const auto rates = fair_share_rates(flows, c);
  std::map<ResourceId, double> used;
  for (const auto& [op, flow] : flows.flows()) {
    for (const auto& [r, bytes] : flow.demand.per_resource) {
      used[r] += rates.at(op) * bytes / flow.peak;
    }
  }
  for (const auto& [r, u] : used) {
    EXPECT_LE(u, resource_capacity(r, c) * (1 + 1e-12)) << resource_name(r);
  }
}

TEST(ActiveFlowSetTest, AdvanceCompletesAndRejectsOvershoot) {
  const auto c = TwoNodes();
  ActiveFlowSet flows;
  flows.add(1, op_demand(Payload::PointToPoint(0, 2, 1000), c));
  flows.add(2, op_demand(Payload::PointToPoint(1, 3, 3000), c));
  const auto rates = fair_share_rates(flows, c);
  const double dt = time_to_next_completion(flows, rates);
  EXPECT_DOUBLE_EQ(dt, 1000 / 10e9);
  EXPECT_EQ(flows.advance(rates, dt), std::vector<OpId>{1});
  EXPECT_NEAR(flows.remaining(2, nic_resource(1)), 2000, 1e-6);
  EXPECT_THROW(flows.advance(fair_share_rates(flows, c), 1.0), NegativeRemainder);
}

TEST(ActiveFlowSetTest, EmptyHasInfiniteNextCompletion) {
  ActiveFlowSet flows;
  EXPECT_TRUE(std::isinf(time_to_next_completion(flows, {})));
}

}  // namespace
}  // namespace linasim::net
