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
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "linasim/errors.hpp"
#include "linasim/infersched.hpp"

namespace linasim::infer {
namespace {

using workload::TraceSet;
using workload::TokenRecord;

// Layer l+1 expert = (layer l expert + 1) mod E for every token.
TraceSet Cyclic(std::int32_t layers, std::int32_t experts, std::int32_t tokens) {
  TraceSet t;
  t.meta.layers = layers;
  t.meta.experts = experts;
  for (std::int32_t i = 0; i < tokens; ++i) {
    TokenRecord r;
    r.token = i;
    for (std::int32_t l = 0; l < layers; ++l) r.sel.push_back({(i + l) % experts});
    t.tokens.push_back(r);
  }
  return t;
}

TEST(ProfileTest, LearnsDeterministicTransitions) {
  const auto p = build_profile(Cyclic(4, 4, 40), 2);
  EXPECT_EQ(p.path_length(), 2);
  const auto* row = p.find(2, {0, 1});
  ASSERT_NE(row, nullptr);
  EXPECT_DOUBLE_EQ((*row)[2], 1.0);
  std::int32_t matched = -1;
  EXPECT_DOUBLE_EQ(p.lookup(3, {0, 1, 2}, &matched)[3], 1.0);
  EXPECT_EQ(matched, 2);
}

TEST(ProfileTest, UnseenPathBacksOff) {
  const auto p = build_profile(Cyclic(3, 4, 40), 2);
  std::int32_t matched = -1;
  // (3, 1) never occurs, but the suffix (1) does.
  EXPECT_DOUBLE_EQ(p.lookup(2, {3, 1}, &matched)[2], 1.0);
  EXPECT_EQ(matched, 1);
}

TEST(ProfileTest, TooShortTrace) {
  EXPECT_THROW(build_profile(Cyclic(2, 4, 4), 2), TraceTooShort);
}

TEST(ProfileTest, SaveLoadRoundTrip) {
  const auto p = build_profile(Cyclic(4, 3, 30), 2);
  std::stringstream ss;
  save_profile(p, ss);
  EXPECT_EQ(load_profile(ss), p);
}

TEST(EstimateTest, SumsTopKProbabilities) {
  const auto p = build_profile(Cyclic(3, 4, 40), 1);
  const std::vector<std::vector<ExpertId>> hist = {{0, 1}, {1, 2}, {2, 3}, {0, 1}};
  const auto est = estimate_popularity(p, hist, 1, 1);
  EXPECT_EQ(est.popularity, (std::vector<double>{0.25, 0, 0.5, 0.25}));
  EXPECT_EQ(est.token_top_k[0], std::vector<ExpertId>{2});
  EXPECT_THROW(estimate_popularity(build_profile(Cyclic(4, 4, 40), 3), hist, 1, 1),
               LayerTooEarly);
}

TEST(AllocateTest, InvariantsAcrossInputs) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 300; ++i) {
    const std::int32_t n = 1 + static_cast<std::int32_t>(rng() % 8);
    const std::int32_t e = 1 + static_cast<std::int32_t>(rng() % (2 * n));
    const std::int32_t packed = 1 + static_cast<std::int32_t>(rng() % 4);
    if (e > n * packed) continue;
    std::vector<double> pop(static_cast<std::size_t>(e));
    for (auto& v : pop) v = u(rng) < 0.2 ? 0 : u(rng);
    const auto plan = allocate(pop, n, 1, packed, i);
    EXPECT_NO_THROW(validate_plan(plan));
    EXPECT_LE(plan.devices_used(), n);
    for (std::int32_t r : plan.replicas) EXPECT_GE(r, 1);
  }
}

TEST(AllocateTest, DeterministicForSeed) {
  const std::vector<double> pop = {0.4, 0, 0.3, 0, 0.2, 0.1};
  EXPECT_EQ(allocate(pop, 4, 1, 4, 9), allocate(pop, 4, 1, 4, 9));
}

TEST(AllocateTest, Errors) {
  EXPECT_THROW(allocate({1, 1, 1}, 1, 1, 2), InfeasiblePlan);
  EXPECT_THROW(allocate({1, -1}, 2, 1, 2), InvalidSpec);
  EXPECT_THROW(allocate({1, 1}, 0, 1, 2), InvalidSpec);
}

TEST(AllocateTest, HotExpertSpreadsAcrossDevices) {
  const auto plan = allocate({0.7, 0.1, 0.1, 0.1}, 4, 1, 4);
  // Four replicas of 0.7 leave the heaviest device at 0.7 + 0.4; three
  // would leave one device holding all three 0.4s.
  EXPECT_EQ(plan.replicas, (std::vector<std::int32_t>{4, 1, 1, 1}));
  EXPECT_EQ(plan.hosts[0], (std::vector<DeviceId>{0, 1, 2, 3}));
  EXPECT_NEAR(plan.capacity, 1.1, 1e-6);
}

TEST(IdentityPlanTest, ModuloPlacement) {
  const auto plan = identity_plan(4, 8, 2);
  EXPECT_EQ(plan.hosts[5], std::vector<DeviceId>{1});
  EXPECT_EQ(plan.hosted[1], (std::vector<ExpertId>{1, 5}));
  EXPECT_NO_THROW(validate_plan(plan));
}

TEST(ValidatePlanTest, RejectsDuplicateReplicaOnDevice) {
  auto plan = identity_plan(2, 2, 2);
  plan.hosted[0].push_back(0);
  plan.hosts[0].push_back(0);
  plan.replicas[0] = 2;
  EXPECT_THROW(validate_plan(plan), InvalidSpec);
}

TEST(FirstFitTest, RespectsCapacitySlotsAndOwners) {
  const std::vector<PackItem> items = {{0, 0.6}, {0, 0.6}, {1, 0.4}, {2, 0.3}, {3, 0.1}};
  const auto bins = first_fit_decreasing(items, 1.0, 2);
  ASSERT_EQ(bins.size(), 3u);
  EXPECT_EQ(bins[0], (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(bins[1], (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(bins[2], (std::vector<std::size_t>{4}));
  EXPECT_EQ(min_devices_bruteforce(items, 1.0, 2, 5), 3);
}

TEST(FirstFitTest, HeuristicGapWithTwoSlots) {
  // First-fit-decreasing opens one device more than needed here: it pairs
  // the 0.75s with the 0.5625s first and strands the small replicas.
  const std::vector<PackItem> items = {{2, 0.75},   {3, 0.75},   {3, 0.75},   {4, 0.75},
                                       {1, 0.5625}, {1, 0.5625}, {1, 0.5625}, {1, 0.5625},
                                       {0, 0.375},  {0, 0.375}};
  double cap = 1.3125;
  EXPECT_EQ(first_fit_decreasing(items, cap, 2).size(), 6u);
  EXPECT_EQ(min_devices_bruteforce(items, cap, 2, 6), 5);
}

TEST(BruteForceTest, ReportsInfeasibility) {
  EXPECT_EQ(min_devices_bruteforce({{0, 1.0}, {0, 1.0}}, 2.0, 4, 1), 2);
  EXPECT_THROW(min_devices_bruteforce({{0, -1.0}}, 1.0, 1, 1), std::invalid_argument);
}

TEST(RoutingTest, SplitTokensRoundRobin) {
  auto plan = allocate({0.5, 0.25, 0.25}, 4, 1, 4);
  const auto split = split_tokens(plan, {7, 3, 2});
  EXPECT_EQ(split[0], (std::vector<std::int64_t>{4, 3}));
  EXPECT_EQ(split[1], std::vector<std::int64_t>{3});
}

TEST(RoutingTest, RouteUsesHosts) {
  const auto plan = identity_plan(2, 4, 2);
  BatchAssignment b;
  b.num_tokens = 2;
  b.origin_device = {0, 1};
  b.selection = {{3}, {2}};
  const auto r = route(plan, b);
  EXPECT_EQ(r[0], std::vector<DeviceId>{1});
  EXPECT_EQ(r[1], std::vector<DeviceId>{0});
  EXPECT_EQ(selection_counts(b, 4), (std::vector<std::int64_t>{0, 0, 1, 1}));
  EXPECT_EQ(actual_popularity(b, 4), (std::vector<double>{0, 0, 0.5, 0.5}));
}

TEST(TopTest, TiesByAscendingId) {
  EXPECT_EQ(top_2k({0.1, 0.3, 0.3, 0.2, 0.3}, 1), (std::vector<ExpertId>{1, 2}));
  EXPECT_EQ(top_2k({0.4, 0.1, 0.2, 0.3}, 2), (std::vector<ExpertId>{0, 1, 2, 3}));
}

TEST(TwoPhaseTest, MatchKeepsPlanMismatchReallocates) {
  CostModel cost;
  BatchAssignment b;
  b.num_tokens = 4;
  b.origin_device = {0, 0, 1, 1};
  b.selection = {{0}, {0}, {1}, {2}};
  const auto good = allocate({2, 1, 1, 0}, 2, 1, 4);
  const auto kept = two_phase_step(good, b, 1, cost);
  EXPECT_TRUE(kept.matched);
  EXPECT_EQ(kept.plan_used, good);
  EXPECT_DOUBLE_EQ(kept.overhead_charged, cost.resume_signal_cost);
  const auto bad = allocate({0, 0, 1, 2}, 2, 1, 4);
  const auto redone = two_phase_step(bad, b, 1, cost);
  EXPECT_FALSE(redone.matched);
  EXPECT_EQ(redone.actual_top, (std::vector<ExpertId>{0, 1}));
  EXPECT_EQ(redone.plan_used.replicas[0], allocate({2, 1, 1, 0}, 2, 1, 4).replicas[0]);
  EXPECT_DOUBLE_EQ(redone.overhead_charged, cost.sched_phase_cost);
}

TEST(AccuracyTest, Fractions) {
  const auto a = accuracy({true, false, true, true});
  EXPECT_DOUBLE_EQ(a.estimation_accuracy, 0.75);
  EXPECT_DOUBLE_EQ(a.finetune_rate, 0.25);
  EXPECT_DOUBLE_EQ(accuracy({}).estimation_accuracy, 0);
}

TEST(InferenceTest, ModesAndErrors) {
  ClusterSpec c;
  c.num_devices = 4;
  c.devices_per_node = 2;
  ModelSpec m;
  m.num_layers = 4;
  m.experts_per_layer = 4;
  m.token_embedding_bytes = 4096;
  CostModel cost;
  cost.ffn_cost_per_token = 1e-5;
  cost.attention_cost_per_token = 1e-5;
  const auto trace = Cyclic(4, 4, 64);
  InferenceOptions o;
  EXPECT_THROW(simulate_inference(m, c, cost, trace, nullptr, o), ProfileMissing);
  const auto profile = build_profile(trace, 1);
  const auto lina = simulate_inference(m, c, cost, trace, &profile, o);
  EXPECT_DOUBLE_EQ(lina.estimation_accuracy, 1.0);
  EXPECT_EQ(lina.scheduled_layers, 3);
  EXPECT_TRUE(std::isnan(lina.layer_accuracy[0]));
  o.mode = InferenceMode::kBaseline;
  const auto base = simulate_inference(m, c, cost, trace, nullptr, o);
  EXPECT_EQ(base.scheduled_layers, 0);
  EXPECT_EQ(base.inference_times.size(), 1u);
  for (auto mode : {InferenceMode::kBaseline, InferenceMode::kIdeal, InferenceMode::kLina,
                    InferenceMode::kLinaNoEstimation, InferenceMode::kLinaNoFinetune}) {
    EXPECT_EQ(parse_inference_mode(to_string(mode)), mode);
  }
}

}  // namespace
}  // namespace linasim::infer
