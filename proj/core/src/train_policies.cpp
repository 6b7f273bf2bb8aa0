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
#include <set>
#include <stdexcept>
#include <string>

#include "linasim/errors.hpp"
#include "linasim/trainsched.hpp"

namespace linasim::train {

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kBaseline:
      return "baseline";
    case PolicyKind::kNaivePriority:
      return "naive_priority";
    case PolicyKind::kPriorityOnly:
      return "priority_only";
    case PolicyKind::kPriorityPartition:
      return "priority_partition";
    case PolicyKind::kLina:
      return "lina";
    case PolicyKind::kFixedDeferral:
      return "fixed_deferral";
  }
  return "unknown";
}

const std::vector<PolicyKind>& all_policies() {
  static const std::vector<PolicyKind> kAll = {
      PolicyKind::kBaseline,          PolicyKind::kNaivePriority,
      PolicyKind::kPriorityOnly,      PolicyKind::kPriorityPartition,
      PolicyKind::kLina,              PolicyKind::kFixedDeferral};
  return kAll;
}

PolicyKind parse_policy(std::string_view name) {
  for (PolicyKind k : all_policies()) {
    if (to_string(k) == name) return k;
  }
  if (name == "priority_partition_pipeline") return PolicyKind::kLina;
  throw std::invalid_argument("unknown policy '" + std::string(name) + "'");
}

void validate_policy(const SchedulerPolicy& policy) {
  std::vector<std::string> v;
  if (policy.partition_bytes == 0) v.push_back("partition_bytes must be > 0");
  if (policy.allreduce_bucket_bytes == 0) {
    v.push_back("allreduce_bucket_bytes must be > 0");
  }
  if (policy.allreduce_streams < 1) v.push_back("allreduce_streams must be >= 1");
  if (!v.empty()) throw InvalidSpec(std::move(v));
}

namespace {

bool IsExchange(const sim::CommTask& t) {
  const Stage s = role_stage(t.tag.role);
  return s == Stage::kA2AFirst || s == Stage::kA2ASecond ||
         s == Stage::kParamExchange;
}

class TrainDispatcher : public sim::DispatchPolicy {
 public:
  TrainDispatcher(const SchedulerPolicy& policy, const sim::Workload& workload)
      : policy_(policy) {
    std::set<OpId> groups;
    for (const auto& t : workload.comm) {
      if (IsExchange(t) && role_pass(t.tag.role) == Pass::kBackward) {
        groups.insert(t.tag.group);
      }
    }
    expected_exchanges_ = static_cast<std::int64_t>(groups.size());
  }

  void on_compute_start(const sim::ComputeTask& t, Seconds) override {
    if (IsBackwardCombine(t)) ++combine_running_;
  }
  void on_compute_end(const sim::ComputeTask& t, Seconds) override {
    if (IsBackwardCombine(t)) --combine_running_;
  }
  void on_comm_dispatch(const sim::CommTask& t, Seconds) override {
    if (IsExchange(t)) remaining_.try_emplace(t.tag.group, t.tag.micro_count);
  }
  void on_comm_end(const sim::CommTask& t, Seconds) override {
    if (!IsExchange(t)) return;
    if (--remaining_[t.tag.group] == 0) {
      remaining_.erase(t.tag.group);
      if (role_pass(t.tag.role) == Pass::kBackward) ++exchanges_done_;
    }
  }

  std::vector<OpId> select(const sim::EngineView& view) override {
    switch (policy_.kind) {
      case PolicyKind::kBaseline:
        return Streams(view, false);
      case PolicyKind::kFixedDeferral:
        return Streams(view, true);
      case PolicyKind::kNaivePriority:
        return Exclusive(view, false);
      case PolicyKind::kPriorityOnly:
      case PolicyKind::kPriorityPartition:
      case PolicyKind::kLina:
        return Exclusive(view, true);
    }
    return {};
  }

 private:
  static bool IsBackwardCombine(const sim::ComputeTask& t) {
    return role_pass(t.tag.role) == Pass::kBackward &&
           role_stage(t.tag.role) == Stage::kCombine;
  }

  // Serial streams sharing the network: one for token exchanges and
  // policy_.allreduce_streams for gradients.
  std::vector<OpId> Streams(const sim::EngineView& view, bool defer) {
    std::set<std::int32_t> busy;
    for (const sim::CommTask* t : view.in_flight()) {
      busy.insert(IsExchange(*t) ? 0 : t->tag.stream);
    }
    std::vector<OpId> out;
    for (const sim::CommTask* t : view.pending()) {
      const std::int32_t stream = IsExchange(*t) ? 0 : t->tag.stream;
      if (busy.count(stream)) continue;
      if (defer && !IsExchange(*t) && !DeferralOver(*t)) continue;
      busy.insert(stream);
      out.push_back(t->id);
    }
    return out;
  }

  // All-reduces seen while ready wait for the next even count of completed
  // backward exchanges, or for the exchanges to run out.
  bool DeferralOver(const sim::CommTask& t) {
    auto [it, fresh] = ready_count_.try_emplace(t.id, exchanges_done_);
    const std::int64_t seen = it->second;
    if (exchanges_done_ > seen && exchanges_done_ % 2 == 0) return true;
    return exchanges_done_ >= expected_exchanges_;
  }

  // One collective on the network at a time. Token exchanges go first.
  std::vector<OpId> Exclusive(const sim::EngineView& view, bool guarded) {
    if (!view.in_flight().empty()) return {};
    for (const sim::CommTask* t : view.pending()) {
      if (IsExchange(*t)) return {t->id};
    }
    if (view.pending().empty()) return {};
    if (guarded) {
      if (!remaining_.empty()) return {};
      if (policy_.combine_lookahead && combine_running_ > 0) return {};
    }
    return {view.pending().front()->id};
  }

 private:
  SchedulerPolicy policy_;
  std::int32_t combine_running_ = 0;
  std::map<OpId, std::int32_t> remaining_;  // exchange group -> micro-ops left
  std::int64_t exchanges_done_ = 0;
  std::int64_t expected_exchanges_ = 0;
  std::map<OpId, std::int64_t> ready_count_;
};

}  // namespace

std::unique_ptr<sim::DispatchPolicy> make_dispatcher(
    const SchedulerPolicy& policy, const sim::Workload& workload) {
  validate_policy(policy);
  return std::make_unique<TrainDispatcher>(policy, workload);
}

}  // namespace linasim::train
