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

#include "linasim/engine.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>

#include "linasim/errors.hpp"
#include "linasim/netmodel.hpp"

namespace linasim::sim {
namespace {

constexpr Seconds kInf = std::numeric_limits<Seconds>::infinity();

struct Event {
  Seconds time;
  EventKind kind;
  OpId id;
};

struct EventLater {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time > b.time;
    if (a.kind != b.kind) return a.kind > b.kind;
    return a.id > b.id;
  }
};

RecordKind KindOf(const Payload& p) {
  switch (p.kind) {
    case CollectiveKind::kAllToAll:
      return RecordKind::kAllToAll;
    case CollectiveKind::kAllReduce:
      return RecordKind::kAllReduce;
    case CollectiveKind::kPointToPoint:
      return RecordKind::kPointToPoint;
  }
  return RecordKind::kAllToAll;
}

}  // namespace

class Engine {
 public:
  Engine(const Workload& w, const ClusterSpec& cluster, DispatchPolicy& policy)
      : w_(w), cluster_(cluster), policy_(policy) {}

  SimReport Run();
  void PushWake(Seconds t) {
    queue_.push({std::max(t, now_), EventKind::kSchedulerWake, 0});
  }

 private:
  struct Node {
    bool is_compute = true;
    std::size_t index = 0;
    std::size_t waiting = 0;
    std::vector<OpId> dependents;
    bool done = false;
  };

  void BuildGraph();
  void CheckAcyclic();
  void Release(OpId id);
  void MakeReady(OpId id);
  void Finish(OpId id);
  void Dispatch(OpId id);
  void Settle();
  void HandleEvent(const Event& e);
  void FillView();

  const ComputeTask& compute(OpId id) const {
    return w_.compute[nodes_.at(id).index];
  }
  const CommTask& comm(OpId id) const { return w_.comm[nodes_.at(id).index]; }

  const Workload& w_;
  const ClusterSpec& cluster_;
  DispatchPolicy& policy_;

  std::unordered_map<OpId, Node> nodes_;
  std::priority_queue<Event, std::vector<Event>, EventLater> queue_;
  Seconds now_ = 0;

  using ReadyKey = std::pair<Seconds, OpId>;
  std::vector<std::set<ReadyKey>> device_ready_;
  std::vector<OpId> device_running_;
  std::vector<bool> device_busy_;
  std::set<ReadyKey> pending_;
  std::vector<OpId> in_flight_;  // dispatch order
  net::ActiveFlowSet flows_;
  net::RateMap rates_;
  bool rates_dirty_ = false;

  std::unordered_map<OpId, OpRecord> records_;
  std::size_t finished_ = 0;
  EngineView view_;
};

void EngineView::request_wake(Seconds t) const {
  if (engine_ != nullptr) engine_->PushWake(t);
}

void Engine::BuildGraph() {
  std::vector<std::string> problems;
  auto add = [&](OpId id, bool is_compute, std::size_t index) {
    auto [it, inserted] = nodes_.try_emplace(id);
    if (!inserted) {
      problems.push_back("duplicate task id " + std::to_string(id));
      return;
    }
    it->second.is_compute = is_compute;
    it->second.index = index;
  };
  for (std::size_t i = 0; i < w_.compute.size(); ++i) {
    const auto& t = w_.compute[i];
    if (t.device < 0 || t.device >= cluster_.num_devices) {
      throw UnknownDevice(t.device, cluster_.num_devices);
    }
    if (!(t.duration >= 0)) {
      problems.push_back("compute task " + std::to_string(t.id) +
                         " has negative duration");
    }
    add(t.id, true, i);
  }
  for (std::size_t i = 0; i < w_.comm.size(); ++i) {
    add(w_.comm[i].id, false, i);
  }
  auto wire = [&](OpId id, const std::vector<OpId>& deps) {
    std::set<OpId> unique(deps.begin(), deps.end());
    for (OpId d : unique) {
      auto it = nodes_.find(d);
      if (it == nodes_.end()) {
        problems.push_back("task " + std::to_string(id) +
                           " depends on unknown task " + std::to_string(d));
        continue;
      }
      it->second.dependents.push_back(id);
      nodes_[id].waiting++;
    }
  };
  for (const auto& t : w_.compute) wire(t.id, t.deps);
  for (const auto& t : w_.comm) wire(t.id, t.deps);
  if (!problems.empty()) throw InvalidSpec(std::move(problems));
  for (auto& [id, n] : nodes_) {
    std::sort(n.dependents.begin(), n.dependents.end());
  }
}

void Engine::CheckAcyclic() {
  std::unordered_map<OpId, std::size_t> waiting;
  std::vector<OpId> stack;
  for (const auto& [id, n] : nodes_) {
    waiting[id] = n.waiting;
    if (n.waiting == 0) stack.push_back(id);
  }
  std::size_t seen = 0;
  while (!stack.empty()) {
    OpId id = stack.back();
    stack.pop_back();
    ++seen;
    for (OpId d : nodes_.at(id).dependents) {
      if (--waiting[d] == 0) stack.push_back(d);
    }
  }
  if (seen == nodes_.size()) return;

  // Walk backwards through unresolved dependencies until a node repeats.
  std::set<OpId> stuck;
  for (const auto& [id, left] : waiting) {
    if (left > 0) stuck.insert(id);
  }
  std::unordered_map<OpId, std::vector<OpId>> deps_of;
  for (const auto& t : w_.compute) deps_of[t.id] = t.deps;
  for (const auto& t : w_.comm) deps_of[t.id] = t.deps;
  std::vector<OpId> path;
  std::unordered_map<OpId, std::size_t> pos;
  OpId cur = *stuck.begin();
  while (!pos.count(cur)) {
    pos[cur] = path.size();
    path.push_back(cur);
    OpId next = cur;
    for (OpId d : deps_of[cur]) {
      if (stuck.count(d)) {
        next = d;
        break;
      }
    }
    cur = next;
  }
  std::vector<OpId> cycle(path.begin() + static_cast<long>(pos[cur]),
                          path.end());
  std::reverse(cycle.begin(), cycle.end());
  cycle.push_back(cycle.front());
  throw DeadlockDetected("dependency cycle", std::move(cycle));
}

void Engine::MakeReady(OpId id) {
  const Node& n = nodes_.at(id);
  if (n.is_compute) {
    device_ready_[compute(id).device].insert({now_, id});
    return;
  }
  const CommTask& t = comm(id);
  if (t.arrival > now_) {
    queue_.push({t.arrival, EventKind::kOpArrival, id});
  } else {
    pending_.insert({now_, id});
  }
}

void Engine::Release(OpId id) {
  for (OpId d : nodes_.at(id).dependents) {
    if (--nodes_.at(d).waiting == 0) MakeReady(d);
  }
}

void Engine::Finish(OpId id) {
  Node& n = nodes_.at(id);
  n.done = true;
  ++finished_;
  records_.at(id).end = now_;
  if (n.is_compute) {
    const ComputeTask& t = compute(id);
    device_running_[t.device] = 0;
    device_busy_[t.device] = false;
    policy_.on_compute_end(t, now_);
  } else {
    in_flight_.erase(std::find(in_flight_.begin(), in_flight_.end(), id));
    policy_.on_comm_end(comm(id), now_);
  }
  Release(id);
}

void Engine::Dispatch(OpId id) {
  const CommTask& t = comm(id);
  in_flight_.push_back(id);
  OpRecord& r = records_[id];
  r.op_id = id;
  r.kind = KindOf(t.payload);
  const auto devices = t.payload.devices();
  r.device = devices.size() == 1 ? devices.front() : -1;
  r.start = now_;
  r.isolated_duration = net::isolated_duration(t.payload, cluster_);
  r.tag = t.tag;
  policy_.on_comm_dispatch(t, now_);

  net::Demand demand = net::op_demand(t.payload, cluster_);
  if (demand.empty()) {
    Finish(id);
  } else if (cluster_.launch_latency > 0) {
    queue_.push({now_ + cluster_.launch_latency, EventKind::kLaunchDone, id});
  } else {
    flows_.add(id, std::move(demand));
    rates_dirty_ = true;
  }
}

void Engine::FillView() {
  view_.now_ = now_;
  view_.pending_.clear();
  for (const auto& [ready, id] : pending_) view_.pending_.push_back(&comm(id));
  view_.in_flight_.clear();
  for (OpId id : in_flight_) view_.in_flight_.push_back(&comm(id));
  view_.running_.clear();
  for (std::size_t d = 0; d < device_running_.size(); ++d) {
    if (device_busy_[d]) view_.running_.push_back(&compute(device_running_[d]));
  }
}

void Engine::Settle() {
  for (;;) {
    for (std::size_t d = 0; d < device_ready_.size(); ++d) {
      if (device_busy_[d] || device_ready_[d].empty()) continue;
      const OpId id = device_ready_[d].begin()->second;
      device_ready_[d].erase(device_ready_[d].begin());
      const ComputeTask& t = compute(id);
      device_busy_[d] = true;
      device_running_[d] = id;
      OpRecord& r = records_[id];
      r.op_id = id;
      r.kind = RecordKind::kCompute;
      r.device = t.device;
      r.start = now_;
      r.isolated_duration = t.duration;
      r.tag = t.tag;
      queue_.push({now_ + t.duration, EventKind::kComputeComplete, id});
      policy_.on_compute_start(t, now_);
    }
    FillView();
    std::vector<OpId> chosen = policy_.select(view_);
    if (chosen.empty()) return;
    bool any = false;
    for (OpId id : chosen) {
      auto it = std::find_if(pending_.begin(), pending_.end(),
                             [id](const ReadyKey& k) { return k.second == id; });
      if (it == pending_.end()) continue;
      pending_.erase(it);
      Dispatch(id);
      any = true;
    }
    if (!any) return;
  }
}

void Engine::HandleEvent(const Event& e) {
  switch (e.kind) {
    case EventKind::kComputeComplete:
    case EventKind::kOpComplete:
      Finish(e.id);
      break;
    case EventKind::kOpArrival:
      pending_.insert({now_, e.id});
      break;
    case EventKind::kLaunchDone:
      flows_.add(e.id, net::op_demand(comm(e.id).payload, cluster_));
      rates_dirty_ = true;
      break;
    case EventKind::kSchedulerWake:
      break;
  }
}

SimReport Engine::Run() {
  BuildGraph();
  CheckAcyclic();
  view_.engine_ = this;
  const auto n_dev = static_cast<std::size_t>(cluster_.num_devices);
  device_ready_.assign(n_dev, {});
  device_running_.assign(n_dev, 0);
  device_busy_.assign(n_dev, false);

  std::vector<OpId> roots;
  for (const auto& [id, n] : nodes_) {
    if (n.waiting == 0) roots.push_back(id);
  }
  std::sort(roots.begin(), roots.end());
  for (OpId id : roots) MakeReady(id);
  Settle();

  for (;;) {
    if (rates_dirty_) {
      rates_ = net::fair_share_rates(flows_, cluster_);
      rates_dirty_ = false;
    }
    const Seconds dt_flow = net::time_to_next_completion(flows_, rates_);
    const Seconds t_event = queue_.empty() ? kInf : queue_.top().time;
    if (dt_flow == kInf && t_event == kInf) break;

    std::vector<OpId> done;
    if (now_ + dt_flow <= t_event) {
      done = flows_.advance(rates_, dt_flow);
      now_ = now_ + dt_flow;
    } else {
      done = flows_.advance(rates_, t_event - now_);
      now_ = t_event;
    }
    if (!done.empty()) rates_dirty_ = true;
    for (OpId id : done) Finish(id);
    while (!queue_.empty() && queue_.top().time <= now_) {
      Event e = queue_.top();
      queue_.pop();
      HandleEvent(e);
    }
    Settle();
  }

  if (finished_ != nodes_.size()) {
    std::vector<OpId> stuck;
    for (const auto& [id, n] : nodes_) {
      if (!n.done) stuck.push_back(id);
    }
    std::sort(stuck.begin(), stuck.end());
    throw DeadlockDetected("tasks never dispatched", std::move(stuck));
  }

  SimReport report;
  report.records.reserve(records_.size());
  for (auto& [id, r] : records_) report.records.push_back(std::move(r));
  std::sort(report.records.begin(), report.records.end(),
            [](const OpRecord& a, const OpRecord& b) {
              if (a.start != b.start) return a.start < b.start;
              return a.op_id < b.op_id;
            });
  report.device_busy.assign(n_dev, 0.0);
  report.compute_intervals.assign(n_dev, {});
  for (const auto& r : report.records) {
    report.step_time = std::max(report.step_time, r.end);
    if (r.kind != RecordKind::kCompute) continue;
    report.device_busy[r.device] += r.end - r.start;
    if (r.end > r.start) {
      report.compute_intervals[r.device].push_back({r.start, r.end});
    }
  }
  return report;
}

std::vector<OpId> DispatchAll::select(const EngineView& view) {
  std::vector<OpId> out;
  for (const CommTask* t : view.pending()) out.push_back(t->id);
  return out;
}

SimReport run(const Workload& workload, const ClusterSpec& cluster,
              DispatchPolicy& policy) {
  Engine engine(workload, cluster, policy);
  return engine.Run();
}

}  // namespace linasim::sim
