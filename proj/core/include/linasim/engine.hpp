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

#ifndef LINASIM_ENGINE_HPP_
#define LINASIM_ENGINE_HPP_

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <vector>

#include "linasim/report.hpp"
#include "linasim/types.hpp"

namespace linasim::sim {

struct ComputeTask {
  OpId id = 0;
  DeviceId device = 0;
  Seconds duration = 0;
  std::vector<OpId> deps;
  TaskTag tag;
};

struct CommTask {
  OpId id = 0;
  Payload payload;
  Priority priority = Priority::kLow;
  Seconds arrival = 0;
  std::vector<OpId> deps;
  TaskTag tag;
};

// Compute and communication tasks share one id space.
struct Workload {
  std::vector<ComputeTask> compute;
  std::vector<CommTask> comm;

  bool empty() const { return compute.empty() && comm.empty(); }
};

// Event kinds in tie-break order: at equal times completions are handled
// before arrivals, and launches finish before policy wakeups.
enum class EventKind {
  kOpComplete = 0,
  kComputeComplete = 1,
  kOpArrival = 2,
  kLaunchDone = 3,
  kSchedulerWake = 4,
};

class Engine;

// Read-only snapshot handed to the dispatch policy.
class EngineView {
 public:
  Seconds now() const { return now_; }
  // Ready, undispatched communication in (ready time, id) order.
  const std::vector<const CommTask*>& pending() const { return pending_; }
  // Dispatched and not yet complete, in dispatch order.
  const std::vector<const CommTask*>& in_flight() const { return in_flight_; }
  // Compute tasks currently occupying a device stream.
  const std::vector<const ComputeTask*>& running() const { return running_; }
  // Asks the engine to call the policy again at time t.
  void request_wake(Seconds t) const;

 private:
  friend class Engine;
  Seconds now_ = 0;
  std::vector<const CommTask*> pending_;
  std::vector<const CommTask*> in_flight_;
  std::vector<const ComputeTask*> running_;
  Engine* engine_ = nullptr;
};

class DispatchPolicy {
 public:
  virtual ~DispatchPolicy() = default;

  virtual void on_compute_start(const ComputeTask&, Seconds) {}
  virtual void on_compute_end(const ComputeTask&, Seconds) {}
  virtual void on_comm_dispatch(const CommTask&, Seconds) {}
  virtual void on_comm_end(const CommTask&, Seconds) {}

  // Ids from view.pending() to launch now. Called after every event batch
  // and again after each non-empty decision until nothing changes.
  virtual std::vector<OpId> select(const EngineView& view) = 0;
};

// Launches everything as soon as it is ready.
class DispatchAll : public DispatchPolicy {
 public:
  std::vector<OpId> select(const EngineView& view) override;
};

// Runs the workload to quiescence. Throws DeadlockDetected on a dependency
// cycle or if the policy leaves tasks undispatched forever, and InvalidSpec
// for duplicate ids or dangling dependencies.
SimReport run(const Workload& workload, const ClusterSpec& cluster,
              DispatchPolicy& policy);

// One line per record using the header
// op_id,kind,device,start_s,end_s,isolated_s.
void write_timeline_csv(const SimReport& report, std::ostream& os);

}  // namespace linasim::sim

#endif  // LINASIM_ENGINE_HPP_
