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

#ifndef LINASIM_REPORT_HPP_
#define LINASIM_REPORT_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "linasim/types.hpp"

namespace linasim {

// Metadata a workload builder attaches to a task; carried into its record.
struct TaskTag {
  std::string label;
  std::int32_t role = 0;
  std::int32_t layer = -1;
  OpId group = 0;  // parent collective of a micro-op, or a bucket id
  std::int32_t micro_index = 0;
  std::int32_t micro_count = 1;
  std::int32_t stream = 0;
};

enum class RecordKind { kCompute, kAllToAll, kAllReduce, kPointToPoint };

std::string_view to_string(RecordKind kind);

struct OpRecord {
  OpId op_id = 0;
  RecordKind kind = RecordKind::kCompute;
  DeviceId device = -1;  // -1 for collectives spanning several devices
  Seconds start = 0;
  Seconds end = 0;
  Seconds isolated_duration = 0;
  TaskTag tag;
};

struct Interval {
  Seconds start = 0;
  Seconds end = 0;
};

struct LayerTime {
  std::int32_t layer = 0;
  Seconds forward = 0;
  Seconds backward = 0;
};

struct SimReport {
  std::vector<OpRecord> records;  // ordered by (start, op_id)
  Seconds step_time = 0;
  std::vector<LayerTime> moe_layer_times;
  std::vector<Seconds> all_to_all_times;
  double pipelining_efficiency = 0;
  std::vector<Seconds> inference_times;
  double estimation_accuracy = 0;
  double finetune_rate = 0;
  std::vector<Seconds> device_busy;
  std::vector<std::vector<Interval>> compute_intervals;  // per device, sorted
};

// Fraction of [t0, t1] during which `device`'s compute stream was busy.
// Throws EmptyWindow unless t1 > t0, UnknownDevice for a bad device.
double busy_fraction(const SimReport& report, DeviceId device, Seconds t0,
                     Seconds t1);

}  // namespace linasim

#endif  // LINASIM_REPORT_HPP_
