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
#include <cstdio>
#include <ostream>

#include "linasim/engine.hpp"
#include "linasim/errors.hpp"
#include "linasim/report.hpp"

namespace linasim {

std::string_view to_string(RecordKind kind) {
  switch (kind) {
    case RecordKind::kCompute:
      return "compute";
    case RecordKind::kAllToAll:
      return "all_to_all";
    case RecordKind::kAllReduce:
      return "all_reduce";
    case RecordKind::kPointToPoint:
      return "point_to_point";
  }
  return "unknown";
}

double busy_fraction(const SimReport& report, DeviceId device, Seconds t0,
                     Seconds t1) {
  if (!(t1 > t0)) {
    throw EmptyWindow("busy_fraction: window [" + std::to_string(t0) + ", " +
                      std::to_string(t1) + "] is empty");
  }
  if (device < 0 ||
      static_cast<std::size_t>(device) >= report.compute_intervals.size()) {
    throw UnknownDevice(device,
                        static_cast<std::int64_t>(report.compute_intervals.size()));
  }
  Seconds busy = 0;
  for (const Interval& iv : report.compute_intervals[device]) {
    const Seconds lo = std::max(iv.start, t0);
    const Seconds hi = std::min(iv.end, t1);
    if (hi > lo) busy += hi - lo;
  }
  return std::clamp(busy / (t1 - t0), 0.0, 1.0);
}

namespace sim {

void write_timeline_csv(const SimReport& report, std::ostream& os) {
  os << "op_id,kind,device,start_s,end_s,isolated_s\n";
  char buf[96];
  for (const OpRecord& r : report.records) {
    os << r.op_id << ',';
    if (r.tag.label.empty()) {
      os << to_string(r.kind);
    } else {
      os << r.tag.label;
    }
    std::snprintf(buf, sizeof(buf), ",%d,%.9f,%.9f,%.9f\n", r.device, r.start,
                  r.end, r.isolated_duration);
    os << buf;
  }
}

}  // namespace sim
}  // namespace linasim
