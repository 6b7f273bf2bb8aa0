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
#include <numeric>
#include <random>
#include <string>
#include <unordered_map>

#include "linasim/errors.hpp"
#include "linasim/infersched.hpp"

namespace linasim::infer {
namespace {

struct Counts {
  std::vector<double> demand;  // devices' worth of tokens per expert
  std::vector<std::int32_t> replicas;
  std::int32_t unestimated = 0;
};

std::vector<PackItem> Items(const Counts& c) {
  std::vector<PackItem> items;
  for (std::size_t e = 0; e < c.replicas.size(); ++e) {
    for (std::int32_t r = 0; r < c.replicas[e]; ++r) {
      items.push_back({static_cast<ExpertId>(e), c.demand[e] / c.replicas[e]});
    }
  }
  return items;
}

double MaxLoad(const std::vector<PackItem>& items,
               const std::vector<std::vector<std::size_t>>& bins) {
  double worst = 0;
  for (const auto& b : bins) {
    double load = 0;
    for (std::size_t i : b) load += items[i].load;
    worst = std::max(worst, load);
  }
  return worst;
}

// First fit over a fixed item order with reusable flat buffers.
class FirstFit {
 public:
  FirstFit(const std::vector<PackItem>& items, std::int32_t max_packed)
      : items_(items), max_packed_(max_packed) {
    order_.resize(items.size());
    std::iota(order_.begin(), order_.end(), 0);
    // Equal loads: experts with more replicas first, as they are the
    // hardest to keep on distinct devices.
    std::unordered_map<ExpertId, std::int32_t> copies;
    for (const auto& it : items) ++copies[it.owner];
    std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
      if (items[a].load != items[b].load) return items[a].load > items[b].load;
      return copies[items[a].owner] > copies[items[b].owner];
    });
    bin_of_.resize(items.size());
  }

  // Devices opened, or limit + 1 as soon as the items need more.
  std::size_t run(double capacity, std::size_t limit) {
    load_.clear();
    count_.clear();
    owners_.clear();
    const double cap = capacity * (1 + 1e-12);
    const auto slots = static_cast<std::size_t>(max_packed_);
    for (std::size_t i : order_) {
      const auto& it = items_[i];
      std::size_t d = 0;
      for (; d < load_.size(); ++d) {
        if (count_[d] >= slots || load_[d] + it.load > cap) continue;
        const ExpertId* o = &owners_[d * slots];
        if (std::find(o, o + count_[d], it.owner) == o + count_[d]) break;
      }
      if (d == load_.size()) {
        if (d == limit) return limit + 1;
        load_.push_back(0);
        count_.push_back(0);
        owners_.resize(owners_.size() + slots);
      }
      owners_[d * slots + count_[d]++] = it.owner;
      load_[d] += it.load;
      bin_of_[i] = d;
    }
    return load_.size();
  }

  // Item indices per opened device after the last complete run.
  std::vector<std::vector<std::size_t>> bins() const {
    std::vector<std::vector<std::size_t>> out(load_.size());
    for (std::size_t i : order_) out[bin_of_[i]].push_back(i);
    return out;
  }

 private:
  const std::vector<PackItem>& items_;
  std::int32_t max_packed_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> bin_of_;
  std::vector<double> load_;
  std::vector<std::size_t> count_;
  std::vector<ExpertId> owners_;
};

struct Packing {
  double capacity = 0;
  double max_load = std::numeric_limits<double>::infinity();
  std::vector<std::vector<std::size_t>> bins;  // item indices per device
};

// Smallest capacity at which first-fit-decreasing fits the items on
// `num_devices` devices, found by bisection.
Packing Pack(const std::vector<PackItem>& items, std::int32_t num_devices,
             std::int32_t max_packed) {
  Packing out;
  double total = 0;
  double largest = 0;
  for (const auto& it : items) {
    total += it.load;
    largest = std::max(largest, it.load);
  }
  FirstFit ff(items, max_packed);
  const auto limit = static_cast<std::size_t>(num_devices);
  auto fits = [&](double cap) { return ff.run(cap, limit) <= limit; };
  double lo = std::max(largest, total / num_devices);
  if (fits(lo)) {
    out.capacity = lo;
  } else {
    double hi = std::max(lo, 1e-12) * 2;
    for (int i = 0; i < 64 && !fits(hi); ++i) hi *= 2;
    if (!fits(hi)) return out;
    for (int i = 0; i < 36; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (fits(mid)) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    out.capacity = hi;
    fits(hi);
  }
  out.bins = ff.bins();
  out.max_load = MaxLoad(items, out.bins);
  return out;
}

std::int32_t TotalReplicas(const Counts& c) {
  return std::accumulate(c.replicas.begin(), c.replicas.end(), 0);
}

Counts ComputeCounts(const std::vector<double>& popularity,
                     std::int32_t num_devices, std::int32_t k,
                     std::int32_t max_packed) {
  if (num_devices < 1) throw InvalidSpec({"num_devices must be >= 1"});
  if (k < 1) throw InvalidSpec({"k must be >= 1"});
  if (max_packed < 1) throw InvalidSpec({"max_packed must be >= 1"});
  const auto experts = static_cast<std::int64_t>(popularity.size());
  if (experts > static_cast<std::int64_t>(num_devices) * max_packed) {
    throw InfeasiblePlan(std::to_string(experts) + " experts do not fit on " +
                         std::to_string(num_devices) + " devices with " +
                         std::to_string(max_packed) + " slots each");
  }
  double total = 0;
  for (std::size_t e = 0; e < popularity.size(); ++e) {
    const double p = popularity[e];
    if (!(p >= 0) || !std::isfinite(p)) {
      throw InvalidSpec({"popularity of expert " + std::to_string(e) +
                         " must be finite and >= 0"});
    }
    total += p;
  }
  // Demand shares the devices in proportion to popularity. Actual
  // popularity sums to k; a partial estimate is scaled up to the same total.
  Counts c;
  c.demand.assign(popularity.size(), 0.0);
  c.replicas.assign(popularity.size(), 0);
  for (std::size_t e = 0; e < popularity.size(); ++e) {
    if (popularity[e] > 0) {
      c.demand[e] = num_devices * popularity[e] / total;
      c.replicas[e] = std::clamp<std::int32_t>(
          static_cast<std::int32_t>(std::llround(c.demand[e])), 1, num_devices);
    } else {
      ++c.unestimated;
    }
  }
  const std::int32_t budget = num_devices * max_packed - c.unestimated;

  // Trim the largest counts until the replicas fit.
  while (TotalReplicas(c) > budget ||
         !std::isfinite(Pack(Items(c), num_devices, max_packed).max_load)) {
    std::size_t pick = popularity.size();
    for (std::size_t e = 0; e < popularity.size(); ++e) {
      if (c.replicas[e] < 2) continue;
      if (pick == popularity.size() || c.replicas[e] >= c.replicas[pick]) pick = e;
    }
    if (pick == popularity.size()) throw InfeasiblePlan("cannot place the estimated experts");
    --c.replicas[pick];
  }

  // Grow the expert with the heaviest replicas one replica at a time and
  // keep the counts whose packing has the lightest heaviest device.
  // Gives up after as many fruitless additions in a row as there are
  // experts.
  Counts best = c;
  double best_load = Pack(Items(c), num_devices, max_packed).max_load;
  std::size_t fruitless = 0;
  while (TotalReplicas(c) < budget && fruitless < popularity.size()) {
    std::size_t hot = popularity.size();
    for (std::size_t e = 0; e < popularity.size(); ++e) {
      if (c.replicas[e] == 0 || c.replicas[e] >= num_devices) continue;
      if (hot == popularity.size() ||
          c.demand[e] / c.replicas[e] > c.demand[hot] / c.replicas[hot]) {
        hot = e;
      }
    }
    if (hot == popularity.size()) break;
    ++c.replicas[hot];
    const double load = Pack(Items(c), num_devices, max_packed).max_load;
    if (load < best_load - 1e-9) {
      best = c;
      best_load = load;
      fruitless = 0;
    } else {
      ++fruitless;
    }
  }
  return best;
}

}  // namespace

std::int32_t AllocationPlan::devices_used() const {
  std::int32_t n = 0;
  for (const auto& h : hosted) n += h.empty() ? 0 : 1;
  return n;
}

std::vector<std::vector<std::size_t>> first_fit_decreasing(
    const std::vector<PackItem>& items, double capacity,
    std::int32_t max_packed) {
  if (max_packed < 1) throw std::invalid_argument("max_packed must be >= 1");
  FirstFit ff(items, max_packed);
  ff.run(capacity, items.size());
  return ff.bins();
}

std::vector<PackItem> packing_items(const std::vector<double>& popularity,
                                    std::int32_t num_devices, std::int32_t k,
                                    std::int32_t max_packed, double* capacity) {
  auto items = Items(ComputeCounts(popularity, num_devices, k, max_packed));
  if (capacity != nullptr) *capacity = Pack(items, num_devices, max_packed).capacity;
  return items;
}

namespace {

struct Search {
  const std::vector<PackItem>& items;
  double capacity;
  std::int32_t max_packed;
  std::int32_t best;
  std::vector<double> load;
  std::vector<std::vector<ExpertId>> members;

  std::vector<double> tail_load;  // load of items i.. onward
  std::vector<std::size_t> placed;
  std::int32_t floor = 0;  // no packing can use fewer devices

  void Go(std::size_t i) {
    const auto open = static_cast<std::int32_t>(load.size());
    if (open >= best) return;
    if (i == items.size()) {
      best = open;
      return;
    }
    double room = 0;
    std::int64_t slots = 0;
    for (std::size_t d = 0; d < load.size(); ++d) {
      room += std::max(0.0, capacity - load[d]);
      slots += max_packed - static_cast<std::int64_t>(members[d].size());
    }
    const double spill = tail_load[i] - room;
    const auto extra_slots = static_cast<std::int64_t>(items.size() - i) - slots;
    std::int64_t need = 0;
    if (spill > capacity * 1e-9) {
      need = static_cast<std::int64_t>(std::ceil(spill / capacity - 1e-9));
    }
    if (extra_slots > 0) need = std::max(need, (extra_slots + max_packed - 1) / max_packed);
    if (open + need >= best) return;
    const auto& it = items[i];
    // Replicas of one expert are interchangeable: keep their devices
    // ascending.
    std::size_t first = 0;
    if (i > 0 && items[i - 1].owner == it.owner &&
        items[i - 1].load == it.load) {
      first = placed[i - 1] + 1;
    }
    for (std::size_t d = first; d < load.size(); ++d) {
      const auto& m = members[d];
      if (static_cast<std::int32_t>(m.size()) >= max_packed) continue;
      if (load[d] + it.load > capacity * (1 + 1e-12)) continue;
      if (std::find(m.begin(), m.end(), it.owner) != m.end()) continue;
      const double before = load[d];
      load[d] += it.load;
      members[d].push_back(it.owner);
      placed[i] = d;
      Go(i + 1);
      members[d].pop_back();
      load[d] = before;
      if (best <= floor) return;
    }
    if (open + 1 < best) {
      load.push_back(it.load);
      members.push_back({it.owner});
      placed[i] = load.size() - 1;
      Go(i + 1);
      members.pop_back();
      load.pop_back();
    }
  }
};

}  // namespace

std::int32_t min_devices_bruteforce(const std::vector<PackItem>& items,
                                    double capacity, std::int32_t max_packed,
                                    std::int32_t max_devices) {
  if (max_packed < 1) throw std::invalid_argument("max_packed must be >= 1");
  for (const auto& it : items) {
    if (!(it.load >= 0) || it.load > capacity * (1 + 1e-12)) {
      throw std::invalid_argument("item does not fit");
    }
  }
  std::vector<PackItem> sorted = items;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const PackItem& a, const PackItem& b) {
                     if (a.load != b.load) return a.load > b.load;
                     return a.owner < b.owner;
                   });
  Search s{sorted, capacity, max_packed, max_devices + 1, {}, {}, {}, {}, 0};
  s.tail_load.assign(sorted.size() + 1, 0.0);
  for (std::size_t i = sorted.size(); i-- > 0;) {
    s.tail_load[i] = s.tail_load[i + 1] + sorted[i].load;
  }
  s.placed.assign(sorted.size(), 0);
  std::map<ExpertId, std::int32_t> copies;
  for (const auto& it : sorted) {
    s.floor = std::max(s.floor, ++copies[it.owner]);
  }
  const auto by_slots = static_cast<std::int64_t>(
      (sorted.size() + max_packed - 1) / max_packed);
  s.floor = std::max<std::int32_t>(s.floor, static_cast<std::int32_t>(by_slots));
  if (!sorted.empty()) {
    s.floor = std::max<std::int32_t>(
        s.floor, static_cast<std::int32_t>(
                     std::ceil(s.tail_load[0] / capacity - 1e-9)));
  }
  s.Go(0);
  return s.best;
}

AllocationPlan identity_plan(std::int32_t num_devices, std::int32_t experts,
                             std::int32_t max_packed) {
  if (num_devices < 1 || experts < 1 || max_packed < 1) {
    throw InvalidSpec({"identity plan needs positive sizes"});
  }
  if (experts > static_cast<std::int64_t>(num_devices) * max_packed) {
    throw InfeasiblePlan(std::to_string(experts) +
                         " experts do not fit the static placement");
  }
  AllocationPlan plan;
  plan.num_devices = num_devices;
  plan.num_experts = experts;
  plan.max_packed = max_packed;
  plan.popularity.assign(static_cast<std::size_t>(experts), 1.0 / experts);
  plan.replicas.assign(static_cast<std::size_t>(experts), 1);
  plan.hosts.resize(static_cast<std::size_t>(experts));
  plan.hosted.resize(static_cast<std::size_t>(num_devices));
  for (ExpertId e = 0; e < experts; ++e) {
    plan.hosts[e] = {e % num_devices};
    plan.hosted[e % num_devices].push_back(e);
  }
  plan.packed_devices = plan.devices_used();
  return plan;
}

AllocationPlan allocate(const std::vector<double>& popularity,
                        std::int32_t num_devices, std::int32_t k,
                        std::int32_t max_packed, std::uint64_t seed) {
  auto c = ComputeCounts(popularity, num_devices, k, max_packed);
  const auto experts = static_cast<std::int32_t>(popularity.size());

  AllocationPlan plan;
  plan.num_devices = num_devices;
  plan.num_experts = experts;
  plan.max_packed = max_packed;
  plan.popularity = popularity;
  plan.replicas = c.replicas;
  plan.hosts.resize(popularity.size());

  const auto items = Items(c);
  const auto packing = Pack(items, num_devices, max_packed);
  plan.capacity = packing.capacity;
  plan.packed_devices = static_cast<std::int32_t>(packing.bins.size());
  plan.hosted.assign(static_cast<std::size_t>(num_devices), {});
  std::vector<std::int32_t> used(static_cast<std::size_t>(num_devices), 0);
  for (std::size_t d = 0; d < packing.bins.size(); ++d) {
    for (std::size_t i : packing.bins[d]) plan.hosted[d].push_back(items[i].owner);
    used[d] = static_cast<std::int32_t>(packing.bins[d].size());
  }

  std::vector<DeviceId> free_devices;
  for (DeviceId d = 0; d < num_devices; ++d) {
    if (used[d] == 0) free_devices.push_back(d);
  }

  // Experts without an estimate: spread over free devices, then onto the
  // least-loaded devices at random.
  std::mt19937_64 rng(seed);
  std::vector<ExpertId> cold;
  for (ExpertId e = 0; e < experts; ++e) {
    if (c.replicas[e] == 0) cold.push_back(e);
  }
  const auto nfree = free_devices.size();
  std::vector<bool> taken(static_cast<std::size_t>(num_devices), false);
  for (std::size_t j = 0; j < cold.size(); ++j) {
    DeviceId d;
    if (j < nfree * static_cast<std::size_t>(max_packed)) {
      d = free_devices[j % nfree];
      taken[d] = true;
    } else {
      std::int32_t least = max_packed;
      for (DeviceId x = 0; x < num_devices; ++x) least = std::min(least, used[x]);
      std::vector<DeviceId> cand;
      for (DeviceId x = 0; x < num_devices; ++x) {
        if (used[x] == least) cand.push_back(x);
      }
      if (cand.empty() || least >= max_packed) {
        throw InfeasiblePlan("no free slot for expert " + std::to_string(cold[j]));
      }
      d = cand[rng() % cand.size()];
    }
    plan.hosted[d].push_back(cold[j]);
    ++used[d];
    plan.replicas[cold[j]] = 1;
  }

  // Devices still idle take extra replicas of the busiest estimated experts.
  for (DeviceId d : free_devices) {
    if (taken[d]) continue;
    ExpertId best = -1;
    double best_load = 0;
    for (ExpertId e = 0; e < experts; ++e) {
      if (c.demand[e] <= 0) continue;
      const double load = c.demand[e] / plan.replicas[e];
      if (best < 0 || load > best_load) {
        best = e;
        best_load = load;
      }
    }
    if (best < 0) break;
    plan.hosted[d].push_back(best);
    used[d] = max_packed;
    ++plan.replicas[best];
  }

  for (DeviceId d = 0; d < num_devices; ++d) {
    for (ExpertId e : plan.hosted[d]) plan.hosts[e].push_back(d);
  }
  for (auto& h : plan.hosts) std::sort(h.begin(), h.end());
  return plan;
}

void validate_plan(const AllocationPlan& plan) {
  std::vector<std::string> v;
  if (static_cast<std::int32_t>(plan.hosted.size()) != plan.num_devices) {
    v.push_back("hosted list size differs from num_devices");
  }
  if (static_cast<std::int32_t>(plan.hosts.size()) != plan.num_experts ||
      static_cast<std::int32_t>(plan.replicas.size()) != plan.num_experts) {
    v.push_back("per-expert lists differ from num_experts");
  }
  if (!v.empty()) throw InvalidSpec(v);
  for (std::size_t d = 0; d < plan.hosted.size(); ++d) {
    const auto& h = plan.hosted[d];
    if (static_cast<std::int32_t>(h.size()) > plan.max_packed) {
      v.push_back("device " + std::to_string(d) + " hosts " +
                  std::to_string(h.size()) + " experts");
    }
    std::vector<ExpertId> s = h;
    std::sort(s.begin(), s.end());
    if (std::adjacent_find(s.begin(), s.end()) != s.end()) {
      v.push_back("device " + std::to_string(d) + " hosts an expert twice");
    }
  }
  for (std::size_t e = 0; e < plan.hosts.size(); ++e) {
    const auto& h = plan.hosts[e];
    if (h.empty()) v.push_back("expert " + std::to_string(e) + " unplaced");
    if (static_cast<std::int32_t>(h.size()) != plan.replicas[e]) {
      v.push_back("expert " + std::to_string(e) + " replica count mismatch");
    }
    for (DeviceId d : h) {
      if (d < 0 || d >= plan.num_devices) {
        v.push_back("expert " + std::to_string(e) + " on unknown device");
        continue;
      }
      const auto& hd = plan.hosted[d];
      if (std::find(hd.begin(), hd.end(), static_cast<ExpertId>(e)) == hd.end()) {
        v.push_back("expert " + std::to_string(e) + " host list inconsistent");
      }
    }
  }
  if (!v.empty()) throw InvalidSpec(v);
}

std::vector<std::vector<std::int64_t>> split_tokens(
    const AllocationPlan& plan, const std::vector<std::int64_t>& counts) {
  if (counts.size() != plan.hosts.size()) {
    throw std::invalid_argument("counts size differs from experts");
  }
  std::vector<std::vector<std::int64_t>> out(counts.size());
  for (std::size_t e = 0; e < counts.size(); ++e) {
    const auto n = static_cast<std::int64_t>(plan.hosts[e].size());
    if (n == 0) {
      if (counts[e] > 0) throw PlanMissing("expert " + std::to_string(e) + " unplaced");
      continue;
    }
    out[e].assign(static_cast<std::size_t>(n), counts[e] / n);
    for (std::int64_t r = 0; r < counts[e] % n; ++r) ++out[e][r];
  }
  return out;
}

std::vector<std::vector<DeviceId>> route(const AllocationPlan& plan,
                                         const BatchAssignment& batch) {
  std::vector<std::size_t> next(plan.hosts.size(), 0);
  std::vector<std::vector<DeviceId>> out(batch.selection.size());
  for (std::size_t t = 0; t < batch.selection.size(); ++t) {
    for (ExpertId e : batch.selection[t]) {
      if (e < 0 || e >= static_cast<ExpertId>(plan.hosts.size())) {
        throw std::out_of_range("expert id out of range");
      }
      const auto& h = plan.hosts[e];
      if (h.empty()) throw PlanMissing("expert " + std::to_string(e) + " unplaced");
      out[t].push_back(h[next[e]++ % h.size()]);
    }
  }
  return out;
}

std::vector<std::int64_t> selection_counts(const BatchAssignment& batch,
                                           std::int32_t experts) {
  std::vector<std::int64_t> c(static_cast<std::size_t>(experts), 0);
  for (const auto& sel : batch.selection) {
    for (ExpertId e : sel) ++c.at(static_cast<std::size_t>(e));
  }
  return c;
}

std::vector<double> actual_popularity(const BatchAssignment& batch,
                                      std::int32_t experts) {
  const auto c = selection_counts(batch, experts);
  std::vector<double> p(c.size(), 0.0);
  if (batch.selection.empty()) return p;
  const double nt = static_cast<double>(batch.selection.size());
  for (std::size_t e = 0; e < c.size(); ++e) p[e] = static_cast<double>(c[e]) / nt;
  return p;
}

std::vector<ExpertId> top_2k(const std::vector<double>& popularity,
                             std::int32_t k) {
  std::vector<ExpertId> order(popularity.size());
  std::iota(order.begin(), order.end(), 0);
  const auto take = std::min<std::size_t>(2 * static_cast<std::size_t>(k),
                                          order.size());
  std::partial_sort(order.begin(), order.begin() + take, order.end(),
                    [&](ExpertId a, ExpertId b) {
                      if (popularity[a] != popularity[b]) {
                        return popularity[a] > popularity[b];
                      }
                      return a < b;
                    });
  order.resize(take);
  std::sort(order.begin(), order.end());
  return order;
}

PhaseTwoOutcome two_phase_step(const AllocationPlan& plan_estimated,
                               const BatchAssignment& actual, std::int32_t k,
                               const CostModel& cost, std::uint64_t seed) {
  PhaseTwoOutcome out;
  const auto pop = actual_popularity(actual, plan_estimated.num_experts);
  out.estimated_top = top_2k(plan_estimated.popularity, k);
  out.actual_top = top_2k(pop, k);
  out.matched = out.estimated_top == out.actual_top;
  if (out.matched) {
    out.plan_used = plan_estimated;
    out.overhead_charged = cost.resume_signal_cost;
  } else {
    out.plan_used = allocate(pop, plan_estimated.num_devices, k,
                             plan_estimated.max_packed, seed);
    out.overhead_charged = cost.sched_phase_cost;
  }
  return out;
}

AccuracySummary accuracy(const std::vector<bool>& matched) {
  AccuracySummary s;
  if (matched.empty()) return s;
  const auto hits = std::count(matched.begin(), matched.end(), true);
  s.estimation_accuracy =
      static_cast<double>(hits) / static_cast<double>(matched.size());
  s.finetune_rate = 1.0 - s.estimation_accuracy;
  return s;
}

}  // namespace linasim::infer
