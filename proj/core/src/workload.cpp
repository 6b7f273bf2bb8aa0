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

#include "linasim/workload.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "linasim/errors.hpp"

namespace linasim::workload {

std::string_view to_string(TraceMode mode) {
  return mode == TraceMode::kTrainingBalanced ? "training_balanced"
                                              : "inference_skewed";
}

TraceMode parse_mode(std::string_view name) {
  if (name == "training_balanced") return TraceMode::kTrainingBalanced;
  if (name == "inference_skewed") return TraceMode::kInferenceSkewed;
  throw std::invalid_argument("unknown trace mode '" + std::string(name) + "'");
}

void validate_params(const GeneratorParams& params) {
  std::vector<std::string> v;
  if (!(params.pattern_strength >= 0 && params.pattern_strength <= 1)) {
    v.push_back("pattern_strength must be in [0, 1]");
  }
  if (!(params.zipf_s >= 0) || !std::isfinite(params.zipf_s)) {
    v.push_back("zipf_s must be >= 0");
  }
  if (params.tokens_per_batch < 1) v.push_back("tokens_per_batch must be >= 1");
  if (params.num_batches < 1) v.push_back("num_batches must be >= 1");
  if (params.memory < 1) v.push_back("memory must be >= 1");
  if (!v.empty()) throw InvalidSpec(std::move(v));
}

std::vector<std::int64_t> TraceSet::batches() const {
  std::vector<std::int64_t> out;
  for (const auto& t : tokens) {
    if (out.empty() || out.back() != t.batch) out.push_back(t.batch);
  }
  return out;
}

std::vector<std::size_t> TraceSet::batch_tokens(std::int64_t b) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].batch == b) out.push_back(i);
  }
  return out;
}

void validate_trace(const TraceSet& trace) {
  const auto& m = trace.meta;
  if (m.layers < 1 || m.experts < 1 || m.top_k < 1 || m.top_k > m.experts) {
    throw SchemaMismatch("trace metadata needs layers >= 1, experts >= 1 and "
                         "1 <= top_k <= experts");
  }
  for (const auto& t : trace.tokens) {
    if (static_cast<std::int32_t>(t.sel.size()) != m.layers) {
      throw SchemaMismatch("token " + std::to_string(t.token) + " of batch " +
                           std::to_string(t.batch) + " has " +
                           std::to_string(t.sel.size()) + " layers, expected " +
                           std::to_string(m.layers));
    }
    for (const auto& layer : t.sel) {
      if (static_cast<std::int32_t>(layer.size()) != m.top_k) {
        throw SchemaMismatch("token " + std::to_string(t.token) +
                             " has a selection of the wrong length");
      }
      for (ExpertId e : layer) {
        if (e < 0 || e >= m.experts) {
          throw SchemaMismatch("expert index " + std::to_string(e) +
                               " outside [0, " + std::to_string(m.experts) +
                               ")");
        }
      }
    }
  }
}

namespace {

std::uint64_t Mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double Unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

class Categorical {
 public:
  explicit Categorical(const std::vector<double>& weights) {
    cdf_.resize(weights.size());
    std::partial_sum(weights.begin(), weights.end(), cdf_.begin());
  }
  ExpertId operator()(std::mt19937_64& rng) const {
    const double u = Unit(rng) * cdf_.back();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) --it;
    return static_cast<ExpertId>(it - cdf_.begin());
  }

 private:
  std::vector<double> cdf_;
};

std::vector<ExpertId> Permutation(std::int32_t n, std::mt19937_64& rng) {
  std::vector<ExpertId> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

// Balanced per-expert quotas for n tokens with the remainder rotated.
std::vector<std::int64_t> Quotas(std::int64_t n, std::int32_t experts,
                                 std::int64_t rotation) {
  std::vector<std::int64_t> q(experts, n / experts);
  const std::int64_t rem = n % experts;
  for (std::int32_t e = 0; e < experts; ++e) {
    if ((e - rotation % experts + experts) % experts < rem) ++q[e];
  }
  return q;
}

std::vector<ExpertId> Slots(const std::vector<std::int64_t>& quotas,
                            std::mt19937_64& rng) {
  std::vector<ExpertId> slots;
  for (std::size_t e = 0; e < quotas.size(); ++e) {
    slots.insert(slots.end(), static_cast<std::size_t>(quotas[e]),
                 static_cast<ExpertId>(e));
  }
  std::shuffle(slots.begin(), slots.end(), rng);
  return slots;
}

}  // namespace

ExpertId GroundTruth::follow(std::int32_t next_layer,
                             const std::vector<ExpertId>& history) const {
  const std::int32_t i = next_layer - 1;
  std::int64_t ctx = 0;
  for (std::int32_t j = std::max(0, i - (memory - 1)); j < i; ++j) {
    ctx = ctx * experts + history[j];
  }
  return target[next_layer][static_cast<std::size_t>(ctx * experts + history[i])];
}

std::vector<double> GroundTruth::row(std::int32_t next_layer,
                                     const std::vector<ExpertId>& history) const {
  std::vector<double> out(experts);
  for (std::int32_t e = 0; e < experts; ++e) {
    out[e] = (1.0 - pattern_strength) * marginal[next_layer][e];
  }
  out[follow(next_layer, history)] += pattern_strength;
  return out;
}

GeneratedTrace gen_trace(const GeneratorParams& params, const ModelSpec& model,
                         TraceMode mode) {
  validate_params(params);
  const std::int32_t L = model.num_layers;
  const std::int32_t E = model.experts_per_layer;
  const std::int32_t k = model.gating_top_k;
  if (L < 1 || E < 1 || k < 1 || k > E) {
    throw InvalidSpec({"model needs num_layers >= 1, experts_per_layer >= 1 "
                       "and 1 <= gating_top_k <= experts_per_layer"});
  }
  double table = 1;
  for (std::int32_t j = 1; j < params.memory; ++j) table *= E;
  if (table > static_cast<double>(1 << 22)) {
    throw InvalidSpec({"memory too large for the number of experts"});
  }

  GeneratedTrace out;
  GroundTruth& truth = out.truth;
  truth.mode = mode;
  truth.pattern_strength = params.pattern_strength;
  truth.memory = params.memory;
  truth.layers = L;
  truth.experts = E;

  std::mt19937_64 model_rng(Mix(params.effective_model_seed(), 0x51ab));
  for (std::int32_t l = 0; l < L; ++l) {
    // The draw order is the same in both modes so that a training trace and
    // an inference trace with one model seed share their transition maps.
    const std::vector<ExpertId> rank = Permutation(E, model_rng);
    std::vector<double> zipf(E);
    double sum = 0;
    for (std::int32_t e = 0; e < E; ++e) {
      zipf[e] = 1.0 / std::pow(static_cast<double>(rank[e] + 1), params.zipf_s);
      sum += zipf[e];
    }
    for (auto& x : zipf) x /= sum;
    Categorical pick(zipf);
    std::vector<ExpertId> tgt(static_cast<std::size_t>(table) * E);
    for (auto& x : tgt) x = pick(model_rng);
    truth.target.push_back(std::move(tgt));
    truth.marginal.push_back(mode == TraceMode::kInferenceSkewed
                                 ? zipf
                                 : std::vector<double>(E, 1.0 / E));
  }

  TraceSet& trace = out.trace;
  trace.meta.layers = L;
  trace.meta.experts = E;
  trace.meta.top_k = k;
  trace.meta.seed = params.seed;
  trace.meta.mode = mode;
  trace.meta.params = params;

  const std::int64_t T = params.tokens_per_batch;
  const double p = params.pattern_strength;
  std::vector<Categorical> draw;
  for (std::int32_t l = 0; l < L; ++l) draw.emplace_back(truth.marginal[l]);

  for (std::int64_t b = 0; b < params.num_batches; ++b) {
    std::mt19937_64 rng(Mix(params.seed, static_cast<std::uint64_t>(b)));
    std::vector<TokenRecord> batch(static_cast<std::size_t>(T));
    std::vector<std::vector<ExpertId>> history(static_cast<std::size_t>(T));
    for (std::int64_t t = 0; t < T; ++t) {
      batch[t].batch = b;
      batch[t].token = t;
      batch[t].sel.assign(L, {});
    }

    if (mode == TraceMode::kInferenceSkewed) {
      for (std::int64_t t = 0; t < T; ++t) {
        auto& h = history[t];
        for (std::int32_t l = 0; l < L; ++l) {
          ExpertId e;
          if (l == 0) {
            e = draw[0](rng);
          } else {
            const bool follows = Unit(rng) < p;
            e = follows ? truth.follow(l, h) : draw[l](rng);
          }
          h.push_back(e);
          std::vector<ExpertId> sel{e};
          for (std::int32_t r = 1; r < k; ++r) {
            ExpertId extra = -1;
            for (int tries = 0; tries < 1000 && extra < 0; ++tries) {
              const ExpertId c = draw[l](rng);
              if (std::find(sel.begin(), sel.end(), c) == sel.end()) extra = c;
            }
            for (ExpertId c = 0; extra < 0; ++c) {
              if (std::find(sel.begin(), sel.end(), c) == sel.end()) extra = c;
            }
            sel.push_back(extra);
          }
          batch[t].sel[l] = std::move(sel);
        }
      }
    } else {
      std::vector<std::int64_t> order(static_cast<std::size_t>(T));
      std::iota(order.begin(), order.end(), 0);
      for (std::int32_t l = 0; l < L; ++l) {
        auto quota = Quotas(T, E, b * 7 + l * 3);
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<std::int64_t> fillers;
        for (std::int64_t t : order) {
          const double u = Unit(rng);
          if (l > 0 && u < p) {
            const ExpertId target = truth.follow(l, history[t]);
            if (quota[target] > 0) {
              --quota[target];
              history[t].push_back(target);
              continue;
            }
          }
          fillers.push_back(t);
        }
        const auto slots = Slots(quota, rng);
        for (std::size_t i = 0; i < fillers.size(); ++i) {
          history[fillers[i]].push_back(slots[i]);
        }
        // Extra ranks rotate the top-1 choice, which keeps them balanced.
        std::vector<std::int32_t> shifts(E - 1);
        std::iota(shifts.begin(), shifts.end(), 1);
        std::shuffle(shifts.begin(), shifts.end(), rng);
        for (std::int64_t t = 0; t < T; ++t) {
          const ExpertId e = history[t][l];
          std::vector<ExpertId> sel{e};
          for (std::int32_t r = 1; r < k; ++r) sel.push_back((e + shifts[r - 1]) % E);
          batch[t].sel[l] = std::move(sel);
        }
      }
    }
    for (auto& rec : batch) trace.tokens.push_back(std::move(rec));
  }
  return out;
}

std::vector<double> measure_pattern(const TraceSet& trace, std::int32_t k) {
  const std::int32_t L = trace.meta.layers;
  const std::int32_t E = trace.meta.experts;
  if (L < 2) throw TraceTooShort("measure_pattern needs at least two layers");
  if (k < 1) throw std::invalid_argument("measure_pattern: k must be >= 1");
  std::vector<double> out;
  for (std::int32_t i = 0; i + 1 < L; ++i) {
    std::vector<std::vector<std::int64_t>> counts(
        E, std::vector<std::int64_t>(E, 0));
    for (const auto& t : trace.tokens) ++counts[t.top1(i)][t.top1(i + 1)];
    std::int64_t hit = 0;
    std::int64_t total = 0;
    for (std::int32_t g = 0; g < E; ++g) {
      std::vector<ExpertId> next(E);
      std::iota(next.begin(), next.end(), 0);
      std::stable_sort(next.begin(), next.end(), [&](ExpertId a, ExpertId b) {
        return counts[g][a] > counts[g][b];
      });
      for (std::int32_t r = 0; r < std::min(k, E); ++r) hit += counts[g][next[r]];
      for (std::int32_t e = 0; e < E; ++e) total += counts[g][e];
    }
    out.push_back(total ? static_cast<double>(hit) / static_cast<double>(total)
                        : 0.0);
  }
  return out;
}

std::vector<std::vector<double>> expert_marginals(const TraceSet& trace) {
  const std::int32_t L = trace.meta.layers;
  const std::int32_t E = trace.meta.experts;
  std::vector<std::vector<double>> out(L, std::vector<double>(E, 0.0));
  std::vector<double> total(L, 0.0);
  for (const auto& t : trace.tokens) {
    for (std::int32_t l = 0; l < L; ++l) {
      for (ExpertId e : t.sel[l]) {
        out[l][e] += 1;
        total[l] += 1;
      }
    }
  }
  for (std::int32_t l = 0; l < L; ++l) {
    if (total[l] > 0) {
      for (auto& x : out[l]) x /= total[l];
    }
  }
  return out;
}

double skew_ratio(const TraceSet& trace, std::int32_t layer) {
  const auto marg = expert_marginals(trace).at(layer);
  const auto [lo, hi] = std::minmax_element(marg.begin(), marg.end());
  if (*lo <= 0) return std::numeric_limits<double>::infinity();
  return *hi / *lo;
}

BatchAssignment batch_assignment(const TraceSet& trace, std::int64_t batch,
                                 std::int32_t layer,
                                 std::int32_t num_devices) {
  const auto idx = trace.batch_tokens(batch);
  BatchAssignment a;
  a.num_tokens = idx.size();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    a.origin_device.push_back(static_cast<DeviceId>(
        (i * static_cast<std::size_t>(num_devices)) / idx.size()));
    a.selection.push_back(trace.tokens[idx[i]].sel.at(layer));
  }
  return a;
}

}  // namespace linasim::workload
