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

#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "linasim/cli.hpp"

namespace linasim::cli {
namespace {

using nlohmann::json;

// A JSON object whose keys must all be consumed before finish().
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw UsageError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json* raw(const std::string& key) {
    if (!j_.contains(key)) return nullptr;
    used_.insert(key);
    return &j_.at(key);
  }

  Section sub(const std::string& key) {
    const json* v = raw(key);
    if (v == nullptr) throw UsageError(name(key) + ": missing section");
    return Section(*v, name(key));
  }

  void get(const std::string& key, double* out) {
    if (const json* v = raw(key)) {
      if (!v->is_number()) throw UsageError(name(key) + ": expected a number");
      *out = v->get<double>();
    }
  }

  template <typename Int>
  void get_int(const std::string& key, Int* out) {
    if (const json* v = raw(key)) *out = to_int<Int>(*v, name(key));
  }

  void get(const std::string& key, bool* out) {
    if (const json* v = raw(key)) {
      if (!v->is_boolean()) throw UsageError(name(key) + ": expected a boolean");
      *out = v->get<bool>();
    }
  }

  void get(const std::string& key, std::string* out) {
    if (const json* v = raw(key)) {
      if (!v->is_string()) throw UsageError(name(key) + ": expected a string");
      *out = v->get<std::string>();
    }
  }

  template <typename Int>
  void get_int_list(const std::string& key, std::vector<Int>* out) {
    if (const json* v = raw(key)) {
      if (!v->is_array()) throw UsageError(name(key) + ": expected an array");
      out->clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        out->push_back(to_int<Int>((*v)[i], name(key) + "[" + std::to_string(i) + "]"));
      }
    }
  }

  std::vector<std::string> strings(const std::string& key) {
    std::vector<std::string> out;
    if (const json* v = raw(key)) {
      if (!v->is_array()) throw UsageError(name(key) + ": expected an array");
      for (const auto& s : *v) {
        if (!s.is_string()) throw UsageError(name(key) + ": expected strings");
        out.push_back(s.get<std::string>());
      }
    }
    return out;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (used_.count(key) == 0) throw UsageError(name(key) + ": unknown key");
    }
  }

  std::string name(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  template <typename Int>
  static Int to_int(const json& v, const std::string& where) {
    if (v.is_number_unsigned()) {
      const auto u = v.get<std::uint64_t>();
      if (u > static_cast<std::uint64_t>(std::numeric_limits<Int>::max())) {
        throw UsageError(where + ": out of range");
      }
      return static_cast<Int>(u);
    }
    if (v.is_number_integer()) {
      const auto s = v.get<std::int64_t>();
      if (s < static_cast<std::int64_t>(std::numeric_limits<Int>::min()) ||
          (s > 0 && static_cast<std::uint64_t>(s) >
                        static_cast<std::uint64_t>(std::numeric_limits<Int>::max()))) {
        throw UsageError(where + ": out of range");
      }
      return static_cast<Int>(s);
    }
    throw UsageError(where + ": expected an integer");
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

template <typename Enum, typename Parse>
Enum parse_name(const std::string& where, const std::string& name, Parse parse) {
  try {
    return parse(name);
  } catch (const std::invalid_argument& e) {
    throw UsageError(where + ": " + e.what());
  }
}

ClusterSpec parse_cluster(Section s) {
  ClusterSpec c;
  s.get_int("num_devices", &c.num_devices);
  s.get_int("devices_per_node", &c.devices_per_node);
  s.get("inter_node_bw", &c.inter_node_bw);
  s.get("intra_node_bw", &c.intra_node_bw);
  s.get("launch_latency", &c.launch_latency);
  std::string algo = "ring";
  s.get("allreduce_algorithm", &algo);
  if (algo == "ring") {
    c.allreduce_algorithm = AllReduceAlgorithm::kRing;
  } else if (algo == "tree") {
    c.allreduce_algorithm = AllReduceAlgorithm::kTree;
  } else {
    throw UsageError(s.name("allreduce_algorithm") + ": expected ring or tree");
  }
  s.finish();
  return c;
}

ModelSpec parse_model(Section s) {
  ModelSpec m;
  s.get_int("num_layers", &m.num_layers);
  s.get_int("experts_per_layer", &m.experts_per_layer);
  s.get_int("token_embedding_bytes", &m.token_embedding_bytes);
  s.get_int_list("nonexpert_grad_bytes", &m.nonexpert_grad_bytes);
  s.get_int("gating_top_k", &m.gating_top_k);
  s.get_int("expert_param_bytes", &m.expert_param_bytes);
  s.finish();
  return m;
}

CostModel parse_cost(Section s) {
  CostModel c;
  s.get("gate_cost_per_token", &c.gate_cost_per_token);
  s.get("ffn_cost_per_token", &c.ffn_cost_per_token);
  s.get("combine_cost_per_token", &c.combine_cost_per_token);
  s.get("attention_cost_per_token", &c.attention_cost_per_token);
  s.get("expert_swap_cost", &c.expert_swap_cost);
  s.get("sched_phase_cost", &c.sched_phase_cost);
  s.get("resume_signal_cost", &c.resume_signal_cost);
  s.get("backward_compute_factor", &c.backward_compute_factor);
  s.finish();
  return c;
}

// Keys absent from the section keep the values of `base`.
workload::GeneratorParams parse_generator(Section s,
                                          workload::GeneratorParams base) {
  s.get("pattern_strength", &base.pattern_strength);
  s.get("zipf_s", &base.zipf_s);
  s.get_int("tokens_per_batch", &base.tokens_per_batch);
  s.get_int("num_batches", &base.num_batches);
  s.get_int("seed", &base.seed);
  s.get_int("memory", &base.memory);
  if (s.has("model_seed")) {
    std::uint64_t ms = 0;
    s.get_int("model_seed", &ms);
    base.model_seed = ms;
  }
  s.finish();
  return base;
}

SlowdownConfig parse_slowdown(Section s) {
  SlowdownConfig c;
  auto& p = c.params;
  s.get_int("scenarios", &c.scenarios);
  s.get_int("num_devices", &p.num_devices);
  s.get_int("devices_per_node", &p.devices_per_node);
  s.get("inter_node_bw", &p.inter_node_bw);
  s.get("intra_node_bw", &p.intra_node_bw);
  s.get_int("a2a_bytes_per_device", &p.a2a_bytes_per_device);
  s.get("compute_gap", &p.compute_gap);
  s.get_int("max_allreduces", &p.max_allreduces);
  s.get("min_allreduce_ratio", &p.min_allreduce_ratio);
  s.get("max_allreduce_ratio", &p.max_allreduce_ratio);
  s.get("arrival_spread", &p.arrival_spread);
  s.finish();
  if (c.scenarios < 1) throw UsageError(s.name("scenarios") + ": must be >= 1");
  return c;
}

TrainConfig parse_train(Section s) {
  TrainConfig t;
  for (const auto& name : s.strings("policies")) {
    t.policies.push_back(
        parse_name<train::PolicyKind>(s.name("policies"), name, train::parse_policy));
  }
  if (t.policies.empty() && !s.has("slowdown")) {
    t.policies = train::all_policies();
  }
  s.get_int("partition_bytes", &t.policy.partition_bytes);
  s.get_int("allreduce_bucket_bytes", &t.policy.allreduce_bucket_bytes);
  s.get_int("allreduce_streams", &t.policy.allreduce_streams);
  s.get("combine_lookahead", &t.policy.combine_lookahead);
  s.get_int("tokens_per_device", &t.tokens_per_device);
  s.get_int("steps", &t.run.steps);
  s.get("packing", &t.run.packing);
  s.get_int("experts_per_device", &t.run.packing_state.experts_per_device);
  s.get_int("max_experts_per_device", &t.run.packing_state.max_experts_per_device);
  s.get_int("packing_start_step", &t.run.packing_state.start_step);
  s.get_int("packing_cadence", &t.run.packing_state.cadence_steps);
  s.get("include_forward", &t.run.include_forward);
  s.get_int_list("partition_sweep", &t.partition_sweep);
  if (s.has("slowdown")) t.slowdown = parse_slowdown(s.sub("slowdown"));
  s.get("timeline", &t.timeline);
  s.finish();
  if (!s.has("experts_per_device")) t.run.packing_state.experts_per_device = 0;
  if (t.tokens_per_device < 1) {
    throw UsageError(s.name("tokens_per_device") + ": must be >= 1");
  }
  if (t.run.steps < 1) throw UsageError(s.name("steps") + ": must be >= 1");
  for (Bytes b : t.partition_sweep) {
    if (b == 0) throw UsageError(s.name("partition_sweep") + ": sizes must be > 0");
  }
  train::validate_policy(t.policy);
  return t;
}

InferConfig parse_infer(Section s, const std::filesystem::path& base_dir,
                        const std::optional<workload::GeneratorParams>& gen,
                        std::uint64_t seed) {
  InferConfig c;
  for (const auto& name : s.strings("modes")) {
    c.modes.push_back(parse_name<infer::InferenceMode>(
        s.name("modes"), name, infer::parse_inference_mode));
  }
  if (c.modes.empty()) {
    c.modes = {infer::InferenceMode::kIdeal, infer::InferenceMode::kBaseline,
               infer::InferenceMode::kLina};
  }
  s.get_int("max_packed", &c.max_packed);
  s.get_int("path_length", &c.path_length);
  std::string profile;
  s.get("profile", &profile);
  if (!profile.empty()) c.profile = base_dir / profile;
  if (s.has("profile_generator")) {
    // The profiling trace comes from the same model as the workload: it
    // shares the model seed and path parameters unless overridden.
    workload::GeneratorParams base;
    if (gen) {
      base = *gen;
      base.model_seed = gen->effective_model_seed();
    }
    base.seed = seed + 1;
    c.profile_generator = parse_generator(s.sub("profile_generator"), base);
  }
  s.get("timeline", &c.timeline);
  s.finish();
  if (c.profile && c.profile_generator) {
    throw UsageError(s.name("profile") +
                     ": give either profile or profile_generator, not both");
  }
  if (c.max_packed < 1) throw UsageError(s.name("max_packed") + ": must be >= 1");
  if (c.path_length < 1) throw UsageError(s.name("path_length") + ": must be >= 1");
  return c;
}

}  // namespace

ScenarioConfig parse_config(const nlohmann::json& doc,
                            const std::filesystem::path& base_dir,
                            std::optional<std::uint64_t> seed) {
  ScenarioConfig cfg;
  cfg.document = doc;
  if (seed) cfg.document["seed"] = *seed;
  Section root(cfg.document, "");
  root.get_int("seed", &cfg.seed);
  cfg.cluster = parse_cluster(root.sub("cluster"));
  cfg.model = parse_model(root.sub("model"));
  if (root.has("cost")) cfg.cost = parse_cost(root.sub("cost"));

  if (root.has("workload")) {
    Section w = root.sub("workload");
    WorkloadConfig wc;
    std::string mode = std::string(workload::to_string(wc.mode));
    w.get("mode", &mode);
    wc.mode = parse_name<workload::TraceMode>(w.name("mode"), mode, workload::parse_mode);
    if (w.has("generator")) {
      workload::GeneratorParams base;
      base.seed = cfg.seed;
      wc.generator = parse_generator(w.sub("generator"), base);
      workload::validate_params(*wc.generator);
    }
    std::string trace;
    w.get("trace", &trace);
    if (!trace.empty()) wc.trace = base_dir / trace;
    w.finish();
    if (wc.generator.has_value() == wc.trace.has_value()) {
      throw UsageError("workload: give exactly one of generator and trace");
    }
    cfg.workload = wc;
  }
  if (root.has("train")) cfg.train = parse_train(root.sub("train"));
  if (root.has("infer")) {
    std::optional<workload::GeneratorParams> gen;
    if (cfg.workload) gen = cfg.workload->generator;
    cfg.infer = parse_infer(root.sub("infer"), base_dir, gen, cfg.seed);
    if (cfg.infer->profile_generator) {
      workload::validate_params(*cfg.infer->profile_generator);
    }
  }
  root.finish();
  validate_spec(cfg.cluster, cfg.model, cfg.cost);
  return cfg;
}

ScenarioConfig load_config(const std::filesystem::path& path,
                           std::optional<std::uint64_t> seed) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
  return parse_config(doc, path.parent_path(), seed);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* kDigits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = kDigits[v & 0xf];
  return s;
}

std::string config_hash(const ScenarioConfig& config) {
  return hex64(fnv1a(config.document.dump()));
}

}  // namespace linasim::cli
