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
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "linasim/cli.hpp"
#include "linasim/engine.hpp"

namespace linasim::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json header(const ScenarioConfig& config, std::string_view command) {
  json j;
  j["format"] = kSummaryFormat;
  j["version"] = kSummaryVersion;
  j["command"] = command;
  j["config_hash"] = config_hash(config);
  j["seed"] = config.seed;
  return j;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
}

const WorkloadConfig& need_workload(const ScenarioConfig& config,
                                    std::string_view command) {
  if (!config.workload) {
    throw UsageError(std::string(command) + " needs a workload section");
  }
  return *config.workload;
}

json samples(const std::vector<double>& v) {
  json j = json::object();
  j["count"] = v.size();
  j["mean"] = v.empty() ? json(nullptr)
                        : json(std::accumulate(v.begin(), v.end(), 0.0) /
                               static_cast<double>(v.size()));
  j["median"] = finite_or_null(quantile(v, 0.5));
  j["p95"] = finite_or_null(quantile(v, 0.95));
  j["max"] = v.empty() ? json(nullptr) : json(*std::max_element(v.begin(), v.end()));
  return j;
}

std::string_view pass_name(train::Pass p) {
  return p == train::Pass::kForward ? "forward" : "backward";
}

std::string_view stage_name(train::Stage s) {
  return s == train::Stage::kA2AFirst ? "dispatch" : "combine";
}

json step_summary(const train::TrainingRun& run) {
  const auto& m = run.last;
  json j;
  j["step_time"] = m.report.step_time;
  j["step_times"] = run.step_times;
  j["packing_trajectory"] = run.packing_trajectory;
  j["pipelining_efficiency"] = m.report.pipelining_efficiency;
  j["ffn_micro_time"] = m.ffn_micro_time;
  j["a2a_micro_time"] = m.a2a_micro_time;
  json layers = json::array();
  for (const auto& l : m.report.moe_layer_times) {
    layers.push_back({{"layer", l.layer}, {"forward", l.forward}, {"backward", l.backward}});
  }
  j["moe_layer_times"] = layers;
  json a2a = json::array();
  std::vector<double> slow;
  for (const auto& a : m.all_to_all) {
    a2a.push_back({{"layer", a.layer},
                   {"pass", pass_name(a.pass)},
                   {"exchange", stage_name(a.stage)},
                   {"micro_ops", a.micro_ops},
                   {"start", a.first_start},
                   {"end", a.last_end},
                   {"duration", a.duration},
                   {"isolated", a.isolated},
                   {"slowdown", a.slowdown()}});
    slow.push_back(a.slowdown());
  }
  j["all_to_all"] = a2a;
  j["slowdown"] = samples(slow);
  json ar = json::array();
  double first_end = std::numeric_limits<double>::quiet_NaN();
  OpId first_group = std::numeric_limits<OpId>::max();
  for (const auto& a : m.all_reduce) {
    ar.push_back({{"layer", a.layer}, {"bytes", a.bytes}, {"start", a.first_start}, {"end", a.end}});
    if (a.group < first_group) {
      first_group = a.group;
      first_end = a.end;
    }
  }
  j["all_reduce"] = ar;
  j["first_allreduce_end"] = finite_or_null(first_end);
  double gate_end = 0;
  for (const auto& r : m.report.records) {
    if (r.kind != RecordKind::kCompute) continue;
    if (train::role_pass(r.tag.role) == train::Pass::kBackward &&
        train::role_stage(r.tag.role) == train::Stage::kGate) {
      gate_end = std::max(gate_end, r.end);
    }
  }
  j["backward_gate_end"] = gate_end;
  return j;
}

void write_timeline(const SimReport& report, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  sim::write_timeline_csv(report, out);
}

}  // namespace

double quantile(std::vector<double> sample, double q) {
  if (sample.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(sample.begin(), sample.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(sample.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sample.size() - 1);
  return sample[lo] + (pos - static_cast<double>(lo)) * (sample[hi] - sample[lo]);
}

std::string dump_summary(const json& summary) { return summary.dump(2) + "\n"; }

void write_summary(const json& summary, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << dump_summary(summary);
}

workload::GeneratedTrace resolve_trace(const ScenarioConfig& config) {
  const auto& w = need_workload(config, "this command");
  if (w.generator) return workload::gen_trace(*w.generator, config.model, w.mode);
  workload::GeneratedTrace g;
  g.trace = workload::load_trace(*w.trace);
  return g;
}

std::optional<infer::PopularityProfile> resolve_profile(
    const ScenarioConfig& config) {
  if (!config.infer) return std::nullopt;
  const auto& c = *config.infer;
  if (c.profile) return infer::load_profile(*c.profile);
  if (c.profile_generator) {
    const auto g = workload::gen_trace(*c.profile_generator, config.model,
                                       workload::TraceMode::kTrainingBalanced);
    return infer::build_profile(g.trace, c.path_length);
  }
  return std::nullopt;
}

json cmd_gen_trace(const ScenarioConfig& config, const fs::path& out_dir) {
  const auto& w = need_workload(config, "gen-trace");
  if (!w.generator) throw UsageError("gen-trace needs workload.generator");
  const auto g = workload::gen_trace(*w.generator, config.model, w.mode);
  ensure_dir(out_dir);
  std::ostringstream trace_bytes;
  workload::save_trace(g.trace, trace_bytes);
  std::ostringstream truth_bytes;
  workload::save_ground_truth(g.truth, truth_bytes);
  {
    std::ofstream out(out_dir / "trace.jsonl", std::ios::binary);
    out << trace_bytes.str();
    std::ofstream t(out_dir / "ground_truth.json", std::ios::binary);
    t << truth_bytes.str();
    if (!out || !t) throw Error("cannot write trace files under " + out_dir.string());
  }
  json j = header(config, "gen-trace");
  json t;
  t["mode"] = workload::to_string(w.mode);
  t["layers"] = g.trace.meta.layers;
  t["experts"] = g.trace.meta.experts;
  t["top_k"] = g.trace.meta.top_k;
  t["batches"] = g.trace.batches().size();
  t["tokens"] = g.trace.tokens.size();
  t["file"] = "trace.jsonl";
  t["hash"] = hex64(fnv1a(trace_bytes.str()));
  t["ground_truth"] = "ground_truth.json";
  t["ground_truth_hash"] = hex64(fnv1a(truth_bytes.str()));
  json skew = json::array();
  for (std::int32_t l = 0; l < g.trace.meta.layers; ++l) {
    skew.push_back(finite_or_null(workload::skew_ratio(g.trace, l)));
  }
  t["skew"] = skew;
  if (g.trace.meta.layers >= 2) {
    t["pattern_top1"] = workload::measure_pattern(g.trace, 1);
  }
  j["trace"] = t;
  write_summary(j, out_dir / "summary.json");
  return j;
}

json cmd_build_profile(const ScenarioConfig& config, const fs::path& out_dir) {
  const auto g = resolve_trace(config);
  const std::int32_t l = config.infer ? config.infer->path_length : 3;
  const auto profile = infer::build_profile(g.trace, l);
  ensure_dir(out_dir);
  std::ostringstream bytes;
  infer::save_profile(profile, bytes);
  {
    std::ofstream out(out_dir / "profile.json", std::ios::binary);
    out << bytes.str();
    if (!out) throw Error("cannot write " + (out_dir / "profile.json").string());
  }
  json j = header(config, "build-profile");
  j["profile"] = {{"file", "profile.json"},
                  {"path_length", profile.path_length()},
                  {"layers", profile.layers()},
                  {"experts", profile.experts()},
                  {"paths", profile.size()},
                  {"hash", hex64(fnv1a(bytes.str()))}};
  write_summary(j, out_dir / "summary.json");
  return j;
}

json cmd_train_sim(const ScenarioConfig& config, const fs::path& out_dir) {
  if (!config.train) throw UsageError("train-sim needs a train section");
  const auto& t = *config.train;
  ensure_dir(out_dir);
  json j = header(config, "train-sim");
  json policies = json::array();
  std::map<train::PolicyKind, double> step;
  for (auto kind : t.policies) {
    auto policy = t.policy;
    policy.kind = kind;
    train::TrainingRun run;
    try {
      run = train::simulate_training(config.model, config.cluster, config.cost,
                                     t.tokens_per_device, policy, t.run);
    } catch (const Error& e) {
      throw Error(std::string(train::to_string(kind)) + ": " + e.what());
    }
    json p = step_summary(run);
    p["policy"] = train::to_string(kind);
    step[kind] = run.last.report.step_time;
    if (t.timeline) {
      const std::string file = "timeline_" + std::string(train::to_string(kind)) + ".csv";
      write_timeline(run.last.report, out_dir / file);
      p["timeline"] = file;
    }
    policies.push_back(p);
  }
  j["policies"] = policies;
  if (step.count(train::PolicyKind::kBaseline)) {
    json speedup = json::object();
    for (const auto& [kind, s] : step) {
      speedup[std::string(train::to_string(kind))] =
          s > 0 ? step[train::PolicyKind::kBaseline] / s : 0.0;
    }
    j["speedup_vs_baseline"] = speedup;
  }
  if (!t.partition_sweep.empty()) {
    json sweep = json::array();
    for (Bytes b : t.partition_sweep) {
      auto policy = t.policy;
      policy.kind = train::PolicyKind::kLina;
      policy.partition_bytes = b;
      const auto run = train::simulate_training(config.model, config.cluster,
                                                config.cost, t.tokens_per_device,
                                                policy, t.run);
      sweep.push_back({{"partition_bytes", b}, {"step_time", run.last.report.step_time}});
    }
    j["partition_sweep"] = sweep;
  }
  if (t.slowdown) {
    std::vector<double> all;
    for (std::int32_t i = 0; i < t.slowdown->scenarios; ++i) {
      const auto s = train::sample_slowdowns(t.slowdown->params,
                                             config.seed + static_cast<std::uint64_t>(i));
      all.insert(all.end(), s.begin(), s.end());
    }
    json cdf = samples(all);
    cdf["scenarios"] = t.slowdown->scenarios;
    json q = json::array();
    for (int i = 0; i <= 20; ++i) {
      q.push_back({{"q", i / 20.0}, {"slowdown", quantile(all, i / 20.0)}});
    }
    cdf["quantiles"] = q;
    j["slowdown_cdf"] = cdf;
  }
  write_summary(j, out_dir / "summary.json");
  return j;
}

json cmd_infer_sim(const ScenarioConfig& config, const fs::path& out_dir) {
  if (!config.infer) throw UsageError("infer-sim needs an infer section");
  need_workload(config, "infer-sim");
  const auto& c = *config.infer;
  const auto g = resolve_trace(config);
  const auto profile = resolve_profile(config);
  ensure_dir(out_dir);

  std::vector<infer::InferenceMode> modes = c.modes;
  if (std::find(modes.begin(), modes.end(), infer::InferenceMode::kIdeal) == modes.end()) {
    modes.insert(modes.begin(), infer::InferenceMode::kIdeal);
  }
  json j = header(config, "infer-sim");
  json skew = json::array();
  for (std::int32_t l = 0; l < g.trace.meta.layers; ++l) {
    skew.push_back(finite_or_null(workload::skew_ratio(g.trace, l)));
  }
  j["workload"] = {{"batches", g.trace.batches().size()},
                   {"tokens", g.trace.tokens.size()},
                   {"skew", skew}};
  if (profile) j["profile_path_length"] = profile->path_length();

  std::map<infer::InferenceMode, infer::InferenceRun> runs;
  for (auto mode : modes) {
    infer::InferenceOptions o;
    o.mode = mode;
    o.max_packed = c.max_packed;
    o.seed = config.seed;
    o.path_length = c.path_length;
    runs[mode] = infer::simulate_inference(config.model, config.cluster, config.cost,
                                           g.trace, profile ? &*profile : nullptr, o);
  }
  const auto& ideal = runs.at(infer::InferenceMode::kIdeal).inference_times;
  const double ideal_p50 = quantile(ideal, 0.5);
  const double ideal_p95 = quantile(ideal, 0.95);
  json out = json::array();
  for (auto mode : modes) {
    const auto& r = runs.at(mode);
    json m;
    m["mode"] = infer::to_string(mode);
    m["inference_times"] = r.inference_times;
    m["p50"] = quantile(r.inference_times, 0.5);
    m["p95"] = quantile(r.inference_times, 0.95);
    m["normalized_p50"] = finite_or_null(m["p50"].get<double>() / ideal_p50);
    m["normalized_p95"] = finite_or_null(m["p95"].get<double>() / ideal_p95);
    m["estimation_accuracy"] = r.estimation_accuracy;
    m["finetune_rate"] = r.finetune_rate;
    m["scheduled_layers"] = r.scheduled_layers;
    json acc = json::array();
    for (double a : r.layer_accuracy) acc.push_back(finite_or_null(a));
    m["layer_accuracy"] = acc;
    m["layer_all_to_all"] = r.layer_all_to_all;
    if (c.timeline) {
      const std::string file = "timeline_" + std::string(infer::to_string(mode)) + ".csv";
      write_timeline(r.last_report, out_dir / file);
      m["timeline"] = file;
    }
    out.push_back(m);
  }
  j["modes"] = out;
  write_summary(j, out_dir / "summary.json");
  return j;
}

json cmd_report(const std::vector<fs::path>& inputs, std::ostream& text,
                std::ostream* csv) {
  if (inputs.empty()) throw UsageError("report needs at least one summary file");
  std::string all_bytes;
  struct Row {
    std::string section, source, name, metric;
    json value;
  };
  std::vector<Row> rows;
  for (const auto& path : inputs) {
    const std::string bytes = read_file(path);
    all_bytes += bytes;
    json s;
    try {
      s = json::parse(bytes);
    } catch (const json::parse_error& e) {
      throw ParseError(0, path.string() + ": " + e.what());
    }
    if (!s.is_object() || s.value("format", "") != kSummaryFormat) {
      throw SchemaMismatch(path.string() + " is not a linasim summary");
    }
    if (!s.contains("version") || s["version"] != kSummaryVersion) {
      throw SchemaMismatch(path.string() + " has summary version " +
                           s.value("version", json(nullptr)).dump() +
                           ", expected " + std::to_string(kSummaryVersion));
    }
    const std::string src = path.filename().string() == "summary.json"
                                ? path.parent_path().filename().string()
                                : path.filename().string();
    const std::string cmd = s.value("command", "");
    auto add = [&](const std::string& section, const std::string& name,
                   const std::string& metric, const json& v) {
      rows.push_back({section, src, name, metric, v});
    };
    if (cmd == "train-sim") {
      for (const auto& p : s.value("policies", json::array())) {
        const std::string name = p.value("policy", "");
        add("train", name, "step_time", p["step_time"]);
        add("train", name, "pipelining_efficiency", p["pipelining_efficiency"]);
        add("train", name, "median_slowdown", p["slowdown"]["median"]);
        if (s.contains("speedup_vs_baseline")) {
          add("train", name, "speedup_vs_baseline", s["speedup_vs_baseline"].value(name, json(nullptr)));
        }
      }
      if (s.contains("slowdown_cdf")) {
        add("train", "slowdown_cdf", "median", s["slowdown_cdf"]["median"]);
        add("train", "slowdown_cdf", "max", s["slowdown_cdf"]["max"]);
      }
    } else if (cmd == "infer-sim") {
      for (const auto& m : s.value("modes", json::array())) {
        const std::string name = m.value("mode", "");
        for (const char* key : {"normalized_p50", "normalized_p95", "p50", "p95",
                                "estimation_accuracy", "finetune_rate"}) {
          add("infer", name, key, m[key]);
        }
      }
    } else {
      add("other", cmd, "config_hash", s.value("config_hash", ""));
    }
  }
  const std::string inputs_hash = hex64(fnv1a(all_bytes));

  auto cell = [](const json& v) {
    if (v.is_number_float()) {
      std::ostringstream ss;
      ss << std::setprecision(6) << v.get<double>();
      return ss.str();
    }
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
  };
  if (csv != nullptr) {
    *csv << "section,source,name,metric,value\n";
    for (const auto& r : rows) {
      *csv << r.section << ',' << r.source << ',' << r.name << ',' << r.metric << ','
           << (r.value.is_string() ? r.value.get<std::string>() : r.value.dump()) << '\n';
    }
  }
  for (const char* section : {"train", "infer", "other"}) {
    std::vector<const Row*> sec;
    for (const auto& r : rows) {
      if (r.section == section) sec.push_back(&r);
    }
    if (sec.empty()) continue;
    std::size_t w0 = 6, w1 = 4, w2 = 6;
    for (const Row* r : sec) {
      w0 = std::max(w0, r->source.size());
      w1 = std::max(w1, r->name.size());
      w2 = std::max(w2, r->metric.size());
    }
    text << "[" << section << "]\n";
    text << std::left << std::setw(static_cast<int>(w0 + 2)) << "source"
         << std::setw(static_cast<int>(w1 + 2)) << "name"
         << std::setw(static_cast<int>(w2 + 2)) << "metric" << "value\n";
    for (const Row* r : sec) {
      text << std::left << std::setw(static_cast<int>(w0 + 2)) << r->source
           << std::setw(static_cast<int>(w1 + 2)) << r->name
           << std::setw(static_cast<int>(w2 + 2)) << r->metric << cell(r->value) << "\n";
    }
    text << "\n";
  }
  text << "inputs_hash " << inputs_hash << "\n";
  json j;
  j["format"] = kSummaryFormat;
  j["version"] = kSummaryVersion;
  j["command"] = "report";
  j["inputs"] = inputs.size();
  j["inputs_hash"] = inputs_hash;
  j["rows"] = rows.size();
  return j;
}

}  // namespace linasim::cli
