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
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <string>

#include "linasim/errors.hpp"
#include "linasim/workload.hpp"

namespace linasim::workload {
namespace {

using nlohmann::json;

constexpr const char* kTraceFormat = "linasim-trace";
constexpr int kTraceVersion = 1;

json ParamsToJson(const GeneratorParams& p) {
  json j = {{"pattern_strength", p.pattern_strength},
            {"zipf_s", p.zipf_s},
            {"tokens_per_batch", p.tokens_per_batch},
            {"num_batches", p.num_batches},
            {"seed", p.seed},
            {"memory", p.memory}};
  if (p.model_seed) j["model_seed"] = *p.model_seed;
  return j;
}

GeneratorParams ParamsFromJson(const json& j) {
  GeneratorParams p;
  p.pattern_strength = j.at("pattern_strength").get<double>();
  p.zipf_s = j.at("zipf_s").get<double>();
  p.tokens_per_batch = j.at("tokens_per_batch").get<std::int64_t>();
  p.num_batches = j.at("num_batches").get<std::int64_t>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.memory = j.at("memory").get<std::int32_t>();
  if (j.contains("model_seed")) p.model_seed = j["model_seed"].get<std::uint64_t>();
  return p;
}

std::ofstream OpenOut(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  return os;
}

std::ifstream OpenIn(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  return is;
}

}  // namespace

void save_trace(const TraceSet& trace, std::ostream& os) {
  json meta = {{"format", kTraceFormat},
               {"version", kTraceVersion},
               {"layers", trace.meta.layers},
               {"experts", trace.meta.experts},
               {"top_k", trace.meta.top_k},
               {"seed", trace.meta.seed}};
  if (trace.meta.mode) meta["mode"] = std::string(to_string(*trace.meta.mode));
  if (trace.meta.params) meta["params"] = ParamsToJson(*trace.meta.params);
  os << meta.dump() << '\n';
  for (const auto& t : trace.tokens) {
    json line = {{"b", t.batch}, {"t", t.token}, {"sel", t.sel}};
    os << line.dump() << '\n';
  }
}

void save_trace(const TraceSet& trace, const std::filesystem::path& path) {
  auto os = OpenOut(path);
  save_trace(trace, os);
}

TraceSet load_trace(std::istream& is) {
  TraceSet trace;
  std::string line;
  std::size_t lineno = 0;
  bool have_meta = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(lineno, e.what());
    }
    if (!j.is_object()) throw ParseError(lineno, "expected a JSON object");
    if (!have_meta) {
      try {
        trace.meta.layers = j.at("layers").get<std::int32_t>();
        trace.meta.experts = j.at("experts").get<std::int32_t>();
        trace.meta.top_k = j.at("top_k").get<std::int32_t>();
        trace.meta.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("version") && j["version"].get<int>() != kTraceVersion) {
          throw SchemaMismatch("unsupported trace version " +
                               j["version"].dump());
        }
        if (j.contains("mode")) {
          trace.meta.mode = parse_mode(j["mode"].get<std::string>());
        }
        if (j.contains("params")) trace.meta.params = ParamsFromJson(j["params"]);
      } catch (const json::exception& e) {
        throw SchemaMismatch("line " + std::to_string(lineno) +
                             ": bad trace metadata: " + e.what());
      } catch (const std::invalid_argument& e) {
        throw SchemaMismatch("line " + std::to_string(lineno) + ": " + e.what());
      }
      have_meta = true;
      validate_trace(trace);
      continue;
    }
    TokenRecord rec;
    try {
      rec.batch = j.at("b").get<std::int64_t>();
      rec.token = j.at("t").get<std::int64_t>();
      rec.sel = j.at("sel").get<std::vector<std::vector<ExpertId>>>();
    } catch (const json::exception& e) {
      throw ParseError(lineno, e.what());
    }
    trace.tokens.push_back(std::move(rec));
    try {
      TraceSet one;
      one.meta = trace.meta;
      one.tokens.push_back(trace.tokens.back());
      validate_trace(one);
    } catch (const SchemaMismatch& e) {
      throw SchemaMismatch("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_meta) throw ParseError(lineno + 1, "missing metadata line");
  return trace;
}

TraceSet load_trace(const std::filesystem::path& path) {
  auto is = OpenIn(path);
  return load_trace(is);
}

void save_ground_truth(const GroundTruth& truth, std::ostream& os) {
  json j = {{"format", "linasim-ground-truth"},
            {"version", 1},
            {"mode", std::string(to_string(truth.mode))},
            {"pattern_strength", truth.pattern_strength},
            {"memory", truth.memory},
            {"layers", truth.layers},
            {"experts", truth.experts},
            {"marginal", truth.marginal},
            {"target", truth.target}};
  os << j.dump(2) << '\n';
}

void save_ground_truth(const GroundTruth& truth,
                       const std::filesystem::path& path) {
  auto os = OpenOut(path);
  save_ground_truth(truth, os);
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  auto is = OpenIn(path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ParseError(1, e.what());
  }
  GroundTruth t;
  try {
    t.mode = parse_mode(j.at("mode").get<std::string>());
    t.pattern_strength = j.at("pattern_strength").get<double>();
    t.memory = j.at("memory").get<std::int32_t>();
    t.layers = j.at("layers").get<std::int32_t>();
    t.experts = j.at("experts").get<std::int32_t>();
    t.marginal = j.at("marginal").get<std::vector<std::vector<double>>>();
    t.target = j.at("target").get<std::vector<std::vector<ExpertId>>>();
  } catch (const json::exception& e) {
    throw SchemaMismatch(std::string("bad ground truth: ") + e.what());
  }
  return t;
}

}  // namespace linasim::workload
