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
#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <string>

#include "linasim/errors.hpp"
#include "linasim/infersched.hpp"

namespace linasim::infer {
namespace {

using nlohmann::json;

constexpr const char* kProfileFormat = "linasim-profile";
constexpr int kProfileVersion = 1;

std::vector<double> Normalize(const std::vector<double>& counts) {
  double total = 0;
  for (double c : counts) total += c;
  std::vector<double> out(counts.size(), 0.0);
  if (total <= 0) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(out.size()));
    return out;
  }
  for (std::size_t i = 0; i < counts.size(); ++i) out[i] = counts[i] / total;
  return out;
}

}  // namespace

PopularityProfile::PopularityProfile(std::int32_t path_length,
                                     std::int32_t layers, std::int32_t experts)
    : path_length_(path_length),
      layers_(layers),
      experts_(experts),
      table_(static_cast<std::size_t>(std::max(layers, 0))),
      marginal_(static_cast<std::size_t>(std::max(layers, 0)),
                std::vector<double>(static_cast<std::size_t>(std::max(experts, 1)),
                                    1.0 / std::max(experts, 1))) {
  if (path_length < 1) throw InvalidSpec({"path_length must be >= 1"});
  if (layers < 1 || experts < 1) {
    throw InvalidSpec({"profile needs at least one layer and one expert"});
  }
}

void PopularityProfile::set(std::int32_t next_layer, const Path& path,
                            std::vector<double> dist) {
  if (next_layer < 1 || next_layer >= layers_) {
    throw std::out_of_range("profile layer out of range");
  }
  if (path.empty() || static_cast<std::int32_t>(path.size()) > path_length_ ||
      static_cast<std::int32_t>(path.size()) > next_layer) {
    throw std::invalid_argument("bad path length");
  }
  if (static_cast<std::int32_t>(dist.size()) != experts_) {
    throw std::invalid_argument("distribution size differs from experts");
  }
  table_[next_layer][path] = std::move(dist);
}

const std::vector<double>* PopularityProfile::find(std::int32_t next_layer,
                                                   const Path& path) const {
  if (next_layer < 0 || next_layer >= layers_) return nullptr;
  const auto& m = table_[next_layer];
  auto it = m.find(path);
  return it == m.end() ? nullptr : &it->second;
}

void PopularityProfile::set_marginal(std::int32_t layer,
                                     std::vector<double> dist) {
  if (static_cast<std::int32_t>(dist.size()) != experts_) {
    throw std::invalid_argument("distribution size differs from experts");
  }
  marginal_.at(layer) = std::move(dist);
}

const std::vector<double>& PopularityProfile::marginal(
    std::int32_t layer) const {
  return marginal_.at(layer);
}

const std::vector<double>& PopularityProfile::lookup(
    std::int32_t next_layer, const std::vector<ExpertId>& history,
    std::int32_t* matched_length) const {
  const auto avail = std::min<std::int32_t>(
      {path_length_, next_layer, static_cast<std::int32_t>(history.size())});
  for (std::int32_t m = avail; m >= 1; --m) {
    Path key(history.begin() + (next_layer - m),
             history.begin() + next_layer);
    if (const auto* d = find(next_layer, key)) {
      if (matched_length) *matched_length = m;
      return *d;
    }
  }
  if (matched_length) *matched_length = 0;
  return marginal(next_layer);
}

std::size_t PopularityProfile::size() const {
  std::size_t n = 0;
  for (const auto& m : table_) n += m.size();
  return n;
}

PopularityProfile build_profile(const workload::TraceSet& trace,
                                std::int32_t path_length) {
  const auto& meta = trace.meta;
  if (path_length < 1) throw InvalidSpec({"path_length must be >= 1"});
  if (meta.layers < path_length + 1) {
    throw TraceTooShort("trace has " + std::to_string(meta.layers) +
                        " layers, profile needs " +
                        std::to_string(path_length + 1));
  }
  PopularityProfile profile(path_length, meta.layers, meta.experts);
  const auto experts = static_cast<std::size_t>(meta.experts);
  const double w = 1.0 / meta.top_k;

  std::vector<std::vector<double>> marg(
      static_cast<std::size_t>(meta.layers), std::vector<double>(experts, 0.0));
  std::vector<std::map<Path, std::vector<double>>> counts(
      static_cast<std::size_t>(meta.layers));
  Path key;
  for (const auto& tok : trace.tokens) {
    for (std::int32_t n = 0; n < meta.layers; ++n) {
      const auto& sel = tok.sel[n];
      for (ExpertId e : sel) marg[n][e] += w;
      const auto maxlen = std::min(path_length, n);
      for (std::int32_t m = 1; m <= maxlen; ++m) {
        key.clear();
        for (std::int32_t j = n - m; j < n; ++j) key.push_back(tok.sel[j][0]);
        auto& row = counts[n][key];
        if (row.empty()) row.assign(experts, 0.0);
        for (ExpertId e : sel) row[e] += w;
      }
    }
  }
  for (std::int32_t n = 0; n < meta.layers; ++n) {
    profile.set_marginal(n, Normalize(marg[n]));
    for (auto& [path, row] : counts[n]) profile.set(n, path, Normalize(row));
  }
  return profile;
}

void save_profile(const PopularityProfile& profile, std::ostream& os) {
  json j = {{"format", kProfileFormat},
            {"version", kProfileVersion},
            {"path_length", profile.path_length()},
            {"layers", profile.layers()},
            {"experts", profile.experts()}};
  json marg = json::array();
  for (std::int32_t n = 0; n < profile.layers(); ++n) {
    marg.push_back(profile.marginal(n));
  }
  j["marginals"] = std::move(marg);
  json paths = json::array();
  for (std::int32_t n = 1; n < profile.layers(); ++n) {
    for (const auto& [path, dist] : profile.entries(n)) {
      json sparse = json::array();
      for (std::size_t e = 0; e < dist.size(); ++e) {
        if (dist[e] > 0) sparse.push_back({e, dist[e]});
      }
      paths.push_back({{"layer", n}, {"path", path}, {"dist", sparse}});
    }
  }
  j["paths"] = std::move(paths);
  os << j.dump(1) << '\n';
}

void save_profile(const PopularityProfile& profile,
                  const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  save_profile(profile, os);
}

PopularityProfile load_profile(std::istream& is) {
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ParseError(1, e.what());
  }
  try {
    if (j.at("format") != kProfileFormat) {
      throw SchemaMismatch("not a profile file");
    }
    if (j.at("version").get<int>() != kProfileVersion) {
      throw SchemaMismatch("unsupported profile version " +
                           j["version"].dump());
    }
    PopularityProfile p(j.at("path_length").get<std::int32_t>(),
                        j.at("layers").get<std::int32_t>(),
                        j.at("experts").get<std::int32_t>());
    const auto& marg = j.at("marginals");
    if (static_cast<std::int32_t>(marg.size()) != p.layers()) {
      throw SchemaMismatch("marginal count differs from layers");
    }
    for (std::int32_t n = 0; n < p.layers(); ++n) {
      p.set_marginal(n, marg[n].get<std::vector<double>>());
    }
    for (const auto& entry : j.at("paths")) {
      std::vector<double> dist(static_cast<std::size_t>(p.experts()), 0.0);
      for (const auto& kv : entry.at("dist")) {
        const auto e = kv.at(0).get<std::size_t>();
        if (e >= dist.size()) throw SchemaMismatch("expert id out of range");
        dist[e] = kv.at(1).get<double>();
      }
      p.set(entry.at("layer").get<std::int32_t>(),
            entry.at("path").get<Path>(), std::move(dist));
    }
    return p;
  } catch (const json::exception& e) {
    throw SchemaMismatch(std::string("malformed profile: ") + e.what());
  } catch (const std::logic_error& e) {
    throw SchemaMismatch(std::string("malformed profile: ") + e.what());
  }
}

PopularityProfile load_profile(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  return load_profile(is);
}

PopularityEstimate estimate_popularity(
    const PopularityProfile& profile,
    const std::vector<std::vector<ExpertId>>& histories, std::int32_t layer,
    std::int32_t k) {
  const std::int32_t next = layer + 1;
  if (next < profile.path_length()) {
    throw LayerTooEarly("estimation for layer " + std::to_string(next) +
                        " needs a path of " +
                        std::to_string(profile.path_length()) + " layers");
  }
  if (next >= profile.layers()) {
    throw std::out_of_range("no layer after " + std::to_string(layer));
  }
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  const auto experts = static_cast<std::size_t>(profile.experts());
  PopularityEstimate est;
  est.popularity.assign(experts, 0.0);
  est.token_top_k.reserve(histories.size());
  if (histories.empty()) return est;
  const double nt = static_cast<double>(histories.size());
  std::vector<ExpertId> order(experts);
  for (const auto& h : histories) {
    if (static_cast<std::int32_t>(h.size()) < next) {
      throw std::invalid_argument("history shorter than the estimated layer");
    }
    const auto& dist = profile.lookup(next, h);
    for (std::size_t e = 0; e < experts; ++e) order[e] = static_cast<ExpertId>(e);
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), experts);
    std::partial_sort(order.begin(), order.begin() + take, order.end(),
                      [&](ExpertId a, ExpertId b) {
                        if (dist[a] != dist[b]) return dist[a] > dist[b];
                        return a < b;
                      });
    std::vector<ExpertId> top(order.begin(), order.begin() + take);
    for (ExpertId e : top) est.popularity[e] += dist[e] / nt;
    est.token_top_k.push_back(std::move(top));
  }
  return est;
}

}  // namespace linasim::infer
