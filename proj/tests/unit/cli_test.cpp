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

#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "linasim/cli.hpp"
#include "linasim/errors.hpp"

namespace linasim::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json SmallTrain() {
  return json::parse(R"({
    "seed": 3,
    "cluster": {"num_devices": 8, "devices_per_node": 4},
    "model": {"num_layers": 2, "experts_per_layer": 8, "token_embedding_bytes": 4096,
              "nonexpert_grad_bytes": [20000000], "gating_top_k": 2},
    "cost": {"attention_cost_per_token": 1e-6, "ffn_cost_per_token": 5e-7},
    "train": {"policies": ["baseline", "lina"], "tokens_per_device": 2048}
  })");
}

json SmallInfer() {
  return json::parse(R"({
    "seed": 4,
    "cluster": {"num_devices": 4, "devices_per_node": 2},
    "model": {"num_layers": 4, "experts_per_layer": 8, "token_embedding_bytes": 4096},
    "cost": {"attention_cost_per_token": 1e-5, "ffn_cost_per_token": 1e-5},
    "workload": {"mode": "inference_skewed",
                 "generator": {"pattern_strength": 0.6, "zipf_s": 0.8,
                               "tokens_per_batch": 128, "num_batches": 4}},
    "infer": {"path_length": 1, "profile_generator": {"num_batches": 4}}
  })");
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("linasim_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path Write(const std::string& name, const json& j) {
    const auto p = dir_ / name;
    std::ofstream(p) << j.dump();
    return p;
  }

  int Run(std::vector<std::string> args) {
    std::vector<const char*> argv = {"linasim"};
    for (const auto& a : args) argv.push_back(a.c_str());
    out_.str("");
    err_.str("");
    return run(static_cast<int>(argv.size()), argv.data(), out_, err_);
  }

  std::string Read(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

TEST_F(CliTest, TrainSimWritesSummaryAndTimelines) {
  const auto cfg = Write("t.json", SmallTrain());
  ASSERT_EQ(Run({"train-sim", "--config", cfg.string(), "--out", (dir_ / "o").string()}), 0)
      << err_.str();
  const auto s = json::parse(Read(dir_ / "o" / "summary.json"));
  EXPECT_EQ(s["format"], kSummaryFormat);
  EXPECT_EQ(s["command"], "train-sim");
  EXPECT_EQ(s["policies"].size(), 2u);
  EXPECT_TRUE(fs::exists(dir_ / "o" / "timeline_lina.csv"));
}

TEST_F(CliTest, RerunIsByteIdentical) {
  const auto cfg = Write("i.json", SmallInfer());
  ASSERT_EQ(Run({"infer-sim", "--config", cfg.string(), "--out", (dir_ / "a").string()}), 0)
      << err_.str();
  ASSERT_EQ(Run({"infer-sim", "--config", cfg.string(), "--out", (dir_ / "b").string()}), 0);
  EXPECT_EQ(Read(dir_ / "a" / "summary.json"), Read(dir_ / "b" / "summary.json"));
}

TEST_F(CliTest, SeedOverrideChangesOutput) {
  const auto cfg = Write("i.json", SmallInfer());
  ASSERT_EQ(Run({"gen-trace", "--config", cfg.string(), "--out", (dir_ / "a").string()}), 0);
  ASSERT_EQ(Run({"gen-trace", "--config", cfg.string(), "--seed", "99", "--out",
                 (dir_ / "b").string()}),
            0);
  EXPECT_NE(Read(dir_ / "a" / "trace.jsonl"), Read(dir_ / "b" / "trace.jsonl"));
}

TEST_F(CliTest, ConfigErrorsExitTwo) {
  auto doc = SmallTrain();
  doc["cluster"]["bogus"] = 1;
  EXPECT_EQ(Run({"train-sim", "--config", Write("u.json", doc).string()}), 2);
  EXPECT_NE(err_.str().find("cluster.bogus"), std::string::npos) << err_.str();
  doc = SmallTrain();
  doc["cluster"]["num_devices"] = "eight";
  EXPECT_EQ(Run({"train-sim", "--config", Write("w.json", doc).string()}), 2);
  doc = SmallTrain();
  doc["cluster"]["num_devices"] = 6;
  EXPECT_EQ(Run({"train-sim", "--config", Write("v.json", doc).string()}), 2);
  EXPECT_EQ(Run({"train-sim", "--config", (dir_ / "missing.json").string()}), 2);
  EXPECT_EQ(Run({"train-sim"}), 2);
  EXPECT_EQ(Run({"nonsense"}), 2);
  EXPECT_EQ(Run({"--help"}), 0);
}

TEST_F(CliTest, MissingSectionForCommand) {
  EXPECT_EQ(Run({"infer-sim", "--config", Write("t.json", SmallTrain()).string(), "--out",
                 (dir_ / "o").string()}),
            2);
}

TEST_F(CliTest, ReportCombinesSummaries) {
  const auto t = Write("t.json", SmallTrain());
  const auto i = Write("i.json", SmallInfer());
  ASSERT_EQ(Run({"train-sim", "--config", t.string(), "--out", (dir_ / "t").string()}), 0);
  ASSERT_EQ(Run({"infer-sim", "--config", i.string(), "--out", (dir_ / "i").string()}), 0);
  ASSERT_EQ(Run({"report", (dir_ / "t" / "summary.json").string(),
                 (dir_ / "i" / "summary.json").string(), "--out", (dir_ / "r").string()}),
            0)
      << err_.str();
  const auto csv = Read(dir_ / "r" / "report.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "section,source,name,metric,value");
  EXPECT_NE(csv.find("train,"), std::string::npos);
  EXPECT_NE(csv.find("infer,"), std::string::npos);
  EXPECT_NE(out_.str().find("inputs_hash"), std::string::npos);
}

TEST_F(CliTest, ReportRejectsForeignSummaries) {
  std::ostringstream text;
  EXPECT_THROW(cmd_report({}, text, nullptr), UsageError);
  EXPECT_THROW(cmd_report({Write("x.json", json{{"format", "other"}})}, text, nullptr),
               SchemaMismatch);
  EXPECT_THROW(cmd_report({Write("y.json", json{{"format", kSummaryFormat}, {"version", 99}})},
                          text, nullptr),
               SchemaMismatch);
  EXPECT_EQ(Run({"report"}), 2);
}

TEST(QuantileTest, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4, 5}, 0.95), 4.8);
  EXPECT_DOUBLE_EQ(quantile({7}, 0.3), 7);
  EXPECT_TRUE(std::isnan(quantile({}, 0.5)));
}

TEST(HashTest, Fnv1aKnownValues) {
  EXPECT_EQ(hex64(fnv1a("")), "cbf29ce484222325");
  EXPECT_EQ(hex64(fnv1a("a")), "af63dc4c8601ec8c");
}

TEST(ConfigTest, SeedOverrideAndHash) {
  const auto a = parse_config(SmallTrain(), ".");
  const auto b = parse_config(SmallTrain(), ".", 10);
  EXPECT_EQ(a.seed, 3u);
  EXPECT_EQ(b.seed, 10u);
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a), config_hash(parse_config(SmallTrain(), ".")));
}

TEST(BundledConfigTest, AllParse) {
  for (const auto& entry : fs::directory_iterator(LINASIM_CONFIG_DIR)) {
    EXPECT_NO_THROW(load_config(entry.path())) << entry.path();
  }
}

TEST(BundledConfigTest, PartitionOverheadSmall) {
  // Launch latency paid by the extra micro-ops partitioning creates.
  const auto cfg = load_config(fs::path(LINASIM_CONFIG_DIR) / "partition_benefit.json");
  train::SchedulerPolicy policy = cfg.train->policy;
  policy.kind = train::PolicyKind::kPriorityPartition;
  const auto step = train::build_step(cfg.model, cfg.cluster, cfg.cost,
                                      cfg.train->tokens_per_device);
  const auto mat = train::materialize(step, policy, cfg.train->run.include_forward);
  const auto extra = mat.workload.comm.size() - mat.collectives.size();
  const auto m = train::simulate_step(step, policy, cfg.cluster, cfg.train->run.include_forward);
  EXPECT_LT(extra * cfg.cluster.launch_latency / m.report.step_time, 0.02);
}

}  // namespace
}  // namespace linasim::cli
