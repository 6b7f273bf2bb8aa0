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
#include <iostream>

#include <CLI11.hpp>

#include "linasim/cli.hpp"

namespace linasim::cli {

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Flow-level simulator for MoE collective scheduling", "linasim"};
  app.require_subcommand(1);

  struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
  };
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Scenario config (JSON)")->required();
    sub->add_option("--seed", common.seed, "Override the config seed");
    sub->add_option("--out", common.out, "Output directory")->capture_default_str();
  };
  auto* gen = app.add_subcommand("gen-trace", "Generate a routing trace");
  auto* tsim = app.add_subcommand("train-sim", "Simulate training steps per policy");
  auto* isim = app.add_subcommand("infer-sim", "Simulate inference per scheduler mode");
  auto* prof = app.add_subcommand("build-profile", "Build a path popularity profile");
  for (auto* sub : {gen, tsim, isim, prof}) add_common(sub);

  auto* rep = app.add_subcommand("report", "Compare summary files");
  std::vector<std::string> inputs;
  std::string report_out;
  rep->add_option("summaries", inputs, "summary.json files");
  rep->add_option("--out", report_out, "Directory for report.csv and report.txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (rep->parsed()) {
      std::vector<std::filesystem::path> paths(inputs.begin(), inputs.end());
      if (report_out.empty()) {
        cmd_report(paths, out, nullptr);
      } else {
        std::filesystem::create_directories(report_out);
        std::ostringstream text;
        std::ofstream csv(std::filesystem::path(report_out) / "report.csv", std::ios::binary);
        cmd_report(paths, text, &csv);
        std::ofstream(std::filesystem::path(report_out) / "report.txt", std::ios::binary)
            << text.str();
        out << text.str();
      }
      return 0;
    }
    const auto config = load_config(common.config, common.seed);
    const std::filesystem::path dir = common.out;
    nlohmann::json summary;
    if (gen->parsed()) {
      summary = cmd_gen_trace(config, dir);
    } else if (tsim->parsed()) {
      summary = cmd_train_sim(config, dir);
    } else if (isim->parsed()) {
      summary = cmd_infer_sim(config, dir);
    } else {
      summary = cmd_build_profile(config, dir);
    }
    out << "wrote " << (dir / "summary.json").string() << " (config "
        << summary["config_hash"].get<std::string>() << ")\n";
    return 0;
  } catch (const UsageError& e) {
    err << "linasim: " << e.what() << "\n";
    return 2;
  } catch (const InvalidSpec& e) {
    err << "linasim: invalid scenario: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "linasim: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace linasim::cli
