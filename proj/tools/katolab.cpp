// Copyright (c) 2026, katolab contributors
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

// katolab run <config.json> | run --preset NAME | presets | validate <config.json>
//
// Exit status: 0 success, 2 validation, 3 numerical refusal, 4 budget
// exhaustion, 1 anything else.

#include "katolab/experiments.hpp"
#include "katolab/parallel.hpp"
#include "katolab/types.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

namespace {

using katolab::ExperimentConfig;
using nlohmann::json;

ExperimentConfig load(const std::string& path, const std::string& preset) {
  if (!preset.empty()) {
    const auto p = katolab::find_preset(preset);
    if (!p) throw katolab::SchemaError("unknown preset '" + preset + "'");
    return ExperimentConfig::from_json(p->config);
  }
  if (path.empty()) throw katolab::SchemaError("a config file or --preset is required");
  std::ifstream in(path);
  if (!in) throw katolab::SchemaError("cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw katolab::SchemaError(path + ": " + e.what());
  }
  return ExperimentConfig::from_json(j);
}

int report(const char* category, int code, const std::exception& e) {
  std::cerr << "katolab: " << category << " error: " << e.what() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kato-class drift experiments: Kato norms, parametrix series, SDE simulation, small-time asymptotics"};
  app.require_subcommand(1);

  std::string config_path, preset, prefix;
  unsigned workers = 0;
  auto* run = app.add_subcommand("run", "run an experiment and write its CSV, summary and manifest");
  run->add_option("config", config_path, "experiment configuration (JSON)");
  run->add_option("--preset", preset, "run a built-in preset instead of a config file");
  run->add_option("-o,--output", prefix, "output path prefix (overrides the config)");
  run->add_option("--workers", workers, "worker threads; 0 uses the available parallelism");

  std::string dump;
  bool as_json = false;
  auto* list = app.add_subcommand("presets", "list the built-in presets");
  list->add_option("--dump", dump, "print the configuration of one preset");
  list->add_flag("--json", as_json, "print the catalog as JSON");

  std::string validate_path, validate_preset;
  auto* validate = app.add_subcommand("validate", "check a configuration without running it");
  validate->add_option("config", validate_path, "experiment configuration (JSON)");
  validate->add_option("--preset", validate_preset, "validate a built-in preset");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      if (workers > 0) katolab::set_worker_count(workers);
      const ExperimentConfig cfg = load(config_path, preset);
      const auto result =
          katolab::run_experiment(cfg, prefix.empty() ? std::nullopt : std::optional<std::string>(prefix));
      std::cout << result.summary.dump(2) << "\n";
      for (const auto& a : result.artifacts) std::cerr << "wrote " << a.string() << "\n";
      return 0;
    }
    if (*list) {
      if (!dump.empty()) {
        const auto p = katolab::find_preset(dump);
        if (!p) throw katolab::SchemaError("unknown preset '" + dump + "'");
        std::cout << p->config.dump(2) << "\n";
        return 0;
      }
      if (as_json) {
        json out = json::array();
        for (const auto& p : katolab::presets())
          out.push_back({{"name", p.name}, {"description", p.description}, {"criterion", p.criterion},
                         {"experiment", p.config.at("experiment")}});
        std::cout << out.dump(2) << "\n";
        return 0;
      }
      for (const auto& p : katolab::presets()) {
        std::cout << p.name << "\t" << p.config.at("experiment").get<std::string>() << "\t";
        if (p.criterion > 0) std::cout << "[" << p.criterion << "] ";
        std::cout << p.description << "\n";
      }
      return 0;
    }
    if (*validate) {
      const ExperimentConfig cfg = load(validate_path, validate_preset);
      katolab::validate_experiment(cfg);
      std::cout << "ok: " << cfg.experiment << "\n";
      return 0;
    }
  } catch (const katolab::SchemaError& e) {
    return report("validation", 2, e);
  } catch (const katolab::DomainError& e) {
    return report("validation", 2, e);
  } catch (const katolab::RefusalError& e) {
    return report("refusal", 3, e);
  } catch (const katolab::BudgetError& e) {
    return report("budget", 4, e);
  } catch (const std::exception& e) {
    return report("internal", 1, e);
  }
  return 1;
}
