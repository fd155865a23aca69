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

#pragma once

// JSON-configured experiments. A configuration is
//   {"schema_version": "1", "experiment": <kind>, "parameters": {...},
//    "seed": <uint>, "output": <path prefix>}
// and every object in it is checked for unknown keys before anything runs.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace katolab {

inline constexpr const char* kSchemaVersion = "1";

struct ExperimentConfig {
  std::string schema_version = kSchemaVersion;
  std::string experiment;
  nlohmann::json parameters = nlohmann::json::object();
  std::uint64_t seed = 1;
  std::string output;

  /// Throws SchemaError on missing, mistyped or unknown top-level keys.
  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// kato, kernel-checks, series, simulate, moments, varadhan, ldp.
const std::vector<std::string>& experiment_kinds();

/// Parses the parameter block completely without computing anything.
void validate_experiment(const ExperimentConfig& cfg);

struct RunResult {
  nlohmann::json summary;
  std::vector<std::filesystem::path> artifacts;  ///< CSV and JSON files written
  double wall_seconds = 0.0;
};

/// Runs the experiment, writing <prefix>_<table>.csv, <prefix>_summary.json
/// and <prefix>_manifest.json. A relative prefix is placed under
/// $KATOLAB_OUTPUT_DIR when that is set; an empty prefix uses the experiment name.
RunResult run_experiment(const ExperimentConfig& cfg, const std::optional<std::string>& prefix = {});

/// The output prefix run_experiment would use.
std::filesystem::path resolve_output_prefix(const ExperimentConfig& cfg,
                                            const std::optional<std::string>& prefix = {});

struct Preset {
  std::string name;
  std::string description;
  int criterion = 0;  ///< acceptance criterion it reproduces, 0 for none
  nlohmann::json config;
};

const std::vector<Preset>& presets();
std::optional<Preset> find_preset(const std::string& name);

}  // namespace katolab
