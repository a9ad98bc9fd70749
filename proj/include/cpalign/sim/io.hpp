// Copyright 2026 The cpalign Authors
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

#ifndef CPALIGN__SIM__IO_HPP_
#define CPALIGN__SIM__IO_HPP_

#include "cpalign/sim/pipeline.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace cpalign::sim
{

/// Schema violation; `path()` names the offending key, e.g. "scenario.agents[1].x".
class ConfigError : public std::runtime_error
{
public:
  ConfigError(std::string path, const std::string & message);
  const std::string & path() const { return path_; }

private:
  std::string path_;
};

/// Every section is optional; absent keys keep their defaults, unknown keys are errors.
struct HarnessConfig
{
  ScenarioConfig scenario;
  bev::BevSpec bev;
  PhdSettings phd;
  PtamSettings ptam;
  std::size_t window = 16;
  IfamSettings ifam;
  CodecConfig codec;
  SweepConfig sweep;

  /// Base options for single runs and sweeps (tau and noise left at zero).
  RunOptions run_options() const;
};

HarnessConfig parse_config(const std::string & json_text);
HarnessConfig load_config(const std::filesystem::path & path);
/// Full config with every key spelled out; parse_config(dump_config(c)) reproduces c.
std::string dump_config(const HarnessConfig & config);

std::string scenario_to_json(const Scenario & scenario);
Scenario parse_scenario(const std::string & json_text);
Scenario load_scenario(const std::filesystem::path & path);

std::string report_to_json(const RunReport & report);
std::string ops_to_json(const temporal::OpCounts & global, const temporal::OpCounts & blockwise, double ratio);

/// Reads a whole file; throws std::runtime_error naming the path on failure.
std::string read_text(const std::filesystem::path & path);
void write_text(const std::filesystem::path & path, const std::string & text);

}  // namespace cpalign::sim

#endif  // CPALIGN__SIM__IO_HPP_
