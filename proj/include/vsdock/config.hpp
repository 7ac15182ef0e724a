#pragma once

#include <string>

#include "vsdock/simulator.hpp"

namespace vsdock {

// Scenario files are flat `key = value` lines; `#` starts a comment and
// list values are whitespace-separated numbers. Unknown keys are rejected.
// The full key set is documented in the README and produced by
// save_scenario.
ScenarioConfig load_scenario(const std::string& path);

// Writes the effective configuration in the same format (full precision);
// load_scenario(save_scenario(cfg)) reproduces cfg.
void save_scenario(const ScenarioConfig& cfg, const std::string& path);

ControllerKind controller_from_name(const std::string& name);
std::string controller_name(ControllerKind kind);

}  // namespace vsdock
