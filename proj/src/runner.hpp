#pragma once

#include <string>

#include "scenario.hpp"

namespace rfk {

struct RunResult {
    int exit_code = 0;
    std::string message;
};

/// Executes a scenario config end to end and writes the requested artifact
/// files plus a manifest echoing the resolved config with file hashes.
/// Exit codes: 0 ok, 2 unknown preset, 3 invariant violation at load,
/// 4 non-finite state during simulation.
RunResult run_scenario(const ScenarioConfig& cfg);

std::string list_presets_text();

}  // namespace rfk
