#pragma once

#include "orbsde/solver.hpp"

#include <json.hpp>

#include <string>

namespace orbsde::config {

/// Evaluate a small arithmetic expression (numbers, + - * / ^ and
/// parentheses). Scenario files may use these for the time-grid fields T
/// and N; every other numeric field is a literal.
double eval_expression(const std::string& text);

/// Build a scenario from its JSON description. Throws ValidationError with
/// the offending section named on malformed input.
solver::Scenario scenario_from_json(const nlohmann::json& j);

solver::Scenario load_scenario_file(const std::string& path);

/// Round-trippable echo of the configuration (used inside solution files so
/// `diagnose` can rebuild the engine).
nlohmann::json scenario_echo(const nlohmann::json& original);

} // namespace orbsde::config
