#pragma once

#include "orbsde/diagnostics.hpp"
#include "orbsde/scenarios.hpp"
#include "orbsde/solver.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace orbsde::cli {

/// Exit codes of the command-line front end.
enum ExitCode : int {
    kOk = 0,
    kValidationFailure = 1,
    kNumericalFailure = 2,
    kFixtureFailure = 3,
};

struct RunConfig {
    enum class Command { Solve, Converge, Verify, Diagnose };
    Command command = Command::Verify;
    std::string scenario_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed_override; // flag > ORBSDE_SEED env > file value
    std::optional<std::vector<double>> schedule_override;
    std::string fixture_filter; // verify --fixture NAME
    std::string solution_path;  // diagnose --solution FILE
};

/// Execute a subcommand; returns the process exit code and reports progress
/// on stdout / errors on stderr.
int run(const RunConfig& config);

/// Serialization used by the solve output and the diagnose input.
nlohmann::json solution_to_json(const solver::DiscreteSolution& sol,
                                const nlohmann::json& scenario_config);
solver::DiscreteSolution solution_from_json(const nlohmann::json& j,
                                            nlohmann::json& scenario_config_out);

std::string convergence_csv(const solver::ConvergenceReport& report);
std::string stats_csv(const solver::DiscreteSolution& sol, const geometry::ConvexDomain& domain,
                      solver::CondExpEngine& engine);
std::string diagnostics_csv(const diagnostics::DiagnosticsReport& report);
nlohmann::json diagnostics_to_json(const diagnostics::DiagnosticsReport& report);

/// Fixed-format float: RFC-4180-friendly, '.' decimal separator, culture
/// independent and byte-stable across runs.
std::string format_double(double v);

} // namespace orbsde::cli
