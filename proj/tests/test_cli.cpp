#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "orbsde/cli.hpp"
#include "orbsde/config.hpp"
#include "orbsde/errors.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace orbsde;
namespace fs = std::filesystem;

#ifndef ORBSDE_SOURCE_DIR
#define ORBSDE_SOURCE_DIR "."
#endif

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

fs::path scenario_dir() { return fs::path(ORBSDE_SOURCE_DIR) / "scenarios"; }

fs::path temp_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("orbsde_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("expression evaluator covers the grid fields") {
    CHECK(config::eval_expression("2^8") == doctest::Approx(256.0));
    CHECK(config::eval_expression("2*128") == doctest::Approx(256.0));
    CHECK(config::eval_expression("1.0/4 + 0.75") == doctest::Approx(1.0));
    CHECK(config::eval_expression("(3+1)*2") == doctest::Approx(8.0));
    CHECK_THROWS_AS(config::eval_expression("2**"), ValidationError);
}

TEST_CASE("scenario files load with expression grids") {
    auto scn = config::load_scenario_file((scenario_dir() / "martingale_regression.json").string());
    CHECK(scn.grid.steps == 32);
    CHECK(scn.engine == solver::EngineKind::Regression);
    CHECK(scn.domain.dim() == 2);
    CHECK_NOTHROW(scn.validate());
}

TEST_CASE("malformed switching costs exit with a validation failure") {
    auto dir = temp_dir("badcosts");
    {
        std::ofstream out(dir / "bad.json");
        out << R"({
          "grid": {"T": 1.0, "N": 16},
          "forward": {"model": "brownian", "dim": 1},
          "domain": {"kind": "switching", "costs": [[0.0, 0.0], [0.0, 0.0]]},
          "reflection": {"name": "switching"},
          "driver": {"name": "zero"},
          "terminal": {"name": "constant", "value": [0.0, 0.0]}
        })";
    }
    // The loader names the structure condition ...
    try {
        config::load_scenario_file((dir / "bad.json").string());
        FAIL("expected a ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("structure condition") != std::string::npos);
    }
    // ... and the CLI maps it to exit code 1.
    cli::RunConfig config;
    config.command = cli::RunConfig::Command::Converge;
    config.scenario_path = (dir / "bad.json").string();
    config.out_dir = (dir / "out").string();
    CHECK(cli::run(config) == cli::kValidationFailure);
}

TEST_CASE("converge output is byte-identical across repeated runs") {
    cli::RunConfig config;
    config.command = cli::RunConfig::Command::Converge;
    config.scenario_path = (scenario_dir() / "constant_push.json").string();
    config.schedule_override = std::vector<double>{8, 16, 32};

    auto dir_a = temp_dir("conv_a");
    auto dir_b = temp_dir("conv_b");
    config.out_dir = dir_a.string();
    REQUIRE(cli::run(config) == cli::kOk);
    config.out_dir = dir_b.string();
    REQUIRE(cli::run(config) == cli::kOk);

    CHECK(slurp(dir_a / "converge.csv") == slurp(dir_b / "converge.csv"));
    CHECK(slurp(dir_a / "converge.json") == slurp(dir_b / "converge.json"));

    // One header line plus one row per schedule entry.
    const std::string csv = slurp(dir_a / "converge.csv");
    std::size_t lines = 0;
    for (char c : csv) {
        if (c == '\n') ++lines;
    }
    CHECK(lines == 4);
}

TEST_CASE("verify runs a single fixture through the CLI") {
    cli::RunConfig config;
    config.command = cli::RunConfig::Command::Verify;
    config.fixture_filter = "martingale";
    CHECK(cli::run(config) == cli::kOk);
}

TEST_CASE("csv headers are pinned") {
    solver::ConvergenceReport report;
    solver::ConvergenceRow row;
    row.y0 = Vec::Zero(2);
    report.rows.push_back(row);
    const std::string csv = cli::convergence_csv(report);
    CHECK(csv.rfind("n,dt,y0_0,y0_1,cauchy_delta,minimality_residual,domain_violation,"
                    "structural_k_hat\r\n", 0) == 0);

    diagnostics::DiagnosticsReport diag;
    const std::string dcsv = cli::diagnostics_csv(diag);
    CHECK(dcsv.rfind("apriori_ratio,apriori_denominator_zero,structural_k_hat,"
                     "structural_denominator_zero,minimality_residual,domain_violation,"
                     "cone_violation_rate,bmo_z_estimate,equation_residual\r\n", 0) == 0);
}

TEST_CASE("solve then diagnose round-trips through the solution file") {
    auto dir = temp_dir("solve");
    {
        // A reduced copy of the constant-push scenario keeps this fast.
        std::ofstream out(dir / "scn.json");
        out << R"({
          "grid": {"T": 1.0, "N": 64},
          "forward": {"model": "brownian", "dim": 1},
          "domain": {"kind": "halfspaces", "normals": [[1.0]], "offsets": [0.0]},
          "reflection": {"name": "identity"},
          "driver": {"name": "constant", "value": [-1.0]},
          "terminal": {"name": "constant", "value": [0.0]},
          "penalty": {"schedule": [8, 16, 32], "M": 10.0},
          "solver": {"engine": "lattice"},
          "seed": 7
        })";
    }
    cli::RunConfig solve;
    solve.command = cli::RunConfig::Command::Solve;
    solve.scenario_path = (dir / "scn.json").string();
    solve.out_dir = (dir / "out").string();
    REQUIRE(cli::run(solve) == cli::kOk);
    CHECK(fs::exists(dir / "out" / "solution.json"));
    CHECK(fs::exists(dir / "out" / "stats.csv"));
    CHECK(slurp(dir / "out" / "stats.csv").rfind(
              "t,mean_norm_y,mean_norm_z,mean_norm_phi,mean_norm_psi,mean_dist,max_dist\r\n", 0)
          == 0);

    cli::RunConfig diag;
    diag.command = cli::RunConfig::Command::Diagnose;
    diag.solution_path = (dir / "out" / "solution.json").string();
    diag.out_dir = (dir / "diag").string();
    REQUIRE(cli::run(diag) == cli::kOk);
    CHECK(fs::exists(dir / "diag" / "diagnostics.json"));
    CHECK(fs::exists(dir / "diag" / "diagnostics.csv"));
}

TEST_CASE("environment seed override matches the explicit flag") {
    cli::RunConfig config;
    config.command = cli::RunConfig::Command::Converge;
    config.scenario_path = (scenario_dir() / "constant_push.json").string();
    config.schedule_override = std::vector<double>{8, 16, 32};

    auto dir_env = temp_dir("seed_env");
    auto dir_flag = temp_dir("seed_flag");

    ::setenv("ORBSDE_SEED", "777", 1);
    config.out_dir = dir_env.string();
    REQUIRE(cli::run(config) == cli::kOk);
    ::unsetenv("ORBSDE_SEED");

    config.seed_override = 777;
    config.out_dir = dir_flag.string();
    REQUIRE(cli::run(config) == cli::kOk);

    CHECK(slurp(dir_env / "converge.csv") == slurp(dir_flag / "converge.csv"));
    CHECK(slurp(dir_env / "converge.json") == slurp(dir_flag / "converge.json"));
}

TEST_CASE("verify rejects unknown fixtures") {
    cli::RunConfig config;
    config.command = cli::RunConfig::Command::Verify;
    config.fixture_filter = "does-not-exist";
    CHECK(cli::run(config) == cli::kValidationFailure);
}
