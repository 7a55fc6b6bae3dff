#include "orbsde/cli.hpp"

#include "orbsde/config.hpp"
#include "orbsde/errors.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace orbsde::cli {

using nlohmann::json;

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

json matrix_to_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat matrix_from_json(const json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
        }
    }
    return m;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("output directory not writable: " + path.string());
    out << content;
}

solver::Scenario load_with_overrides(const RunConfig& config, json& config_echo) {
    std::ifstream in(config.scenario_path);
    if (!in) throw ValidationError("cannot open scenario file: " + config.scenario_path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ValidationError(std::string("scenario file is not valid JSON: ") + e.what());
    }
    if (config.schedule_override) {
        j["penalty"]["schedule"] = *config.schedule_override;
    }
    std::optional<std::uint64_t> seed = config.seed_override;
    if (!seed) {
        if (const char* env = std::getenv("ORBSDE_SEED")) {
            seed = std::strtoull(env, nullptr, 10);
        }
    }
    if (seed) j["seed"] = *seed;
    config_echo = j;
    return config::scenario_from_json(j);
}

} // namespace

json solution_to_json(const solver::DiscreteSolution& sol, const json& scenario_config) {
    json j;
    j["config"] = scenario_config;
    j["engine"] = sol.engine == solver::EngineKind::Lattice ? "lattice" : "regression";
    j["n_used"] = sol.n_used;
    j["M_used"] = sol.M_used;
    j["dt"] = sol.dt;
    j["steps"] = sol.steps;
    j["ydim"] = sol.ydim;
    j["noise_dim"] = sol.noise_dim;
    json slices = json::array();
    for (int i = 0; i <= sol.steps; ++i) {
        json s;
        s["Y"] = matrix_to_json(sol.Y[static_cast<std::size_t>(i)]);
        s["Z"] = matrix_to_json(sol.Z[static_cast<std::size_t>(i)]);
        s["Phi"] = matrix_to_json(sol.Phi[static_cast<std::size_t>(i)]);
        s["Psi"] = matrix_to_json(sol.Psi[static_cast<std::size_t>(i)]);
        if (!sol.Yhat.empty()) s["Yhat"] = matrix_to_json(sol.Yhat[static_cast<std::size_t>(i)]);
        slices.push_back(std::move(s));
    }
    j["slices"] = std::move(slices);
    if (!sol.regression_coeffs.empty()) {
        json coeffs = json::array();
        for (const auto& c : sol.regression_coeffs) coeffs.push_back(matrix_to_json(c));
        j["regression_coeffs"] = std::move(coeffs);
    }
    return j;
}

solver::DiscreteSolution solution_from_json(const json& j, json& scenario_config_out) {
    solver::DiscreteSolution sol;
    scenario_config_out = j.at("config");
    sol.engine = j.at("engine").get<std::string>() == "lattice" ? solver::EngineKind::Lattice
                                                                : solver::EngineKind::Regression;
    sol.n_used = j.at("n_used").get<double>();
    sol.M_used = j.at("M_used").get<double>();
    sol.dt = j.at("dt").get<double>();
    sol.steps = j.at("steps").get<int>();
    sol.ydim = j.at("ydim").get<int>();
    sol.noise_dim = j.at("noise_dim").get<int>();
    const json& slices = j.at("slices");
    for (const auto& s : slices) {
        sol.Y.push_back(matrix_from_json(s.at("Y")));
        sol.Z.push_back(matrix_from_json(s.at("Z")));
        sol.Phi.push_back(matrix_from_json(s.at("Phi")));
        sol.Psi.push_back(matrix_from_json(s.at("Psi")));
        if (s.contains("Yhat")) sol.Yhat.push_back(matrix_from_json(s.at("Yhat")));
    }
    if (j.contains("regression_coeffs")) {
        for (const auto& c : j.at("regression_coeffs")) {
            sol.regression_coeffs.push_back(matrix_from_json(c));
        }
    }
    return sol;
}

std::string convergence_csv(const solver::ConvergenceReport& report) {
    std::ostringstream os;
    const int d = report.rows.empty() ? 0 : static_cast<int>(report.rows.front().y0.size());
    os << "n,dt";
    for (int c = 0; c < d; ++c) os << ",y0_" << c;
    os << ",cauchy_delta,minimality_residual,domain_violation,structural_k_hat\r\n";
    for (const auto& row : report.rows) {
        os << format_double(row.n) << ',' << format_double(row.dt);
        for (int c = 0; c < d; ++c) os << ',' << format_double(row.y0[c]);
        os << ',' << (std::isnan(row.cauchy_delta) ? "" : format_double(row.cauchy_delta)) << ','
           << format_double(row.minimality_residual) << ',' << format_double(row.domain_violation)
           << ',' << format_double(row.structural_k_hat) << "\r\n";
    }
    return os.str();
}

std::string stats_csv(const solver::DiscreteSolution& sol, const geometry::ConvexDomain& domain,
                      solver::CondExpEngine& engine) {
    std::ostringstream os;
    os << "t,mean_norm_y,mean_norm_z,mean_norm_phi,mean_norm_psi,mean_dist,max_dist\r\n";
    for (int i = 0; i <= sol.steps; ++i) {
        const Vec w = engine.weights(i);
        double ny = 0.0, nz = 0.0, nphi = 0.0, npsi = 0.0, mean_dist = 0.0, max_dist = 0.0;
        const Mat& y = sol.Y[static_cast<std::size_t>(i)];
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            ny += w[r] * y.row(r).norm();
            nz += w[r] * sol.Z[static_cast<std::size_t>(i)].row(r).norm();
            nphi += w[r] * sol.Phi[static_cast<std::size_t>(i)].row(r).norm();
            npsi += w[r] * sol.Psi[static_cast<std::size_t>(i)].row(r).norm();
            const double dist = domain.distance(y.row(r).transpose());
            mean_dist += w[r] * dist;
            max_dist = std::max(max_dist, dist);
        }
        os << format_double(sol.dt * i) << ',' << format_double(ny) << ',' << format_double(nz)
           << ',' << format_double(nphi) << ',' << format_double(npsi) << ','
           << format_double(mean_dist) << ',' << format_double(max_dist) << "\r\n";
    }
    return os.str();
}

std::string diagnostics_csv(const diagnostics::DiagnosticsReport& report) {
    std::ostringstream os;
    os << "apriori_ratio,apriori_denominator_zero,structural_k_hat,structural_denominator_zero,"
          "minimality_residual,domain_violation,cone_violation_rate,bmo_z_estimate,"
          "equation_residual\r\n";
    os << format_double(report.apriori_ratio) << ',' << (report.apriori_denominator_zero ? 1 : 0)
       << ',' << format_double(report.structural_k_hat) << ','
       << (report.structural_denominator_zero ? 1 : 0) << ','
       << format_double(report.minimality_residual) << ',' << format_double(report.domain_violation)
       << ',' << format_double(report.cone_violation_rate) << ','
       << format_double(report.bmo_z_estimate) << ',' << format_double(report.equation_residual)
       << "\r\n";
    return os.str();
}

json diagnostics_to_json(const diagnostics::DiagnosticsReport& report) {
    json j;
    j["apriori_ratio"] = report.apriori_ratio;
    j["apriori_denominator_zero"] = report.apriori_denominator_zero;
    j["structural_k_hat"] = report.structural_k_hat;
    j["structural_denominator_zero"] = report.structural_denominator_zero;
    j["minimality_residual"] = report.minimality_residual;
    j["domain_violation"] = report.domain_violation;
    j["cone_violation_rate"] = report.cone_violation_rate;
    j["bmo_z_estimate"] = report.bmo_z_estimate;
    j["equation_residual"] = report.equation_residual;
    return j;
}

namespace {

int run_solve(const RunConfig& config) {
    json echo;
    solver::Scenario scn = load_with_overrides(config, echo);
    scn.validate();
    auto engine = solver::make_engine(scn);
    auto [sol, report] = solver::solve_reflected(scn, *engine);

    std::filesystem::create_directories(config.out_dir);
    write_file(std::filesystem::path(config.out_dir) / "solution.json",
               solution_to_json(sol, echo).dump(2) + "\n");
    write_file(std::filesystem::path(config.out_dir) / "stats.csv",
               stats_csv(sol, scn.domain, *engine));
    auto diag = diagnostics::assemble_report(sol, scn, *engine);
    write_file(std::filesystem::path(config.out_dir) / "diagnostics.json",
               diagnostics_to_json(diag).dump(2) + "\n");

    Vec y0 = sol.Yhat.empty() ? Vec(sol.Y[0].row(0).transpose()) : Vec(sol.Yhat[0].row(0).transpose());
    std::cout << "solve: n=" << sol.n_used << " M=" << sol.M_used << " steps=" << sol.steps
              << "\nY0 (projected):";
    for (Eigen::Index c = 0; c < y0.size(); ++c) std::cout << ' ' << format_double(y0[c]);
    std::cout << "\nwall-clock per schedule entry (ms):";
    for (const auto& row : report.rows) std::cout << ' ' << row.wall_ms;
    std::cout << "\noutputs written to " << config.out_dir << std::endl;
    if (report.cauchy_warning) {
        std::cout << "warning: Cauchy decrement did not decrease across the last refinement"
                  << std::endl;
    }
    if (report.truncation_warning) {
        std::cout << "warning: an iterate reached distance > M/2 from the domain; increase M"
                  << std::endl;
    }
    return kOk;
}

int run_converge(const RunConfig& config) {
    json echo;
    solver::Scenario scn = load_with_overrides(config, echo);
    scn.validate();
    auto engine = solver::make_engine(scn);
    auto [sol, report] = solver::solve_reflected(scn, *engine);

    std::filesystem::create_directories(config.out_dir);
    write_file(std::filesystem::path(config.out_dir) / "converge.csv", convergence_csv(report));
    json j;
    j["config"] = echo;
    j["cauchy_warning"] = report.cauchy_warning;
    j["truncation_warning"] = report.truncation_warning;
    json rows = json::array();
    for (const auto& row : report.rows) {
        json r;
        r["n"] = row.n;
        r["dt"] = row.dt;
        json y0 = json::array();
        for (Eigen::Index c = 0; c < row.y0.size(); ++c) y0.push_back(row.y0[c]);
        r["y0"] = std::move(y0);
        if (!std::isnan(row.cauchy_delta)) r["cauchy_delta"] = row.cauchy_delta;
        r["minimality_residual"] = row.minimality_residual;
        r["domain_violation"] = row.domain_violation;
        r["structural_k_hat"] = row.structural_k_hat;
        rows.push_back(std::move(r));
    }
    j["rows"] = std::move(rows);
    write_file(std::filesystem::path(config.out_dir) / "converge.json", j.dump(2) + "\n");

    std::cout << "converge: " << report.rows.size() << " schedule entries written to "
              << config.out_dir << std::endl;
    std::cout << "wall-clock per schedule entry (ms):";
    for (const auto& row : report.rows) std::cout << ' ' << row.wall_ms;
    std::cout << std::endl;
    if (report.cauchy_warning) {
        std::cout << "warning: Cauchy decrement did not decrease across the last refinement "
                     "(possible non-uniqueness or insufficient resolution)" << std::endl;
    }
    return kOk;
}

int run_verify(const RunConfig& config) {
    auto fixtures = scenarios::all_fixtures();
    bool all_pass = true;
    int ran = 0;
    std::printf("%-16s %-52s %12s %12s %s\n", "fixture", "check", "value", "threshold", "status");
    for (auto& fixture : fixtures) {
        if (!config.fixture_filter.empty() && fixture.name != config.fixture_filter) continue;
        ++ran;
        auto result = fixture.run();
        for (const auto& check : result.checks) {
            std::printf("%-16s %-52s %12.4g %12.4g %s\n", result.fixture.c_str(),
                        check.name.c_str(), check.value, check.threshold,
                        check.pass ? "PASS" : "FAIL");
        }
        std::printf("%-16s %-52s %12s %12s %s\n", result.fixture.c_str(),
                    result.note.empty() ? "(summary)" : result.note.c_str(), "", "",
                    result.pass ? "PASS" : "FAIL");
        all_pass = all_pass && result.pass;
    }
    if (ran == 0) {
        std::cerr << "no fixture matches '" << config.fixture_filter << "'" << std::endl;
        return kValidationFailure;
    }
    std::printf("overall: %s (%d fixtures)\n", all_pass ? "PASS" : "FAIL", ran);
    return all_pass ? kOk : kFixtureFailure;
}

int run_diagnose(const RunConfig& config) {
    std::ifstream in(config.solution_path);
    if (!in) throw ValidationError("cannot open solution file: " + config.solution_path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ValidationError(std::string("solution file is not valid JSON: ") + e.what());
    }
    json scenario_config;
    auto sol = solution_from_json(j, scenario_config);
    auto scn = config::scenario_from_json(scenario_config);
    auto engine = solver::make_engine(scn);
    if (engine->steps() != sol.steps || engine->count(0) != sol.Y.at(0).rows()) {
        throw ValidationError("solution file does not match the engine rebuilt from its config");
    }
    auto report = diagnostics::assemble_report(sol, scn, *engine);

    std::filesystem::create_directories(config.out_dir);
    write_file(std::filesystem::path(config.out_dir) / "diagnostics.csv", diagnostics_csv(report));
    write_file(std::filesystem::path(config.out_dir) / "diagnostics.json",
               diagnostics_to_json(report).dump(2) + "\n");
    std::cout << diagnostics_to_json(report).dump(2) << std::endl;
    return kOk;
}

} // namespace

int run(const RunConfig& config) {
    try {
        switch (config.command) {
            case RunConfig::Command::Solve: return run_solve(config);
            case RunConfig::Command::Converge: return run_converge(config);
            case RunConfig::Command::Verify: return run_verify(config);
            case RunConfig::Command::Diagnose: return run_diagnose(config);
        }
        return kValidationFailure;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << std::endl;
        return kValidationFailure;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << std::endl;
        return kNumericalFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kValidationFailure;
    }
}

} // namespace orbsde::cli
