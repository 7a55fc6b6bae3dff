#include "orbsde/cli.hpp"

#include <CLI11.hpp>

#include <string>
#include <vector>

int main(int argc, char** argv) {
    CLI::App app{"orbsde - obliquely reflected BSDE solver"};
    app.require_subcommand(1);

    orbsde::cli::RunConfig config;
    std::string schedule_text;
    std::uint64_t seed = 0;

    auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed, "master seed override (also: ORBSDE_SEED env)")
            ->each([&](const std::string&) { config.seed_override = seed; });
    };

    auto* solve = app.add_subcommand("solve", "solve a scenario and write solution + stats");
    solve->add_option("--scenario", config.scenario_path, "scenario file")->required();
    solve->add_option("--out", config.out_dir, "output directory");
    add_seed(solve);

    auto* converge = app.add_subcommand("converge", "run the penalization schedule and report");
    converge->add_option("--scenario", config.scenario_path, "scenario file")->required();
    converge->add_option("--out", config.out_dir, "output directory");
    converge->add_option("--schedule", schedule_text, "comma-separated n values, e.g. 8,16,32,64,128");
    add_seed(converge);

    auto* verify = app.add_subcommand("verify", "run the built-in verification fixtures");
    verify->add_option("--fixture", config.fixture_filter, "run a single fixture by name");

    auto* diagnose = app.add_subcommand("diagnose", "diagnostics for a stored solution");
    diagnose->add_option("--solution", config.solution_path, "solution.json from a solve run")
        ->required();
    diagnose->add_option("--out", config.out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    if (solve->parsed()) config.command = orbsde::cli::RunConfig::Command::Solve;
    if (converge->parsed()) config.command = orbsde::cli::RunConfig::Command::Converge;
    if (verify->parsed()) config.command = orbsde::cli::RunConfig::Command::Verify;
    if (diagnose->parsed()) config.command = orbsde::cli::RunConfig::Command::Diagnose;

    if (!schedule_text.empty()) {
        std::vector<double> schedule;
        std::size_t pos = 0;
        while (pos < schedule_text.size()) {
            std::size_t next = schedule_text.find(',', pos);
            if (next == std::string::npos) next = schedule_text.size();
            schedule.push_back(std::stod(schedule_text.substr(pos, next - pos)));
            pos = next + 1;
        }
        config.schedule_override = schedule;
    }

    return orbsde::cli::run(config);
}
