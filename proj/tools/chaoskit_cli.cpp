#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "chaoskit/harness.hpp"

namespace {

void print_report(const chaoskit::ExperimentReport& rep) {
    for (const auto& row : rep.rows) {
        std::printf("[%s] %s/%s estimate=%.6g se=%.3g", row.verdict.c_str(),
                    row.scenario.c_str(), row.check.c_str(), row.estimate, row.se);
        if (row.reference) std::printf(" reference=%.6g", *row.reference);
        if (row.rhs) std::printf(" rhs=%.6g", *row.rhs);
        std::printf("\n");
    }
    std::printf("%s: %zu checks, seed=%llu, wall=%.1fms\n", rep.scenario.c_str(), rep.rows.size(),
                static_cast<unsigned long long>(rep.seed), rep.wall_ms);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"experiment harness for discrete Poisson functionals"};
    app.require_subcommand(1);

    std::string config_path;
    CLI::App* cmd_run = app.add_subcommand("run", "run an experiment described by a JSON config");
    cmd_run->add_option("config", config_path, "path to the config JSON")->required();

    std::string scenario_name;
    CLI::App* cmd_scenario = app.add_subcommand("scenario", "run a named scenario with defaults");
    cmd_scenario->add_option("name", scenario_name, "scenario name (see `list`)")->required();

    CLI::App* cmd_list = app.add_subcommand("list", "list available scenarios");

    std::uint64_t seed = 0;
    std::uint64_t n = 0;
    int replicates = 0;
    int threads = 0;
    std::string out_dir;
    double lambda = 0.0;
    double nu = 0.0;
    int q = 0;
    int cells = 0;
    for (CLI::App* cmd : {cmd_run, cmd_scenario}) {
        cmd->add_option("--seed", seed, "master seed");
        cmd->add_option("--n", n, "replicate size");
        cmd->add_option("--replicates", replicates, "number of replicates");
        cmd->add_option("--out", out_dir, "directory for report.json and report.csv");
        cmd->add_option("--threads", threads, "worker threads");
        cmd->add_option("--lambda", lambda, "cell intensity");
        cmd->add_option("--nu", nu, "centered-Gamma parameter");
        cmd->add_option("--q", q, "top chaos order");
        cmd->add_option("--cells", cells, "number of cells");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cmd_list->parsed()) {
            for (const std::string& s : chaoskit::list_scenarios()) std::printf("%s\n", s.c_str());
            return 0;
        }
        chaoskit::ExperimentConfig cfg;
        CLI::App* cmd = cmd_run->parsed() ? cmd_run : cmd_scenario;
        if (cmd_run->parsed()) {
            std::ifstream in(config_path);
            if (!in) {
                std::fprintf(stderr, "error: cannot open config %s\n", config_path.c_str());
                return 2;
            }
            nlohmann::json j = nlohmann::json::parse(in);
            cfg = chaoskit::ExperimentConfig::from_json(j);
        } else {
            cfg.scenario = scenario_name;
        }
        if (cmd->count("--seed")) cfg.seed = seed;
        if (cmd->count("--n")) cfg.n = n;
        if (cmd->count("--replicates")) cfg.replicates = replicates;
        if (cmd->count("--out")) cfg.out_dir = out_dir;
        if (cmd->count("--threads")) cfg.threads = threads;
        if (cmd->count("--lambda")) cfg.lambda = lambda;
        if (cmd->count("--nu")) cfg.nu = nu;
        if (cmd->count("--q")) cfg.q = q;
        if (cmd->count("--cells")) cfg.cells = cells;

        chaoskit::ExperimentReport rep = chaoskit::run(cfg);
        print_report(rep);
        return rep.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
