#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "twrs/sim.hpp"

namespace {

void apply_env_overrides(twrs::ExperimentScenario& scen) {
    if (const char* eps = std::getenv("TWRS_SOLVER_EPS")) {
        double v = std::atof(eps);
        if (v > 0) {
            scen.rs.solver.eps = v;
            scen.joint.rs.solver.eps = v;
        }
    }
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw twrs::Error("cannot open output file: " + path);
    out << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"amplify-and-forward multiuser two-way relay precoding simulator"};
    app.require_subcommand(1);

    std::string scenario_path, out_path;
    int workers = 0;

    auto* run = app.add_subcommand("run", "Monte Carlo sweep over the power grid");
    run->add_option("--scenario", scenario_path, "scenario JSON file")->required();
    run->add_option("--out", out_path, "output CSV path")->required();
    run->add_option("--workers", workers, "worker threads (overrides scenario)");

    int inits = 6;
    auto* conv = app.add_subcommand("convergence",
                                    "per-iteration objective traces from several starts");
    conv->add_option("--scenario", scenario_path, "scenario JSON file")->required();
    conv->add_option("--out", out_path, "output CSV path")->required();
    conv->add_option("--inits", inits, "number of initializations per channel");

    double eps = 1e-7;
    int l_rs = 20, l_j = 10, samples = 2000;
    auto* comp = app.add_subcommand("complexity", "closed-form design cost estimates");
    comp->add_option("--scenario", scenario_path, "scenario JSON file")->required();
    comp->add_option("--eps", eps, "solver accuracy for the log factor");
    comp->add_option("--l-rs", l_rs, "inner iteration count");
    comp->add_option("--l-j", l_j, "outer iteration count");
    comp->add_option("--samples", samples, "randomization sample count");

    CLI11_PARSE(app, argc, argv);

    try {
        twrs::ExperimentScenario scen = twrs::load_scenario(scenario_path);
        apply_env_overrides(scen);
        if (run->parsed()) {
            if (workers > 0) scen.workers = workers;
            auto res = twrs::run_experiment(scen);
            write_file(out_path, res.csv);
            for (const auto& a : res.aggregates) {
                std::printf(
                    "P=%g dB: feasible %d/%d, mean total_mse=%.6g, mean sum_rate=%.6g, "
                    "mean ber=%.6g\n",
                    a.P_db, a.feasible_count, a.total, a.mean_total_mse, a.mean_sum_rate,
                    a.mean_ber);
            }
        } else if (conv->parsed()) {
            auto res = twrs::run_convergence(scen, inits);
            write_file(out_path, res.csv);
            std::printf("wrote %zu trace points\n", res.rows.size());
        } else if (comp->parsed()) {
            auto r = twrs::complexity_report(scen.N, scen.M, scen.K, eps, l_rs, l_j,
                                             samples);
            std::printf("n_bs    = %.6g\n", r.n_bs);
            std::printf("n_rd    = %.6g\n", r.n_rd);
            std::printf("n_rs    = %.6g\n", r.n_rs);
            std::printf("n_joint = %.6g\n", r.n_joint);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
