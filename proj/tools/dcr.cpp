// dcr: command-line front end for scenario runs, sweeps and checks

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dcr/checks.hpp"
#include "dcr/error.hpp"
#include "dcr/scenario.hpp"

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

std::vector<double> parse_values(const std::string& s) {
    std::vector<double> out;
    for (const auto& v : split(s, ',')) {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) {
            throw std::invalid_argument("bad value '" + v + "'");
        }
        out.push_back(x);
    }
    return out;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw dcr::Error("cannot open " + path + " for writing");
    }
    return os;
}

void print_report(const dcr::RefrigeratorReport& r) {
    std::printf("cold mode %s: E(0) = %.6g, min = %.6g at t = %.4g, dwell below %.2f*E(0) = %.4g\n",
                r.cold_label.c_str(), r.cold_initial, r.cold_min, r.t_min, r.threshold_fraction, r.dwell);
    std::printf("squid: E(0) = %.6g, max = %.6g at t = %.4g\n", r.squid_initial, r.squid_max, r.t_squid_max);
    std::printf("cooling achieved: %s, regime T_cold <= T_f < T_hot: %s\n", r.cooling_achieved ? "yes" : "no",
                r.regime_ok ? "yes" : "no (outside the refrigerator regime)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamical-Casimir absorption refrigerator simulator"};
    app.require_subcommand(1);

    std::string config;
    std::string out_dir = ".";
    std::string method;
    unsigned threads = 0;
    auto* simulate = app.add_subcommand("simulate", "Run a scenario and write trajectory, metadata and report");
    simulate->add_option("--config", config, "Scenario JSON")->required()->check(CLI::ExistingFile);
    simulate->add_option("--out-dir", out_dir, "Output directory");
    simulate->add_option("--method", method, "Propagator override")->check(CLI::IsMember({"auto", "eig", "krylov", "rk4"}));
    simulate->add_option("--threads", threads, "Worker threads (default: scenario, then DCR_THREADS, then 1)");
    bool baseline = false;
    simulate->add_flag("--baseline", baseline, "Also run the two-mode baseline (extra cavity modes dropped)");

    std::string out;
    std::size_t count = 0;
    auto* modes = app.add_subcommand("modes", "Tabulate cavity modes of a derived-coupling scenario");
    modes->add_option("--config", config, "Scenario JSON")->required()->check(CLI::ExistingFile);
    modes->add_option("--out", out, "CSV path (a .json sidecar is written next to it)")->required();
    modes->add_option("--count", count, "Number of modes (default: highest mapped index, at least 4)");

    std::string param;
    std::string values;
    auto* sweep = app.add_subcommand("sweep", "Run one scenario per value of a parameter");
    sweep->add_option("--config", config, "Scenario JSON")->required()->check(CLI::ExistingFile);
    sweep->add_option("--param", param, "Comma-separated field paths, e.g. modes[c3].temperature,modes[c4].temperature")
        ->required();
    sweep->add_option("--values", values, "Comma-separated values")->required();
    sweep->add_option("--out", out, "Summary CSV")->required();
    sweep->add_option("--threads", threads, "Worker threads");
    std::string rows_dir;
    sweep->add_option("--out-dir", rows_dir, "Also write each row's trajectory, metadata and report here");

    std::string dims;
    auto* convergence = app.add_subcommand("convergence", "Rerun a scenario on a truncation ladder");
    convergence->add_option("--config", config, "Scenario JSON")->required()->check(CLI::ExistingFile);
    convergence->add_option("--dims", dims, "Per-mode dims for each rung, e.g. 8,12,16")->required();
    convergence->add_option("--out", out, "Convergence CSV (stdout when absent)");
    convergence->add_option("--threads", threads, "Worker threads");

    auto* check = app.add_subcommand("check", "Run the built-in invariant suite");

    CLI11_PARSE(app, argc, argv);

    try {
        if (check->parsed()) {
            bool all = true;
            for (const auto& r : dcr::run_invariant_checks()) {
                std::printf("%s %s: %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
                all = all && r.passed;
            }
            return all ? 0 : 1;
        }

        dcr::Scenario s = dcr::load_scenario(config);
        if (threads > 0) {
            s.engine.threads = threads;
        }
        if (!method.empty()) {
            s.engine.method = method;
        }

        if (simulate->parsed()) {
            const auto r = dcr::run(s, out_dir);
            const auto paths = dcr::output_paths(s, out_dir);
            std::printf("%s: %zu members, method %s, %.2f s\n", s.name.c_str(), r.trajectory.meta.members,
                        r.trajectory.meta.method.c_str(), r.trajectory.meta.wall_seconds);
            print_report(r.report);
            std::printf("wrote %s\n", paths.csv.string().c_str());
            if (baseline) {
                const auto b = dcr::two_mode_baseline(s);
                const auto rb = dcr::run(b, out_dir);
                std::printf("baseline %s: min cold energy %.6g (with extra modes %.6g)\n", b.name.c_str(),
                            rb.report.cold_min, r.report.cold_min);
                std::printf("wrote %s\n", dcr::output_paths(b, out_dir).csv.string().c_str());
            }
            return 0;
        }
        if (modes->parsed()) {
            if (s.coupling.mode != dcr::CouplingMode::Derived) {
                std::fprintf(stderr, "error: modes needs a scenario with derived coupling\n");
                return 2;
            }
            std::size_t n = count;
            if (n == 0) {
                n = 4;
                for (const auto& cm : s.coupling.derived.cavity_modes) {
                    n = std::max(n, cm.second);
                }
            }
            const auto& g = s.coupling.derived.geometry;
            const auto table = dcr::mode_table(g, n);
            auto os = open_out(out);
            dcr::write_modes_csv(os, table);
            auto js = open_out(std::filesystem::path(out).replace_extension(".json").string());
            js << dcr::modes_json(g, table);
            return 0;
        }
        if (sweep->parsed()) {
            const auto rows = dcr::sweep(s, split(param, ','), parse_values(values), rows_dir);
            auto os = open_out(out);
            dcr::write_sweep_csv(os, rows);
            std::size_t failed = 0;
            for (const auto& r : rows) {
                failed += r.ok ? 0 : 1;
            }
            std::printf("%zu rows, %zu failed\n", rows.size(), failed);
            return 0;
        }
        if (convergence->parsed()) {
            std::vector<std::vector<std::size_t>> ladder;
            for (double d : parse_values(dims)) {
                ladder.emplace_back(s.modes.size(), static_cast<std::size_t>(d));
            }
            const auto r = dcr::convergence_check(s, ladder);
            if (out.empty()) {
                dcr::write_convergence_csv(std::cout, r);
            } else {
                auto os = open_out(out);
                dcr::write_convergence_csv(os, r);
            }
            std::printf("converged: %s\n", r.converged ? "yes" : "no");
            return r.converged ? 0 : 1;
        }
    } catch (const dcr::ScenarioError& e) {
        std::fprintf(stderr, "scenario error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
