// Acceptance runner: one PASS/FAIL line per criterion.
// Usage: dcr_acceptance [criterion...]   (no arguments runs all of them)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "dcr/cavity.hpp"
#include "dcr/dynamics.hpp"
#include "dcr/error.hpp"
#include "dcr/model.hpp"
#include "dcr/scenario.hpp"
#include "dcr/thermal.hpp"
#include "oracles.hpp"

using namespace dcr;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = DCR_SCENARIO_DIR;

Scenario bundled(const std::string& name) { return load_scenario(kScenarios / (name + ".json")); }

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

struct Criterion {
    std::string name;
    double budget_seconds; // <= 0 means no runtime limit
    std::function<void(Outcome&)> body;
};

double cold_min(const Trajectory& t, const std::string& cold) {
    return t.energies.col(static_cast<Eigen::Index>(t.mode_index(cold))).minCoeff();
}

std::vector<double> column(const Trajectory& t, const std::string& label) {
    const auto c = t.energies.col(static_cast<Eigen::Index>(t.mode_index(label)));
    return {c.data(), c.data() + c.size()};
}

// ---------------------------------------------------------------------------

void operator_algebra(Outcome& o) {
    double worst_comm = 0.0;
    for (std::size_t d = 2; d <= 40; ++d) {
        const auto a = annihilation(d, Storage::Dense);
        const auto c = commutator(a, creation(d, Storage::Dense)).to_dense();
        DenseMatrix expect = DenseMatrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        expect(static_cast<Eigen::Index>(d - 1), static_cast<Eigen::Index>(d - 1)) = 1.0 - static_cast<double>(d);
        worst_comm = std::max(worst_comm, (c - expect).cwiseAbs().maxCoeff());
    }
    o.require(worst_comm <= 1e-12, "[a, a†] = I - d|d-1><d-1|");

    // embed(A)·embed(B) = embed(AB) and operators on different modes commute
    const SpaceLayout layout({3, 4, 2, 3});
    double worst_hom = 0.0;
    for (std::size_t mode = 0; mode < layout.num_modes(); ++mode) {
        const auto d = layout.dim(mode);
        const auto a = annihilation(d);
        const auto n = number(d);
        for (Storage st : {Storage::Dense, Storage::Sparse}) {
            worst_hom = std::max(worst_hom, max_abs_difference(embed(a, mode, layout, st) * embed(n, mode, layout, st),
                                                               embed(a * n, mode, layout, st)));
        }
        std::vector<int> dims(layout.dims().begin(), layout.dims().end());
        const oracle::Mat ref = oracle::on_mode(oracle::lower(static_cast<int>(d)), mode, dims);
        worst_hom = std::max(worst_hom, (embed(a, mode, layout).to_dense() - ref).cwiseAbs().maxCoeff());
        for (std::size_t other = 0; other < layout.num_modes(); ++other) {
            if (other != mode) {
                const auto b = embed(creation(layout.dim(other)), other, layout);
                worst_hom = std::max(worst_hom, commutator(embed(a, mode, layout), b).max_abs());
            }
        }
    }
    o.require(worst_hom <= 1e-12, "embed homomorphism");

    std::size_t models = 0;
    bool hermitian = true;
    for (const char* name : {"fig2_scaled", "fig3_scaled", "fig4_scaled", "fig6_scaled", "free_theory",
                             "derived_example"}) {
        Scenario s = bundled(name);
        if (s.modes.size() > 3) {
            s = with_dims(s, std::vector<std::size_t>(s.modes.size(), 4));
        }
        const auto m = resolve_model(s).model;
        hermitian = hermitian && m.hamiltonian().is_hermitian(0.0);
        ++models;
    }
    o.require(hermitian, "every constructed H is Hermitian");
    o.detail << "commutator err " << worst_comm << ", embed err " << worst_hom << ", " << models
             << " Hamiltonians exactly Hermitian";
}

void conservation(Outcome& o) {
    const Scenario s = bundled("fig2_scaled");
    o.require(s.modes.size() == 3 && s.modes[0].dim == 12 && s.modes[1].dim == 12 && s.modes[2].dim == 12,
              "fig2_scaled has dims 12 per mode");
    o.require(s.times.t_max == 200.0, "t_max = 200");
    Scenario strict = s;
    strict.engine.norm_drift = 1e-9;
    strict.engine.energy_drift_rel = 1e-8;
    const auto r = simulate(strict); // every member is checked against the drift limits during propagation
    const auto& t = r.trajectory;
    const double e0 = t.total_energy(0);
    const double e_drift = (t.total_energy.array() - e0).abs().maxCoeff() / std::max(std::abs(e0), 1.0);
    double q_drift = 0.0;
    for (Eigen::Index k = 0; k < t.charges.cols(); ++k) {
        const double x0 = t.charges(0, k);
        q_drift = std::max(q_drift, (t.charges.col(k).array() - x0).abs().maxCoeff() / std::max(std::abs(x0), 1.0));
    }
    o.require(e_drift <= 1e-8 && t.meta.max_energy_drift_rel <= 1e-8, "relative <H> drift <= 1e-8");
    o.require(q_drift <= 1e-8 && t.meta.max_charge_drift_rel <= 1e-8, "Q and D drift <= 1e-8");
    o.require(t.charges.cols() == 2, "Q and D tracked");
    o.detail << "total_dim 1728, members " << t.meta.members << ", <H> drift " << e_drift << ", charge drift "
             << q_drift << ", per-member max energy drift " << t.meta.max_energy_drift_rel;
}

void oracle_equivalence(Outcome& o) {
    const std::vector<std::vector<ModeSpec>> cases{
        {{"f", 3.0, 3, 1.3}, {"c1", 1.0, 3, 2.0}, {"c2", 2.0, 3, 1.3}},
        {{"f", 3.0, 2, 1.3}, {"c1", 1.0, 2, 2.0}, {"c2", 2.0, 2, 1.3}, {"c3", 1.8, 2, 1.84}, {"c4", 1.2, 2, 1.84}},
    };
    const auto times = uniform_times(200.0, 400);
    double worst = 0.0;
    for (const auto& modes : cases) {
        std::vector<InteractionTerm> terms{{1, 2, 0.05}};
        if (modes.size() == 5) {
            terms.push_back({3, 4, 0.05});
        }
        const auto m = build_hamiltonian(modes, terms);
        const auto obs = standard_observables(m);
        const auto ens = product_ensemble(modes, {.eps_tail = 0.0});
        const auto a = ensemble_expectations(m, ens, times, obs);
        const auto b = density_matrix_expectations(m, product_gibbs_state(modes), times, obs);
        worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
    }
    o.require(worst <= 1e-9, "all observables agree to 1e-9");
    o.detail << "max |ensemble - density matrix| = " << worst;
}

void two_level_transfer(Outcome& o) {
    const double g = 0.05;
    const auto m = build_hamiltonian({{"f", 3.0, 2, 0.0}, {"c1", 1.0, 2, 0.0}, {"c2", 2.0, 2, 0.0}}, {{1, 2, g}});
    // {|0,1,1>, |1,0,0>} sector, diagonalized on its own
    Eigen::Matrix2d sector;
    sector << 3.0, -g, -g, 3.0;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(sector);
    const double t_half = std::numbers::pi / (eig.eigenvalues()(1) - eig.eigenvalues()(0));
    const std::vector<std::size_t> start{0, 1, 1}, target{1, 0, 0};
    const auto psi0 = StateVector::fock(m.layout(), start);
    const auto goal = StateVector::fock(m.layout(), target);
    const std::vector<double> times{0.0, t_half};
    double worst = 1.0;
    for (Method method : {Method::Eigen, Method::Krylov}) {
        PropagatorOptions opts;
        opts.method = method;
        const auto states = evolve_state(m, psi0, times, opts);
        const double f = std::norm(goal.amplitudes().dot(states.back().amplitudes()));
        worst = std::min(worst, f);
        o.detail << to_string(method) << " infidelity " << 1.0 - f << "; ";
    }
    o.require(worst >= 1.0 - 1e-8, "fidelity >= 1 - 1e-8");
    o.detail << "t_half = " << t_half;
}

void refrigeration(Outcome& o) {
    const Scenario s = bundled("fig2_scaled");
    o.require(s.modes[0].frequency == 3.0 && s.modes[1].frequency == 1.0 && s.modes[2].frequency == 2.0,
              "omega = (3, 1, 2)");
    o.require(s.modes[0].temperature == s.modes[2].temperature && s.modes[1].temperature > s.modes[0].temperature,
              "T_f = T_2 < T_1");
    o.require(s.coupling.g == 0.05, "g = 0.05");
    const auto r = simulate(s).report;
    const double cold_drop = (r.cold_initial - r.cold_min) / r.cold_initial;
    const double squid_rise = (r.squid_max - r.squid_initial) / r.squid_initial;
    o.require(cold_drop >= 0.01, "min E_2 at least 1% below E_2(0)");
    o.require(squid_rise >= 0.01, "max E_f at least 1% above E_f(0)");
    o.require(r.cooling_achieved && r.regime_ok, "report flags");
    o.detail << "E_2: " << r.cold_initial << " -> " << r.cold_min << " (-" << 100 * cold_drop << "%), E_f: "
             << r.squid_initial << " -> " << r.squid_max << " (+" << 100 * squid_rise << "%)";
}

struct Comparison {
    double four = 0.0;
    double two = 0.0;
    Trajectory four_traj;
    Trajectory two_traj;
};

Comparison against_baseline(const Scenario& s) {
    Comparison c;
    const auto cold = s.refrigerator.cold;
    c.four_traj = simulate(s).trajectory;
    c.two_traj = simulate(two_mode_baseline(s)).trajectory;
    c.four = cold_min(c.four_traj, cold);
    c.two = cold_min(c.two_traj, cold);
    return c;
}

void degraded(Outcome& o) {
    const Scenario s = bundled("fig3_scaled");
    const double tf = s.modes[0].temperature;
    o.require(s.modes[3].temperature == s.modes[4].temperature && s.modes[3].temperature > tf, "T_3 = T_4 > T_f");
    const auto c = against_baseline(s);
    o.require(c.four > c.two, "four-mode min E_2 > two-mode min E_2");
    o.detail << "min E_2 four-mode " << c.four << " vs two-mode " << c.two;
}

void enhanced(Outcome& o) {
    const Scenario s = bundled("fig5_scaled");
    const double tf = s.modes[0].temperature;
    o.require(s.modes[3].temperature == tf && s.modes[4].temperature == tf && s.modes[2].temperature == tf,
              "T_3 = T_4 = T_f = T_2");
    Scenario fig4 = bundled("fig4_scaled");
    fig4.name = s.name;
    fig4.description = s.description;
    o.require(fig4 == s, "fig4_scaled and fig5_scaled describe the same run");
    const auto c = against_baseline(s);
    o.require(c.four < c.two, "four-mode min E_2 < two-mode min E_2");
    const auto cold = s.refrigerator.cold;
    const double level = c.two;
    const double dwell_four = dwell_time_below(c.four_traj.times, column(c.four_traj, cold), level);
    const double dwell_two = dwell_time_below(c.two_traj.times, column(c.two_traj, cold), level);
    o.require(dwell_four > dwell_two, "dwell below the two-mode minimum is longer");
    o.detail << "min E_2 four-mode " << c.four << " vs two-mode " << c.two << "; time below " << level << ": "
             << dwell_four << " vs " << dwell_two;
}

void monotone_sweep(Outcome& o) {
    const Scenario s = bundled("fig6_scaled");
    const std::vector<double> ladder{1.3, 0.8, 0.02};
    const auto rows = sweep(s, {"modes[c3].temperature", "modes[c4].temperature"}, ladder);
    bool ok = rows.size() == ladder.size();
    for (std::size_t i = 0; ok && i < rows.size(); ++i) {
        ok = rows[i].ok && rows[i].value == ladder[i];
        o.detail << "T_3=T_4=" << rows[i].value << ": min E_2 " << rows[i].report.cold_min << "; ";
        if (ok && i > 0) {
            ok = rows[i].report.cold_min <= rows[i - 1].report.cold_min;
        }
    }
    o.require(ok, "min E_2 non-increasing down the ladder");
}

void cavity_suite(Outcome& o) {
    using namespace dcr::cavity;
    constexpr double pi = std::numbers::pi;

    // χ ≡ 0: c_J = 0 and cos f_0 = 0
    CavityGeometry free;
    free.josephson_strength = 1.0;
    free.inductive_ratio = 1.0;
    free.flux_bias = pi / 2.0;
    ModeSolverOptions no_derivative;
    no_derivative.df_step = 0.0;
    double free_err = 0.0;
    const auto free_modes = solve_modes(free, 12, no_derivative);
    for (std::size_t n = 0; n < free_modes.size(); ++n) {
        free_err = std::max(free_err, std::abs(free_modes[n].k - static_cast<double>(n + 1) * pi));
    }
    o.require(free_err <= 1e-10, "k_n = n pi to 1e-10");

    // symmetric branch pinned to odd multiples of π as e_J grows
    double previous = 1.0;
    bool approaching = true;
    for (double ej : {1e2, 1e4, 1e6, 1e8}) {
        CavityGeometry g;
        g.josephson_strength = ej;
        double worst = 0.0;
        for (const auto& m : solve_modes(g, 8)) {
            if (m.parity == Parity::Symmetric) {
                const double odd = 2.0 * std::round((m.k / pi - 1.0) / 2.0) + 1.0;
                worst = std::max(worst, std::abs(m.k - odd * pi));
            }
        }
        approaching = approaching && worst < previous;
        previous = worst;
    }
    o.require(approaching && previous <= 1e-6, "perfect-mirror limit");

    double gram_err = 0.0;
    for (double cj : {0.0, 0.01, 0.2}) {
        CavityGeometry g;
        g.cap_ratio = cj;
        g.josephson_strength = 50.0;
        g.flux_bias = 0.3;
        const auto modes = solve_modes(g, 10);
        gram_err = std::max(gram_err, (gram_matrix(modes, g) - Eigen::MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff());
    }
    o.require(gram_err <= 1e-8, "Gram matrix within 1e-8 of identity");

    CavityGeometry g;
    g.cap_ratio = 0.01;
    g.josephson_strength = 50.0;
    g.flux_bias = 0.4;
    const auto modes = solve_modes(g, 6);
    const auto h = coupling_matrix(modes, g, 1e-6);
    const auto h2 = coupling_matrix(modes, g, 5e-7);
    const double scale = h.entries.cwiseAbs().maxCoeff();
    const double rich = (h2.entries - h.entries).cwiseAbs().maxCoeff() / scale;
    o.require(scale > 0.0 && rich <= 1e-6, "Richardson consistency 1e-6 relative");
    o.detail << "nπ err " << free_err << ", mirror err " << previous << ", Gram err " << gram_err
             << ", Richardson rel " << rich;
}

void thermal_suite(Outcome& o) {
    // Tail bound: the truncated occupation falls short of n̄ by d·τ/(1 - τ) <= d·ε/(1 - ε).
    // The 10·ε·(1 + n̄) form holds only while ln(1/ε) <= ~9.2, so it is checked on that range.
    double worst_tail = 0.0;
    double worst_ten_eps = 0.0;
    for (double w : {0.5, 1.0, 2.0, 3.0}) {
        for (double t : {0.05, 0.3, 1.3, 2.0, 10.0, 65.0}) {
            for (double eps : {1e-3, 1e-4, 1e-6, 1e-9}) {
                const auto d = recommend_dim(w, t, eps);
                const auto gs = gibbs_state(w, t, d);
                double n = 0.0;
                for (Eigen::Index i = 0; i < gs.rho.elements().rows(); ++i) {
                    n += static_cast<double>(i) * gs.rho.elements()(i, i).real();
                }
                const double nbar = bose_occupation(w, t);
                const double bound = static_cast<double>(d) * eps / (1.0 - eps);
                worst_tail = std::max(worst_tail, (std::abs(n - nbar) - 1e-12 * (1.0 + nbar)) / bound);
                if (eps >= 1e-4) {
                    worst_ten_eps = std::max(worst_ten_eps, std::abs(n - nbar) / (10.0 * eps * (1.0 + nbar)));
                }
            }
        }
    }
    o.require(worst_tail <= 1.0, "|n - nbar| <= d eps / (1 - eps) at recommend_dim");
    o.require(worst_ten_eps <= 1.0, "|n - nbar| <= 10 eps (1 + nbar) for eps >= 1e-4");

    bool exact = bose_occupation(2.0, 0.0) == 0.0 && recommend_dim(2.0, 0.0, 1e-6) == 2;
    const auto vac = gibbs_state(1.0, 0.0, 6);
    DenseMatrix proj = DenseMatrix::Zero(6, 6);
    proj(0, 0) = 1.0;
    exact = exact && vac.rho.elements() == proj && vac.tail_mass == 0.0;
    const std::vector<ModeSpec> cold{{"f", 3.0, 5, 0.0}, {"c1", 1.0, 5, 0.0}, {"c2", 2.0, 5, 0.0}};
    const auto ens = product_ensemble(cold);
    exact = exact && ens.members.size() == 1 && ens.members[0].weight == 1.0 && ens.members[0].basis_index == 0 &&
            ens.discarded_mass == 0.0;
    o.require(exact, "T = 0 gives exactly the vacuum");
    o.detail << "worst |n - nbar| / (d eps/(1-eps)) = " << worst_tail << ", / (10 eps (1 + nbar)) = " << worst_ten_eps
             << "; T = 0 cases exact";
}

void truncation_convergence(Outcome& o) {
    const Scenario s = bundled("fig2_scaled");
    const auto c = convergence_check(s, {{8, 8, 8}, {12, 12, 12}, {16, 16, 16}}, 0.01);
    const double top_delta = *c.rungs[1].delta_to_next;
    const double limit = 0.01 * c.rungs[1].cold_initial;
    o.require(top_delta <= limit && c.converged, "top-rung max |dE_2| <= 1% of E_2(0)");
    o.require(*c.rungs[0].delta_to_next > top_delta, "deltas shrink up the ladder");
    o.detail << "deltas " << *c.rungs[0].delta_to_next << ", " << top_delta << " (limit " << limit << ")";
}

const std::vector<Criterion>& criteria() {
    static const std::vector<Criterion> all{
        {"operator_algebra", 1.0, operator_algebra},
        {"conservation", 30.0, conservation},
        {"oracle_equivalence", 10.0, oracle_equivalence},
        {"two_level_transfer", 0.0, two_level_transfer},
        {"refrigeration", 60.0, refrigeration},
        {"degraded_cooling", 0.0, degraded},
        {"enhanced_cooling", 0.0, enhanced},
        {"monotone_sweep", 0.0, monotone_sweep},
        {"cavity_solver", 5.0, cavity_suite},
        {"thermal_suite", 0.0, thermal_suite},
        {"truncation_convergence", 0.0, truncation_convergence},
    };
    return all;
}

bool run_one(const Criterion& c) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
        c.body(o);
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail << "[exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_seconds > 0.0 && secs >= c.budget_seconds) {
        o.pass = false;
        o.detail << " [over runtime budget " << c.budget_seconds << " s]";
    }
    std::printf("%s %s (%.2f s): %s\n", o.pass ? "PASS" : "FAIL", c.name.c_str(), secs, o.detail.str().c_str());
    std::fflush(stdout);
    return o.pass;
}

} // namespace

int main(int argc, char** argv) {
    std::vector<std::string> wanted(argv + 1, argv + argc);
    if (wanted.size() == 1 && wanted[0] == "--list") {
        for (const auto& c : criteria()) {
            std::printf("%s\n", c.name.c_str());
        }
        return 0;
    }
    bool ok = true;
    std::size_t ran = 0;
    for (const auto& c : criteria()) {
        if (wanted.empty() || std::find(wanted.begin(), wanted.end(), c.name) != wanted.end()) {
            ok = run_one(c) && ok;
            ++ran;
        }
    }
    if (ran == 0) {
        std::fprintf(stderr, "no criterion matched\n");
        return 2;
    }
    return ok ? 0 : 1;
}
