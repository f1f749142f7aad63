#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dcr/dynamics.hpp"
#include "dcr/error.hpp"
#include "oracles.hpp"

using namespace dcr;

namespace {

HamiltonianModel three_mode_model(std::size_t dim, double g = 0.05, double t1 = 2.0, double tf = 1.3,
                                  double t2 = 1.3) {
    return build_hamiltonian({{"f", 3.0, dim, tf}, {"c1", 1.0, dim, t1}, {"c2", 2.0, dim, t2}}, {{1, 2, g}});
}

HamiltonianModel five_mode_model(std::size_t dim, double g = 0.05) {
    return build_hamiltonian({{"f", 3.0, dim, 1.3},
                              {"c1", 1.0, dim, 2.0},
                              {"c2", 2.0, dim, 1.3},
                              {"c3", 1.2, dim, 1.0},
                              {"c4", 1.8, dim, 1.0}},
                             {{1, 2, g}, {3, 4, g}});
}

StateVector random_state(const SpaceLayout& layout, unsigned seed) {
    return StateVector(layout, oracle::random_state(static_cast<Eigen::Index>(layout.total_dim()), seed));
}

double fidelity(const StateVector& a, const StateVector& b) {
    return std::norm(a.amplitudes().dot(b.amplitudes()));
}

} // namespace

TEST(UniformTimes, EndpointsAndSinglePoint) {
    const auto t = uniform_times(2.0, 5);
    EXPECT_EQ(t, (std::vector<double>{0.0, 0.5, 1.0, 1.5, 2.0}));
    EXPECT_EQ(uniform_times(3.0, 1), std::vector<double>{0.0});
    EXPECT_THROW(uniform_times(-1.0, 3), ContractViolation);
    EXPECT_THROW(uniform_times(1.0, 0), ContractViolation);
}

TEST(DwellTime, LinearInterpolation) {
    const std::vector<double> t{0.0, 1.0, 2.0, 3.0};
    const std::vector<double> v{1.0, -1.0, -1.0, 1.0};
    EXPECT_DOUBLE_EQ(dwell_time_below(t, v, 0.0), 2.0);
    EXPECT_DOUBLE_EQ(dwell_time_below(t, v, -1.0), 0.0);
    EXPECT_DOUBLE_EQ(dwell_time_below(t, v, 2.0), 3.0);
}

TEST(MethodNames, RoundTrip) {
    for (Method m : {Method::Auto, Method::Eigen, Method::Krylov, Method::Rk4}) {
        EXPECT_EQ(method_from_string(to_string(m)), m);
    }
    EXPECT_THROW(method_from_string("magic"), ContractViolation);
}

TEST(BlockSpectrum, BlocksPartitionBasisAndReproduceH) {
    const auto m = three_mode_model(4);
    BlockSpectrum spec(m.hamiltonian());
    const auto h = m.hamiltonian().to_dense();
    std::size_t covered = 0;
    for (std::size_t bi = 0; bi < spec.blocks().size(); ++bi) {
        const auto& b = spec.blocks()[bi];
        covered += b.indices.size();
        const DenseMatrix rebuilt = b.vectors * b.energies.cast<Complex>().asDiagonal() * b.vectors.adjoint();
        EXPECT_LT((rebuilt - b.hamiltonian).cwiseAbs().maxCoeff(), 1e-13);
        for (std::size_t p = 0; p < b.indices.size(); ++p) {
            EXPECT_EQ(spec.block_of(b.indices[p]), bi);
            EXPECT_EQ(spec.position_of(b.indices[p]), p);
        }
    }
    EXPECT_EQ(covered, m.layout().total_dim());
    // H has no entries between different blocks.
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
        for (Eigen::Index j = 0; j < h.cols(); ++j) {
            if (h(i, j) != Complex(0.0)) {
                EXPECT_EQ(spec.block_of(static_cast<std::size_t>(i)), spec.block_of(static_cast<std::size_t>(j)));
            }
        }
    }
}

TEST(Propagator, AutoPicksEigenForSmallBlocks) {
    const auto m = three_mode_model(4);
    Propagator p(m);
    EXPECT_EQ(p.method(), Method::Eigen);
    ASSERT_NE(p.spectrum(), nullptr);
    PropagatorOptions opts;
    opts.eigen_block_cap = 1;
    EXPECT_EQ(Propagator(m, opts).method(), Method::Krylov);
}

TEST(Propagator, FreeTheoryOccupationsConstant) {
    const auto m = three_mode_model(3, 0.0);
    const auto psi0 = random_state(m.layout(), 11);
    const auto times = uniform_times(50.0, 26);
    const auto states = evolve_state(m, psi0, times);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto n = m.number_operator(i);
        const double n0 = expectation(n, psi0);
        for (const auto& s : states) {
            EXPECT_NEAR(expectation(n, s), n0, 1e-12);
        }
    }
}

TEST(Propagator, MatchesDenseOracle) {
    const auto m = five_mode_model(2);
    const auto psi0 = random_state(m.layout(), 3);
    const std::vector<double> times{0.0, 0.7, 13.0, 60.0};
    const auto h = m.hamiltonian().to_dense();
    for (Method method : {Method::Eigen, Method::Krylov, Method::Rk4}) {
        PropagatorOptions opts;
        opts.method = method;
        opts.rk4_dt = 1e-3;
        opts.energy_drift_rel = 1e-6;
        opts.norm_drift = 1e-6;
        const auto states = evolve_state(m, psi0, times, opts);
        for (std::size_t i = 0; i < times.size(); ++i) {
            const oracle::Vec expect = oracle::propagator(h, times[i]) * psi0.amplitudes();
            const double tol = method == Method::Rk4 ? 1e-6 : 1e-10;
            EXPECT_LT((states[i].amplitudes() - expect).norm(), tol) << to_string(method) << " t=" << times[i];
        }
    }
}

TEST(Propagator, TwoLevelRabiTransfer) {
    const double g = 0.05;
    const auto m = three_mode_model(2, g);
    const std::vector<std::size_t> up{1, 0, 0}, down{0, 1, 1};
    const auto psi0 = StateVector::fock(m.layout(), up);
    const auto target = StateVector::fock(m.layout(), down);
    const double t_half = std::numbers::pi / (2.0 * g);
    const auto times = uniform_times(t_half, 21);
    // 2x2 sector oracle: populations cos²(gt), sin²(gt).
    for (Method method : {Method::Eigen, Method::Krylov}) {
        PropagatorOptions opts;
        opts.method = method;
        const auto states = evolve_state(m, psi0, times, opts);
        for (std::size_t i = 0; i < times.size(); ++i) {
            EXPECT_NEAR(fidelity(states[i], target), std::pow(std::sin(g * times[i]), 2), 1e-10);
        }
        EXPECT_GE(fidelity(states.back(), target), 1.0 - 1e-8);
    }
}

TEST(Propagator, EigenAndKrylovAgree) {
    const auto m = three_mode_model(4);
    const auto psi0 = random_state(m.layout(), 7);
    const auto times = uniform_times(200.0, 41);
    PropagatorOptions eig, kry;
    eig.method = Method::Eigen;
    kry.method = Method::Krylov;
    const auto a = evolve_state(m, psi0, times, eig);
    const auto b = evolve_state(m, psi0, times, kry);
    for (std::size_t i = 0; i < times.size(); ++i) {
        EXPECT_GE(fidelity(a[i], b[i]), 1.0 - 1e-9);
    }
}

TEST(Propagator, TimeReversalRecoversInitialState) {
    const auto m = three_mode_model(4);
    const auto psi0 = random_state(m.layout(), 5);
    const std::vector<double> t{0.0, 150.0};
    for (Method method : {Method::Eigen, Method::Krylov}) {
        PropagatorOptions opts;
        opts.method = method;
        Propagator p(m, opts);
        const auto fwd = p.evolve(psi0, t);
        const std::vector<double> back_t{150.0};
        const auto back = p.evolve(fwd.back(), back_t, TimeDirection::Backward);
        EXPECT_GE(fidelity(back.back(), psi0), 1.0 - 1e-8) << to_string(method);
    }
}

TEST(Propagator, TightToleranceRaisesDiverged) {
    const auto m = three_mode_model(3);
    const auto psi0 = random_state(m.layout(), 2);
    PropagatorOptions opts;
    opts.method = Method::Rk4;
    opts.rk4_dt = 0.5;
    opts.norm_drift = 1e-14;
    const std::vector<double> t{0.0, 10.0};
    try {
        evolve_state(m, psi0, t, opts);
        FAIL() << "expected PropagationDiverged";
    } catch (const PropagationDiverged& e) {
        EXPECT_GT(e.time(), 0.0);
    }
}

TEST(Propagator, RejectsForeignLayoutAndBadGrid) {
    const auto m = three_mode_model(3);
    const auto other = StateVector::basis(SpaceLayout({2, 2, 2}), 0);
    const std::vector<double> t{0.0};
    EXPECT_THROW(evolve_state(m, other, t), LayoutMismatch);
    const std::vector<double> bad{1.0, 0.5};
    EXPECT_THROW(evolve_state(m, StateVector::basis(m.layout(), 0), bad), ContractViolation);
}

TEST(StandardObservables, Ordering) {
    const auto m = three_mode_model(2);
    const auto obs = standard_observables(m);
    std::vector<std::string> names;
    for (const auto& o : obs) {
        names.push_back(o.name);
    }
    EXPECT_EQ(names, (std::vector<std::string>{"N_f", "N_c1", "N_c2", "Q", "D_c1_c2", "H"}));
}

// The ensemble route and the full density-matrix route must give the same
// observables to 1e-9.
TEST(Ensemble, MatchesDensityMatrixPath) {
    for (const auto& m : {three_mode_model(3), five_mode_model(2)}) {
        const auto times = uniform_times(200.0, 51);
        const auto ens = product_ensemble(m.modes());
        const auto rho = product_gibbs_state(m.modes());
        const auto a = evolve_ensemble(m, ens, times);
        const auto b = evolve_density_matrix(m, rho, times);
        EXPECT_LT((a.occupations - b.occupations).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LT((a.charges - b.charges).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LT((a.total_energy - b.total_energy).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_EQ(b.meta.method, "density-matrix");
    }
}

TEST(Ensemble, KrylovMembersMatchEigenMembers) {
    const auto m = three_mode_model(3);
    const auto times = uniform_times(100.0, 21);
    const auto ens = product_ensemble(m.modes(), {.eps_tail = 1e-3});
    PropagatorOptions kry;
    kry.method = Method::Krylov;
    const auto a = evolve_ensemble(m, ens, times);
    const auto b = evolve_ensemble(m, ens, times, kry);
    EXPECT_LT((a.occupations - b.occupations).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Ensemble, SingleMemberEqualsPureEvolution) {
    const auto m = three_mode_model(3, 0.05, 0.0, 0.0, 0.0);
    const auto ens = product_ensemble(m.modes());
    ASSERT_EQ(ens.members.size(), 1u);
    const std::vector<std::size_t> occ{2, 0, 1};
    ThermalEnsemble one{m.layout(), {{occ, m.layout().index_of(occ), 1.0}}, 0.0};
    const auto times = uniform_times(80.0, 17);
    const auto tr = evolve_ensemble(m, one, times);
    const auto states = evolve_state(m, StateVector::fock(m.layout(), occ), times);
    for (std::size_t i = 0; i < times.size(); ++i) {
        for (std::size_t k = 0; k < 3; ++k) {
            EXPECT_NEAR(tr.occupations(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)),
                        expectation(m.number_operator(k), states[i]), 1e-12);
        }
    }
}

TEST(Ensemble, ThreadCountDoesNotChangeResults) {
    const auto m = three_mode_model(6);
    const auto times = uniform_times(200.0, 101);
    const auto ens = product_ensemble(m.modes(), {.eps_tail = 1e-6});
    PropagatorOptions one, four;
    one.threads = 1;
    four.threads = 4;
    const auto a = evolve_ensemble(m, ens, times, one);
    const auto b = evolve_ensemble(m, ens, times, four);
    EXPECT_TRUE(a.occupations == b.occupations);
    EXPECT_TRUE(a.charges == b.charges);
    EXPECT_TRUE(a.total_energy == b.total_energy);
}

TEST(Ensemble, ConservesChargesAndEnergy) {
    const auto m = five_mode_model(3);
    const auto times = uniform_times(200.0, 41);
    const auto tr = evolve_ensemble(m, product_ensemble(m.modes(), {.eps_tail = 1e-6}), times);
    for (Eigen::Index k = 0; k < tr.charges.cols(); ++k) {
        EXPECT_LT((tr.charges.col(k).array() - tr.charges(0, k)).abs().maxCoeff(), 1e-9);
    }
    EXPECT_LT((tr.total_energy.array() - tr.total_energy(0)).abs().maxCoeff(), 1e-8 * std::abs(tr.total_energy(0)));
    EXPECT_LE(tr.meta.max_energy_drift_rel, 1e-8);
}

TEST(DensityMatrix, PureStateMatchesStateEvolution) {
    const auto m = three_mode_model(3);
    const auto psi0 = random_state(m.layout(), 9);
    const auto times = uniform_times(120.0, 13);
    const auto tr = evolve_density_matrix(m, DensityMatrix::pure(psi0), times);
    const auto states = evolve_state(m, psi0, times);
    for (std::size_t i = 0; i < times.size(); ++i) {
        for (std::size_t k = 0; k < 3; ++k) {
            EXPECT_NEAR(tr.occupations(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)),
                        expectation(m.number_operator(k), states[i]), 1e-10);
        }
    }
}

TEST(DensityMatrix, MaximallyMixedIsStationary) {
    const auto m = three_mode_model(3);
    const auto times = uniform_times(100.0, 11);
    const auto tr = evolve_density_matrix(m, DensityMatrix::maximally_mixed(m.layout()), times);
    for (Eigen::Index k = 0; k < tr.occupations.cols(); ++k) {
        EXPECT_LT((tr.occupations.col(k).array() - tr.occupations(0, k)).abs().maxCoeff(), 1e-12);
    }
    EXPECT_NEAR(tr.occupations(0, 1), 1.0, 1e-12); // mean of {0,1,2}
}

TEST(DensityMatrix, RefusesLargeSpaces) {
    const auto m = three_mode_model(11);
    const std::vector<double> t{0.0};
    EXPECT_THROW(evolve_density_matrix(m, DensityMatrix::maximally_mixed(m.layout()), t), DenseCapExceeded);
}

TEST(Trajectory, EnergiesAreFrequencyWeighted) {
    const auto m = three_mode_model(3);
    const auto times = uniform_times(10.0, 3);
    const auto tr = evolve_ensemble(m, product_ensemble(m.modes()), times);
    EXPECT_EQ(tr.labels, (std::vector<std::string>{"f", "c1", "c2"}));
    for (Eigen::Index k = 0; k < 3; ++k) {
        EXPECT_TRUE((tr.energies.col(k) - m.modes()[static_cast<std::size_t>(k)].frequency * tr.occupations.col(k))
                        .isZero(0.0));
    }
    EXPECT_EQ(tr.mode_index("c2"), 2u);
    EXPECT_THROW(tr.mode_index("zz"), ContractViolation);
}

TEST(RefrigeratorReport, ColdModeCoolsInRegime) {
    const auto m = three_mode_model(8);
    const auto times = uniform_times(200.0, 201);
    const auto tr = evolve_ensemble(m, product_ensemble(m.modes(), {.eps_tail = 1e-6}), times);
    const auto r = refrigerator_report(tr, m.modes());
    EXPECT_EQ(r.cold_label, "c2");
    EXPECT_EQ(r.hot_label, "c1");
    EXPECT_TRUE(r.regime_ok);
    EXPECT_TRUE(r.cooling_achieved);
    EXPECT_LT(r.cold_min, 0.99 * r.cold_initial);
    EXPECT_GT(r.squid_max, 1.01 * r.squid_initial);
    EXPECT_GT(r.dwell, 0.0);
}

TEST(RefrigeratorReport, FreeTheoryDoesNotCool) {
    const auto m = three_mode_model(4, 0.0);
    const auto times = uniform_times(200.0, 21);
    const auto tr = evolve_ensemble(m, product_ensemble(m.modes()), times);
    const auto r = refrigerator_report(tr, m.modes());
    EXPECT_FALSE(r.cooling_achieved);
    EXPECT_EQ(r.dwell, 0.0);
}

TEST(RefrigeratorReport, RegimeFlag) {
    // Hot mode colder than the SQUID: not the refrigerator regime.
    const auto m = three_mode_model(3, 0.05, 1.0, 1.3, 1.3);
    const auto times = uniform_times(10.0, 3);
    const auto tr = evolve_ensemble(m, product_ensemble(m.modes()), times);
    EXPECT_FALSE(refrigerator_report(tr, m.modes()).regime_ok);
    EXPECT_THROW(refrigerator_report(tr, m.modes(), {.cold = 1, .hot = 1}), ContractViolation);
}
