// dynamics.hpp: closed-system propagation under the time-independent RWA Hamiltonian
//
// Units: ħ = 1, frequencies in ω_0, time in 1/ω_0.

#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dcr/fock.hpp"
#include "dcr/model.hpp"
#include "dcr/thermal.hpp"

namespace dcr {

enum class Method { Auto, Eigen, Krylov, Rk4 };

const char* to_string(Method m);
Method method_from_string(const std::string& s);

struct PropagatorOptions {
    Method method = Method::Auto;
    double norm_drift = 1e-9;
    double energy_drift_rel = 1e-8;
    std::size_t krylov_dim = 30;
    /// Local error target of one Krylov step.
    double krylov_tol = 1e-12;
    double rk4_dt = 1e-3;
    /// Auto selects the eigendecomposition when the largest invariant block
    /// is at most this size.
    std::size_t eigen_block_cap = 4096;
    /// Largest total_dim accepted by the density-matrix reference path.
    std::size_t dense_cap = 1024;
    /// Worker threads for ensemble members; 0 uses the hardware concurrency.
    unsigned threads = 1;
};

/// Exact eigendecomposition of H restricted to each connected component of its
/// Fock-basis adjacency graph. H is block diagonal in this partition, so the
/// blocks are diagonalized independently.
class BlockSpectrum {
public:
    struct Block {
        std::vector<std::size_t> indices; ///< Fock basis indices, ascending
        DenseMatrix hamiltonian;          ///< H restricted to the block
        Eigen::VectorXd energies;
        DenseMatrix vectors;              ///< columns are eigenvectors
    };

    explicit BlockSpectrum(const QOperator& h);

    const std::vector<Block>& blocks() const noexcept { return blocks_; }
    std::size_t block_of(std::size_t basis_index) const { return block_of_[basis_index]; }
    std::size_t position_of(std::size_t basis_index) const { return position_of_[basis_index]; }
    std::size_t largest_block() const noexcept { return largest_; }

private:
    std::vector<Block> blocks_;
    std::vector<std::size_t> block_of_;
    std::vector<std::size_t> position_of_;
    std::size_t largest_ = 0;
};

enum class TimeDirection { Forward, Backward };

/// ψ(t) = e^{∓iHt} ψ0 with the method chosen at construction.
class Propagator {
public:
    Propagator(const HamiltonianModel& model, PropagatorOptions opts = {});

    Method method() const noexcept { return method_; }
    const PropagatorOptions& options() const noexcept { return opts_; }
    const HamiltonianModel& model() const noexcept { return *model_; }
    /// Present when the method is Eigen.
    const BlockSpectrum* spectrum() const noexcept { return spectrum_.get(); }

    /// States at each requested time (sorted, times[0] >= 0). Throws
    /// PropagationDiverged when norm or energy drift exceeds tolerance.
    std::vector<StateVector> evolve(const StateVector& psi0, std::span<const double> times,
                                    TimeDirection dir = TimeDirection::Forward) const;

private:
    Vector advance(const Vector& v, double dt, double sign) const;
    Vector advance_eigen(const Vector& v, double dt, double sign) const;
    Vector advance_krylov(const Vector& v, double dt, double sign) const;
    Vector advance_rk4(const Vector& v, double dt, double sign) const;

    const HamiltonianModel* model_;
    PropagatorOptions opts_;
    Method method_;
    SparseMatrix h_sparse_;
    std::shared_ptr<const BlockSpectrum> spectrum_;
};

std::vector<StateVector> evolve_state(const HamiltonianModel& model, const StateVector& psi0,
                                      std::span<const double> times,
                                      const PropagatorOptions& opts = {});

struct Observable {
    std::string name;
    QOperator op;
};

/// N_i for every mode, the conserved charges, and H (named "H"), in that order.
std::vector<Observable> standard_observables(const HamiltonianModel& model);

/// values(t, k) = Σ_members p · ⟨ψ_member(t)| O_k |ψ_member(t)⟩, reduced in
/// member order regardless of thread scheduling.
Eigen::MatrixXd ensemble_expectations(const HamiltonianModel& model, const ThermalEnsemble& ensemble,
                                      std::span<const double> times,
                                      const std::vector<Observable>& observables,
                                      const PropagatorOptions& opts = {});

/// values(t, k) = Tr[O_k U(t) ρ0 U(t)†] through a dense eigendecomposition of H.
Eigen::MatrixXd density_matrix_expectations(const HamiltonianModel& model, const DensityMatrix& rho0,
                                            std::span<const double> times,
                                            const std::vector<Observable>& observables,
                                            const PropagatorOptions& opts = {});

struct TrajectoryMetadata {
    std::vector<std::size_t> dims;
    std::string method;
    std::size_t members = 0;
    double discarded_mass = 0.0;
    double max_energy_drift_rel = 0.0;
    double max_charge_drift_rel = 0.0;
    double wall_seconds = 0.0;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<std::string> labels;
    std::vector<double> frequencies;
    Eigen::MatrixXd occupations; ///< n_times × n_modes
    Eigen::MatrixXd energies;    ///< ω_i N_i
    std::vector<std::string> charge_names;
    Eigen::MatrixXd charges;     ///< n_times × n_charges
    Eigen::VectorXd total_energy;
    TrajectoryMetadata meta;

    std::size_t mode_index(const std::string& label) const;
};

/// Assembles a trajectory from the values of standard_observables().
Trajectory make_trajectory(const HamiltonianModel& model, std::span<const double> times,
                           const Eigen::MatrixXd& standard_values);

Trajectory evolve_ensemble(const HamiltonianModel& model, const ThermalEnsemble& ensemble,
                           std::span<const double> times, const PropagatorOptions& opts = {});

Trajectory evolve_density_matrix(const HamiltonianModel& model, const DensityMatrix& rho0,
                                 std::span<const double> times, const PropagatorOptions& opts = {});

/// n uniform points over [0, t_max], both ends included.
std::vector<double> uniform_times(double t_max, std::size_t n_points);

/// Total time the piecewise-linear curve spends strictly below `level`.
double dwell_time_below(std::span<const double> times, std::span<const double> values, double level);

struct ReportOptions {
    std::size_t cold = 2;
    std::size_t hot = 1;
    double threshold_fraction = 0.99;
    double tolerance_rel = 1e-9;
};

struct RefrigeratorReport {
    std::string cold_label;
    std::string hot_label;
    double cold_initial = 0.0;
    double cold_min = 0.0;
    double t_min = 0.0;
    double threshold_fraction = 0.0;
    double dwell = 0.0;
    double squid_initial = 0.0;
    double squid_max = 0.0;
    double t_squid_max = 0.0;
    bool cooling_achieved = false;
    /// T_cold <= T_f < T_hot
    bool regime_ok = false;
};

RefrigeratorReport refrigerator_report(const Trajectory& traj, const std::vector<ModeSpec>& modes,
                                       const ReportOptions& opts = {});

} // namespace dcr
