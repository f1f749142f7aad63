// thermal.hpp: Gibbs states, Bose occupations and the Fock-product thermal ensemble

#pragma once

#include <cstddef>
#include <vector>

#include "dcr/fock.hpp"
#include "dcr/model.hpp"

namespace dcr {

/// 1/(e^{ω/T} - 1); zero at T = 0.
double bose_occupation(double omega, double temperature);

/// Truncated single-mode Gibbs populations p_n ∝ e^{-ωn/T}, renormalized.
std::vector<double> gibbs_populations(double omega, double temperature, std::size_t dim);

struct GibbsState {
    DensityMatrix rho;
    /// Mass e^{-ω·dim/T} of the untruncated distribution above the cutoff.
    double tail_mass = 0.0;
};

GibbsState gibbs_state(double omega, double temperature, std::size_t dim);

/// Smallest dim >= 2 with e^{-ω·dim/T} <= eps_tail.
std::size_t recommend_dim(double omega, double temperature, double eps_tail);

/// Tensor product of per-mode truncated Gibbs states, in mode order.
DensityMatrix product_gibbs_state(const std::vector<ModeSpec>& modes);

struct EnsembleMember {
    std::vector<std::size_t> occupations;
    std::size_t basis_index = 0;
    double weight = 0.0;
};

/// Exact Fock-product decomposition of a product Gibbs state, heaviest first.
struct ThermalEnsemble {
    SpaceLayout layout;
    std::vector<EnsembleMember> members;
    double discarded_mass = 0.0;
};

struct EnsembleOptions {
    double eps_tail = 0.0;
    std::size_t max_members = 1'000'000;
};

/// Best-first enumeration by weight; ties broken lexicographically on the
/// occupation tuple. Stops once the accumulated weight reaches 1 - eps_tail
/// (eps_tail = 0 enumerates every state of nonzero weight).
ThermalEnsemble product_ensemble(const std::vector<ModeSpec>& modes, const EnsembleOptions& opts = {});

} // namespace dcr
