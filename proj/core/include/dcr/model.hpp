// model.hpp: rotating-wave Hamiltonian of the SQUID mode coupled to cavity-mode pairs

#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "dcr/fock.hpp"

namespace dcr {

/// One oscillator. Frequencies in ω_0, temperatures in ħω_0/k_B.
struct ModeSpec {
    std::string label;
    double frequency = 1.0;
    std::size_t dim = 2;
    double temperature = 0.0;

    bool operator==(const ModeSpec&) const = default;
};

/// -ħ g (a_f† a_m a_n + h.c.) between cavity modes n and m, given as
/// layout indices (the SQUID is index 0).
struct InteractionTerm {
    std::size_t n = 1;
    std::size_t m = 2;
    double g = 0.0;

    bool operator==(const InteractionTerm&) const = default;
};

using ModePair = std::pair<std::size_t, std::size_t>;

/// Unordered pairs (n < m) of 1-based cavity positions with
/// |ω_n + ω_m - ω_f| <= tolerance. A negative tolerance selects 1e-9·ω_f.
std::vector<ModePair> resonant_pairs(const std::vector<double>& cavity_frequencies,
                                     double omega_f, double tolerance = -1.0);

struct ConservedCharge {
    std::string name;
    QOperator op;
};

class HamiltonianModel {
public:
    HamiltonianModel(std::vector<ModeSpec> modes, std::vector<InteractionTerm> terms,
                     SpaceLayout layout, QOperator h0, QOperator hint);

    const std::vector<ModeSpec>& modes() const noexcept { return modes_; }
    const std::vector<InteractionTerm>& terms() const noexcept { return terms_; }
    const SpaceLayout& layout() const noexcept { return layout_; }
    const QOperator& h0() const noexcept { return h0_; }
    const QOperator& hint() const noexcept { return hint_; }
    const QOperator& hamiltonian() const noexcept { return h_; }

    /// a†a embedded on mode i.
    QOperator number_operator(std::size_t mode) const;

private:
    std::vector<ModeSpec> modes_;
    std::vector<InteractionTerm> terms_;
    SpaceLayout layout_;
    QOperator h0_;
    QOperator hint_;
    QOperator h_;
};

struct BuildOptions {
    /// Resonance tolerance; negative selects 1e-9·ω_f.
    double resonance_tolerance = -1.0;
    Storage storage = Storage::Auto;
};

/// H0 = Σ ω_i a_i†a_i, Hint = -Σ g (a_f† a_m a_n + a_f a_m† a_n†). modes[0] is the SQUID.
HamiltonianModel build_hamiltonian(std::vector<ModeSpec> modes, std::vector<InteractionTerm> terms,
                                   const BuildOptions& opts = {});

/// Q = 2N_f + Σ_c N_c, plus N_n - N_m for every term-connected component that is
/// exactly one disjoint pair (n, m).
std::vector<ConservedCharge> conserved_charges(const HamiltonianModel& model);

} // namespace dcr
