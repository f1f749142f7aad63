// cavity.hpp: eigenmodes of a SQUID-interrupted transmission-line cavity
//
// Units: total cavity length d = 1 and field velocity v = 1, so k·d and ω·d/v
// coincide with k and ω. The SQUID sits at x = 0, the cavity spans [-1/2, 1/2].

#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace dcr::cavity {

/// External flux line coupled to the SQUID loop.
struct ExternalFlux {
    double mutual_ratio = 0.0; ///< M / L_ext
    double flux = 0.0;         ///< F_ext, radians

    bool operator==(const ExternalFlux&) const = default;
};

/// Dimensionless circuit parameters.
struct CavityGeometry {
    double cap_ratio = 0.0;          ///< c_J = C_J / (C_0 d)
    double josephson_strength = 0.0; ///< e_J = E_J d / ((ħ/2e)^2 C_0 v^2)
    double inductive_ratio = 0.0;    ///< ε_L = 2 (ħ/2e)^2 / (L E_J)
    double flux_bias = 0.0;          ///< f_0, radians
    std::optional<ExternalFlux> external;

    bool operator==(const CavityGeometry&) const = default;

    /// Throws ContractViolation when c_J < 0, e_J <= 0 or ε_L < 0, and
    /// UnstableFluxPoint when cos f_0 + ε_L <= 0.
    void validate() const;
};

enum class Parity { Symmetric, Antisymmetric };

const char* to_string(Parity p);

struct CavityMode {
    std::size_t index = 0;   ///< 1-based position in the merged spectrum
    double k = 0.0;          ///< wavenumber (units 1/d)
    double omega = 0.0;      ///< v·k
    Parity parity = Parity::Symmetric;
    double amplitude = 0.0;  ///< signed normalization constant of the ansatz
    double dk_df = 0.0;      ///< dk/df at f_0 (zero for antisymmetric modes)

    double value(double x) const;
    /// ∂ψ/∂k at fixed x, including the k-dependence of the normalization.
    double dvalue_dk(double x, const CavityGeometry& g) const;
};

/// Normalized residual of the symmetric-branch root equation
/// 2k sin(k/2) - χ(k) cos(k/2) with χ(k) = 2(-c_J k² + e_J cos f_0),
/// divided by sqrt(4k² + χ²) so it behaves like sin(k/2 - θ(k)).
double symmetric_residual(double k, const CavityGeometry& g);

/// Root of sin f + ε_L (f + (M/L_ext) F_ext) = 0 in [-π, π].
double stationary_flux(const CavityGeometry& g);

struct ModeSolverOptions {
    double samples_per_pi = 40.0;
    std::size_t extra_scan_periods = 4;
    /// Flux step for the dk/df finite difference; 0 leaves dk_df at zero.
    double df_step = 1e-6;
};

/// The `n_modes` lowest modes, both parities merged and sorted by k.
std::vector<CavityMode> solve_modes(const CavityGeometry& g, std::size_t n_modes,
                                    const ModeSolverOptions& opts = {});

struct QuadratureOptions {
    std::size_t points_per_half = 2001; ///< odd, composite Simpson per half-interval
};

/// (1/d)∫ψ_a ψ_b dx + 2 c_J ψ_a(0) ψ_b(0).
double weighted_inner_product(const CavityMode& a, const CavityMode& b, const CavityGeometry& g,
                              const QuadratureOptions& q = {});

Eigen::MatrixXd gram_matrix(const std::vector<CavityMode>& modes, const CavityGeometry& g,
                            const QuadratureOptions& q = {});

/// Entries M(n, m) = M_{nm0}, both indices zero-based positions in `modes`.
struct CouplingMatrix {
    Eigen::MatrixXd entries;
    std::vector<double> dk_df;

    double operator()(std::size_t n, std::size_t m) const {
        return entries(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    }
};

/// dk/df for every mode by centered finite differences at f_0 ± df_step.
/// Throws BranchCrossing when the mode ordering changes inside the stencil.
std::vector<double> mode_flux_derivatives(const std::vector<CavityMode>& modes,
                                          const CavityGeometry& g, double df_step);

/// M_{nm0} = (dk_n/df) [ (1/d)∫ψ_m ∂ψ_n/∂k dx + 2c_J ψ_m(0) ∂ψ_n/∂k(0) ].
/// dk_n/df is recomputed with `df_step`; the modes' own dk_df is ignored.
CouplingMatrix coupling_matrix(const std::vector<CavityMode>& modes, const CavityGeometry& g,
                               double df_step = 1e-6, const QuadratureOptions& q = {});

/// ω_f = sqrt(E_J E_CJ)/ħ · sqrt(cos f_0 + ε_L).
struct SquidFrequency {
    double factor = 0.0; ///< sqrt(cos f_0 + ε_L)

    /// ω_f in units of E_J/ħ given E_CJ/E_J.
    double in_josephson_units(double ecj_over_ej) const;
};

SquidFrequency squid_frequency(const CavityGeometry& g);

/// g_{nm} = (1/2) sqrt(ω_f E_CJ/ħ) M_{nm0} sqrt(ω_m/ω_n), ħ = 1.
double coupling_strength(double m_nm0, double omega_n, double omega_m, double omega_f,
                         double e_cj);

} // namespace dcr::cavity
