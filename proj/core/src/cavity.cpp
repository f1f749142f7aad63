#include "dcr/cavity.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "dcr/error.hpp"

namespace dcr::cavity {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kResidualTol = 1e-10;
// Roots below this k·d are the (quasi) zero mode and are not reported.
constexpr double kScanStart = 1e-6;

double chi(double k, const CavityGeometry& g) {
    return 2.0 * (-g.cap_ratio * k * k + g.josephson_strength * std::cos(g.flux_bias));
}

/// Bisection on a bracket [a, b] with f(a)·f(b) < 0, run to floating-point
/// resolution.
template <class F>
double bisect(F&& f, double a, double b) {
    double fa = f(a);
    for (int it = 0; it < 400; ++it) {
        const double mid = 0.5 * (a + b);
        if (mid <= a || mid >= b) {
            break;
        }
        const double fm = f(mid);
        if (fm == 0.0) {
            return mid;
        }
        if ((fm < 0.0) == (fa < 0.0)) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    return std::abs(f(a)) <= std::abs(f(b)) ? a : b;
}

// Symmetric-branch normalization N(k) = 1/2 + sin k/(2k) + 2 c_J cos²(k/2), and N'(k).
double sym_norm(double k, double cj) {
    const double c = std::cos(0.5 * k);
    return 0.5 + std::sin(k) / (2.0 * k) + 2.0 * cj * c * c;
}

double sym_norm_dk(double k, double cj) {
    return (k * std::cos(k) - std::sin(k)) / (2.0 * k * k) - cj * std::sin(k);
}

double anti_norm(double k) { return 0.5 - std::sin(k) / (2.0 * k); }

double anti_norm_dk(double k) { return -(k * std::cos(k) - std::sin(k)) / (2.0 * k * k); }

double sym_sign(double k) { return std::cos(0.5 * k) < 0.0 ? -1.0 : 1.0; }

CavityMode make_mode(double k, Parity parity, const CavityGeometry& g) {
    CavityMode m;
    m.k = k;
    m.omega = k;
    m.parity = parity;
    if (parity == Parity::Symmetric) {
        m.amplitude = sym_sign(k) / std::sqrt(sym_norm(k, g.cap_ratio));
    } else {
        m.amplitude = 1.0 / std::sqrt(anti_norm(k));
    }
    return m;
}

struct Spectrum {
    std::vector<CavityMode> modes;
    double scan_max = 0.0;
};

Spectrum solve_spectrum(const CavityGeometry& g, std::size_t n_modes, const ModeSolverOptions& opts) {
    g.validate();
    if (n_modes == 0) {
        throw ContractViolation("solve_modes: n_modes must be >= 1");
    }
    const double k_max = static_cast<double>(n_modes + opts.extra_scan_periods) * kPi;
    const auto samples = static_cast<std::size_t>(
        std::ceil(static_cast<double>(n_modes + opts.extra_scan_periods) * opts.samples_per_pi));
    const double step = k_max / static_cast<double>(samples);

    auto residual = [&](double k) { return symmetric_residual(k, g); };

    std::vector<CavityMode> found;
    std::size_t n_sym = 0;
    double k_prev = kScanStart;
    double r_prev = residual(k_prev);
    for (std::size_t j = 1; j <= samples; ++j) {
        const double k = (j == samples) ? k_max : static_cast<double>(j) * step;
        const double r = residual(k);
        double root = -1.0;
        if (r == 0.0) {
            root = k;
        } else if (r_prev != 0.0 && (r < 0.0) != (r_prev < 0.0)) {
            root = bisect(residual, k_prev, k);
        }
        if (root > 0.0) {
            if (std::abs(residual(root)) > kResidualTol) {
                std::ostringstream os;
                os << "symmetric root near k = " << root << " has residual " << residual(root);
                throw NoRoot(os.str());
            }
            found.push_back(make_mode(root, Parity::Symmetric, g));
            ++n_sym;
        }
        k_prev = k;
        r_prev = r;
    }
    for (std::size_t m = 0;; ++m) {
        const double k = static_cast<double>(2 * m + 1) * kPi;
        if (k > k_max) {
            break;
        }
        found.push_back(make_mode(k, Parity::Antisymmetric, g));
    }
    if (found.size() < n_modes) {
        std::ostringstream os;
        os << "scan of k·d in (0, " << k_max << "] found " << found.size() << " modes ("
           << n_sym << " symmetric), " << n_modes << " requested";
        throw InsufficientScan(os.str());
    }
    std::stable_sort(found.begin(), found.end(),
                     [](const CavityMode& a, const CavityMode& b) { return a.k < b.k; });
    found.resize(n_modes);
    for (std::size_t i = 0; i < found.size(); ++i) {
        found[i].index = i + 1;
    }
    return {std::move(found), k_max};
}

CavityGeometry shifted(const CavityGeometry& g, double df) {
    CavityGeometry s = g;
    s.flux_bias += df;
    return s;
}

/// Composite Simpson over [-1/2, 0] and [0, 1/2] separately.
template <class F>
double split_simpson(F&& f, std::size_t points) {
    if (points < 3) {
        points = 3;
    }
    if (points % 2 == 0) {
        ++points;
    }
    const std::size_t intervals = points - 1;
    const double h = 0.5 / static_cast<double>(intervals);
    auto half = [&](double x0) {
        double s = f(x0) + f(x0 + 0.5);
        for (std::size_t i = 1; i < intervals; ++i) {
            s += (i % 2 == 1 ? 4.0 : 2.0) * f(x0 + static_cast<double>(i) * h);
        }
        return s * h / 3.0;
    };
    return half(-0.5) + half(0.0);
}

std::size_t resolve_points(const QuadratureOptions& q, double k_max) {
    // at least 64 samples per wavelength
    const auto needed = static_cast<std::size_t>(std::ceil(64.0 * k_max / (2.0 * kPi) * 0.5)) * 2 + 1;
    return std::max(q.points_per_half, needed);
}

} // namespace

const char* to_string(Parity p) { return p == Parity::Symmetric ? "symmetric" : "antisymmetric"; }

void CavityGeometry::validate() const {
    if (!(cap_ratio >= 0.0)) {
        throw ContractViolation("cavity geometry: cap_ratio must be >= 0");
    }
    if (!(josephson_strength > 0.0)) {
        throw ContractViolation("cavity geometry: josephson_strength must be > 0");
    }
    if (!(inductive_ratio >= 0.0)) {
        throw ContractViolation("cavity geometry: inductive_ratio must be >= 0");
    }
    if (!(std::cos(flux_bias) + inductive_ratio > 0.0)) {
        throw UnstableFluxPoint("cos f_0 + eps_L = " +
                                std::to_string(std::cos(flux_bias) + inductive_ratio) +
                                " is not positive");
    }
}

double CavityMode::value(double x) const {
    if (parity == Parity::Symmetric) {
        return amplitude * std::cos(k * (std::abs(x) - 0.5));
    }
    return amplitude * std::sin(k * x);
}

double CavityMode::dvalue_dk(double x, const CavityGeometry& g) const {
    if (parity == Parity::Symmetric) {
        const double n = sym_norm(k, g.cap_ratio);
        const double da = -0.5 * sym_sign(k) * std::pow(n, -1.5) * sym_norm_dk(k, g.cap_ratio);
        const double u = std::abs(x) - 0.5;
        return da * std::cos(k * u) - amplitude * u * std::sin(k * u);
    }
    const double n = anti_norm(k);
    const double da = -0.5 * std::pow(n, -1.5) * anti_norm_dk(k);
    return da * std::sin(k * x) + amplitude * x * std::cos(k * x);
}

double symmetric_residual(double k, const CavityGeometry& g) {
    const double c = chi(k, g);
    const double f = 2.0 * k * std::sin(0.5 * k) - c * std::cos(0.5 * k);
    return f / std::hypot(2.0 * k, c);
}

double stationary_flux(const CavityGeometry& g) {
    const double eps = g.inductive_ratio;
    const double r = g.external ? g.external->mutual_ratio : 0.0;
    const double fext = g.external ? g.external->flux : 0.0;
    if (!(eps > 0.0) && fext != 0.0) {
        throw ContractViolation("stationary_flux: needs eps_L > 0 when F_ext != 0");
    }
    auto fn = [&](double f) { return std::sin(f) + eps * (f + r * fext); };

    // Dense sign scan, then bisection; the stable root nearest zero wins.
    constexpr std::size_t kSamples = 4000;
    double best = 0.0;
    bool have = false;
    double prev_f = -kPi;
    double prev_v = fn(prev_f);
    auto consider = [&](double root) {
        if (std::cos(root) + eps <= 0.0) {
            return;
        }
        if (!have || std::abs(root) < std::abs(best)) {
            best = root;
            have = true;
        }
    };
    if (prev_v == 0.0) {
        consider(prev_f);
    }
    for (std::size_t i = 1; i <= kSamples; ++i) {
        const double f = -kPi + 2.0 * kPi * static_cast<double>(i) / static_cast<double>(kSamples);
        const double v = fn(f);
        if (v == 0.0) {
            consider(f);
        } else if (prev_v != 0.0 && (v < 0.0) != (prev_v < 0.0)) {
            consider(bisect(fn, prev_f, f));
        }
        prev_f = f;
        prev_v = v;
    }
    if (!have) {
        std::ostringstream os;
        os << "no stable root of sin f + eps_L (f + M/L_ext F_ext) on [-pi, pi] (eps_L = " << eps
           << ", M/L_ext F_ext = " << r * fext << ")";
        throw NoRoot(os.str());
    }
    return best;
}

std::vector<CavityMode> solve_modes(const CavityGeometry& g, std::size_t n_modes,
                                    const ModeSolverOptions& opts) {
    auto spectrum = solve_spectrum(g, n_modes, opts);
    if (opts.df_step > 0.0) {
        const auto dk = mode_flux_derivatives(spectrum.modes, g, opts.df_step);
        for (std::size_t i = 0; i < dk.size(); ++i) {
            spectrum.modes[i].dk_df = dk[i];
        }
    }
    return std::move(spectrum.modes);
}

std::vector<double> mode_flux_derivatives(const std::vector<CavityMode>& modes,
                                          const CavityGeometry& g, double df_step) {
    if (!(df_step > 0.0)) {
        throw ContractViolation("df_step must be > 0");
    }
    const std::size_t n = modes.size();
    ModeSolverOptions base_opts;
    base_opts.df_step = 0.0;
    // one extra mode so a swap with the first omitted mode is caught too
    const auto centre = solve_spectrum(g, n + 1, base_opts).modes;
    const auto plus = solve_spectrum(shifted(g, df_step), n + 1, base_opts).modes;
    const auto minus = solve_spectrum(shifted(g, -df_step), n + 1, base_opts).modes;

    std::vector<double> dk(n, 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
        double gap = std::numeric_limits<double>::infinity();
        if (i > 0) {
            gap = std::min(gap, centre[i].k - centre[i - 1].k);
        }
        if (i + 1 <= n) {
            gap = std::min(gap, centre[i + 1].k - centre[i].k);
        }
        const bool same_parity =
            plus[i].parity == centre[i].parity && minus[i].parity == centre[i].parity;
        const double shift = std::max(std::abs(plus[i].k - centre[i].k),
                                      std::abs(minus[i].k - centre[i].k));
        if (!same_parity || shift > 0.25 * gap) {
            std::ostringstream os;
            os << "mode " << i + 1 << " (k = " << centre[i].k
               << ") changes branch within f_0 +/- " << df_step;
            throw BranchCrossing(os.str());
        }
        if (i < n && centre[i].parity == Parity::Symmetric) {
            dk[i] = (plus[i].k - minus[i].k) / (2.0 * df_step);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(centre[i].k - modes[i].k) > 1e-9 * std::max(1.0, modes[i].k)) {
            throw ContractViolation("modes were not solved for this geometry");
        }
    }
    return dk;
}

double weighted_inner_product(const CavityMode& a, const CavityMode& b, const CavityGeometry& g,
                              const QuadratureOptions& q) {
    const std::size_t points = resolve_points(q, std::max(a.k, b.k));
    const double smooth = split_simpson([&](double x) { return a.value(x) * b.value(x); }, points);
    return smooth + 2.0 * g.cap_ratio * a.value(0.0) * b.value(0.0);
}

Eigen::MatrixXd gram_matrix(const std::vector<CavityMode>& modes, const CavityGeometry& g,
                            const QuadratureOptions& q) {
    const auto n = static_cast<Eigen::Index>(modes.size());
    Eigen::MatrixXd gram(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            gram(i, j) = weighted_inner_product(modes[static_cast<std::size_t>(i)],
                                                modes[static_cast<std::size_t>(j)], g, q);
            gram(j, i) = gram(i, j);
        }
    }
    return gram;
}

CouplingMatrix coupling_matrix(const std::vector<CavityMode>& modes, const CavityGeometry& g,
                               double df_step, const QuadratureOptions& q) {
    CouplingMatrix out;
    out.dk_df = mode_flux_derivatives(modes, g, df_step);
    const auto n = static_cast<Eigen::Index>(modes.size());
    out.entries = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < modes.size(); ++i) {
        const CavityMode& mn = modes[i];
        if (mn.parity == Parity::Antisymmetric || out.dk_df[i] == 0.0) {
            continue;
        }
        for (std::size_t j = 0; j < modes.size(); ++j) {
            const CavityMode& mm = modes[j];
            const std::size_t points = resolve_points(q, std::max(mn.k, mm.k));
            const double smooth = split_simpson(
                [&](double x) { return mm.value(x) * mn.dvalue_dk(x, g); }, points);
            const double delta = 2.0 * g.cap_ratio * mm.value(0.0) * mn.dvalue_dk(0.0, g);
            out.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                out.dk_df[i] * (smooth + delta);
        }
    }
    return out;
}

double SquidFrequency::in_josephson_units(double ecj_over_ej) const {
    if (!(ecj_over_ej > 0.0)) {
        throw ContractViolation("E_CJ/E_J must be > 0");
    }
    return factor * std::sqrt(ecj_over_ej);
}

SquidFrequency squid_frequency(const CavityGeometry& g) {
    const double s = std::cos(g.flux_bias) + g.inductive_ratio;
    if (!(s > 0.0)) {
        throw UnstableFluxPoint("cos f_0 + eps_L = " + std::to_string(s) + " is not positive");
    }
    return {std::sqrt(s)};
}

double coupling_strength(double m_nm0, double omega_n, double omega_m, double omega_f,
                         double e_cj) {
    if (!(omega_n > 0.0 && omega_m > 0.0 && omega_f > 0.0)) {
        throw ContractViolation("coupling_strength: frequencies must be positive");
    }
    if (!(e_cj >= 0.0)) {
        throw ContractViolation("coupling_strength: E_CJ must be >= 0");
    }
    return 0.5 * std::sqrt(omega_f * e_cj) * m_nm0 * std::sqrt(omega_m / omega_n);
}

} // namespace dcr::cavity
