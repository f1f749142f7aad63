#include "dcr/thermal.hpp"

#include <cmath>
#include <queue>
#include <set>
#include <sstream>

#include "dcr/error.hpp"

namespace dcr {

namespace {

void require_temperature(double temperature) {
    if (!(temperature >= 0.0)) {
        throw ContractViolation("temperature must be >= 0, got " + std::to_string(temperature));
    }
}

void require_frequency(double omega) {
    if (!(omega > 0.0)) {
        throw ContractViolation("frequency must be > 0, got " + std::to_string(omega));
    }
}

} // namespace

double bose_occupation(double omega, double temperature) {
    require_frequency(omega);
    require_temperature(temperature);
    if (temperature == 0.0) {
        return 0.0;
    }
    return 1.0 / std::expm1(omega / temperature);
}

std::vector<double> gibbs_populations(double omega, double temperature, std::size_t dim) {
    require_frequency(omega);
    require_temperature(temperature);
    if (dim < 2) {
        throw InvalidDimension("Fock truncation dimension must be >= 2");
    }
    std::vector<double> p(dim, 0.0);
    if (temperature == 0.0) {
        p[0] = 1.0;
        return p;
    }
    const double x = std::exp(-omega / temperature);
    double w = 1.0;
    double total = 0.0;
    for (std::size_t n = 0; n < dim; ++n) {
        p[n] = w;
        total += w;
        w *= x;
    }
    for (double& v : p) {
        v /= total;
    }
    return p;
}

GibbsState gibbs_state(double omega, double temperature, std::size_t dim) {
    const auto p = gibbs_populations(omega, temperature, dim);
    DenseMatrix rho = DenseMatrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (std::size_t n = 0; n < dim; ++n) {
        rho(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) = p[n];
    }
    const double tail =
        temperature == 0.0 ? 0.0 : std::exp(-omega * static_cast<double>(dim) / temperature);
    return {DensityMatrix(SpaceLayout::single(dim), std::move(rho)), tail};
}

std::size_t recommend_dim(double omega, double temperature, double eps_tail) {
    require_frequency(omega);
    require_temperature(temperature);
    if (!(eps_tail > 0.0 && eps_tail < 1.0)) {
        throw ContractViolation("eps_tail must lie in (0, 1)");
    }
    if (temperature == 0.0) {
        return 2;
    }
    auto tail = [&](std::size_t d) { return std::exp(-omega * static_cast<double>(d) / temperature); };
    auto dim = static_cast<std::size_t>(
        std::max(2.0, std::ceil(temperature * std::log(1.0 / eps_tail) / omega)));
    // settle rounding at the boundary
    while (dim > 2 && tail(dim - 1) <= eps_tail) {
        --dim;
    }
    while (tail(dim) > eps_tail) {
        ++dim;
    }
    return dim;
}

DensityMatrix product_gibbs_state(const std::vector<ModeSpec>& modes) {
    std::vector<DensityMatrix> factors;
    factors.reserve(modes.size());
    for (const auto& m : modes) {
        factors.push_back(gibbs_state(m.frequency, m.temperature, m.dim).rho);
    }
    return tensor_product(factors);
}

ThermalEnsemble product_ensemble(const std::vector<ModeSpec>& modes, const EnsembleOptions& opts) {
    if (!(opts.eps_tail >= 0.0 && opts.eps_tail < 1.0)) {
        throw ContractViolation("eps_tail must lie in [0, 1)");
    }
    std::vector<std::size_t> dims;
    std::vector<std::vector<double>> pops;
    for (const auto& m : modes) {
        dims.push_back(m.dim);
        pops.push_back(gibbs_populations(m.frequency, m.temperature, m.dim));
    }
    ThermalEnsemble out{SpaceLayout(dims), {}, 0.0};

    using Tuple = std::vector<std::size_t>;
    auto weight_of = [&](const Tuple& t) {
        double w = 1.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            w *= pops[i][t[i]];
        }
        return w;
    };
    struct Entry {
        double weight;
        Tuple occ;
    };
    // heaviest first; equal weights pop in lexicographic order
    auto lighter = [](const Entry& a, const Entry& b) {
        if (a.weight != b.weight) {
            return a.weight < b.weight;
        }
        return a.occ > b.occ;
    };
    std::priority_queue<Entry, std::vector<Entry>, decltype(lighter)> frontier(lighter);
    std::set<Tuple> queued;

    Tuple origin(modes.size(), 0);
    frontier.push({weight_of(origin), origin});
    queued.insert(origin);

    double accumulated = 0.0;
    const double target = 1.0 - opts.eps_tail;
    while (!frontier.empty()) {
        if (opts.eps_tail > 0.0 && accumulated >= target) {
            break;
        }
        Entry e = frontier.top();
        frontier.pop();
        if (!(e.weight > 0.0)) {
            continue;
        }
        if (out.members.size() >= opts.max_members) {
            std::ostringstream os;
            os << "thermal ensemble needs more than " << opts.max_members
               << " members (accumulated weight " << accumulated
               << "); lower the temperatures, raise eps_tail or the member cap";
            throw EnsembleTooLarge(os.str());
        }
        accumulated += e.weight;
        out.members.push_back({e.occ, out.layout.index_of(e.occ), e.weight});
        for (std::size_t i = 0; i < e.occ.size(); ++i) {
            if (e.occ[i] + 1 >= dims[i]) {
                continue;
            }
            Tuple next = e.occ;
            ++next[i];
            if (queued.insert(next).second) {
                const double w = weight_of(next);
                if (w > 0.0) {
                    frontier.push({w, std::move(next)});
                }
            }
        }
    }
    out.discarded_mass = std::max(0.0, 1.0 - accumulated);
    return out;
}

} // namespace dcr
