#include "dcr/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "dcr/error.hpp"

namespace dcr {

namespace {

double resolve_tolerance(double tolerance, double omega_f) {
    return tolerance < 0.0 ? 1e-9 * omega_f : tolerance;
}

Storage resolve_storage(Storage s, std::size_t total_dim) {
    if (s != Storage::Auto) {
        return s;
    }
    return total_dim > kSparseThreshold ? Storage::Sparse : Storage::Dense;
}

} // namespace

std::vector<ModePair> resonant_pairs(const std::vector<double>& cavity_frequencies, double omega_f,
                                     double tolerance) {
    const double tol = resolve_tolerance(tolerance, omega_f);
    std::vector<ModePair> pairs;
    for (std::size_t i = 0; i < cavity_frequencies.size(); ++i) {
        for (std::size_t j = i + 1; j < cavity_frequencies.size(); ++j) {
            if (std::abs(cavity_frequencies[i] + cavity_frequencies[j] - omega_f) <= tol) {
                pairs.emplace_back(i + 1, j + 1);
            }
        }
    }
    return pairs;
}

HamiltonianModel::HamiltonianModel(std::vector<ModeSpec> modes, std::vector<InteractionTerm> terms,
                                   SpaceLayout layout, QOperator h0, QOperator hint)
    : modes_(std::move(modes)),
      terms_(std::move(terms)),
      layout_(std::move(layout)),
      h0_(std::move(h0)),
      hint_(std::move(hint)),
      h_(h0_ + hint_) {}

QOperator HamiltonianModel::number_operator(std::size_t mode) const {
    return embed(number(layout_.dim(mode), Storage::Sparse), mode, layout_,
                 h_.is_sparse() ? Storage::Sparse : Storage::Dense);
}

HamiltonianModel build_hamiltonian(std::vector<ModeSpec> modes, std::vector<InteractionTerm> terms,
                                   const BuildOptions& opts) {
    if (modes.size() < 2) {
        throw ContractViolation("a model needs the SQUID mode and at least one cavity mode");
    }
    std::vector<std::size_t> dims;
    for (std::size_t i = 0; i < modes.size(); ++i) {
        const auto& m = modes[i];
        if (!(m.frequency > 0.0)) {
            throw ContractViolation("mode " + m.label + ": frequency must be > 0");
        }
        if (!(m.temperature >= 0.0)) {
            throw ContractViolation("mode " + m.label + ": temperature must be >= 0");
        }
        dims.push_back(m.dim);
    }
    SpaceLayout layout(dims);
    const Storage storage = resolve_storage(opts.storage, layout.total_dim());
    const double omega_f = modes[0].frequency;
    const double tol = resolve_tolerance(opts.resonance_tolerance, omega_f);

    std::set<ModePair> seen;
    for (const auto& t : terms) {
        if (t.n == 0 || t.m == 0 || t.n >= modes.size() || t.m >= modes.size()) {
            throw ContractViolation("interaction term must pair two cavity modes (indices 1.." +
                                    std::to_string(modes.size() - 1) + ")");
        }
        if (t.n == t.m) {
            throw ContractViolation("interaction term pairs mode " + modes[t.n].label +
                                    " with itself");
        }
        const double detuning = modes[t.n].frequency + modes[t.m].frequency - omega_f;
        if (std::abs(detuning) > tol) {
            std::ostringstream os;
            os << "pair (" << modes[t.n].label << ", " << modes[t.m].label
               << ") is off resonance by " << detuning;
            throw ResonanceViolation(os.str());
        }
        if (!seen.insert(std::minmax(t.n, t.m)).second) {
            throw DuplicatePair("pair (" + modes[t.n].label + ", " + modes[t.m].label +
                                ") appears twice");
        }
    }

    std::vector<QOperator> a;
    a.reserve(modes.size());
    for (std::size_t i = 0; i < modes.size(); ++i) {
        a.push_back(embed(annihilation(dims[i], Storage::Sparse), i, layout, Storage::Sparse));
    }

    QOperator h0 = modes[0].frequency * (a[0].adjoint() * a[0]);
    for (std::size_t i = 1; i < modes.size(); ++i) {
        h0 = h0 + modes[i].frequency * (a[i].adjoint() * a[i]);
    }

    const auto n = static_cast<Eigen::Index>(layout.total_dim());
    QOperator hint(layout, SparseMatrix(n, n));
    for (const auto& t : terms) {
        const QOperator forward = a[0].adjoint() * a[t.m] * a[t.n];
        hint = hint - t.g * (forward + forward.adjoint());
    }

    return HamiltonianModel(std::move(modes), std::move(terms), layout, h0.with_storage(storage),
                            hint.with_storage(storage));
}

std::vector<ConservedCharge> conserved_charges(const HamiltonianModel& model) {
    const auto& modes = model.modes();
    std::vector<ConservedCharge> out;

    QOperator q = 2.0 * model.number_operator(0);
    for (std::size_t i = 1; i < modes.size(); ++i) {
        q = q + model.number_operator(i);
    }
    out.push_back({"Q", q});

    // union-find over cavity modes joined by interaction terms
    std::vector<std::size_t> parent(modes.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    for (const auto& t : model.terms()) {
        parent[find(t.n)] = find(t.m);
    }
    std::vector<std::vector<std::size_t>> components(modes.size());
    for (std::size_t i = 1; i < modes.size(); ++i) {
        components[find(i)].push_back(i);
    }
    // report pairs in order of their first member
    std::vector<ModePair> pairs;
    for (const auto& c : components) {
        if (c.size() == 2) {
            pairs.emplace_back(c[0], c[1]);
        }
    }
    std::sort(pairs.begin(), pairs.end());
    for (const auto& [i, j] : pairs) {
        out.push_back({"D_" + modes[i].label + "_" + modes[j].label,
                       model.number_operator(i) - model.number_operator(j)});
    }
    return out;
}

} // namespace dcr
