#include "dcr/dynamics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <sstream>
#include <thread>

#include "dcr/error.hpp"

namespace dcr {

namespace {

constexpr Complex kI{0.0, 1.0};

void require_times(std::span<const double> times) {
    if (times.empty()) {
        return;
    }
    if (!(times.front() >= 0.0)) {
        throw ContractViolation("time grid must start at t >= 0");
    }
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (!(times[i] >= times[i - 1])) {
            throw ContractViolation("time grid must be sorted ascending");
        }
    }
}

double energy_of(const SparseMatrix& h, const Vector& v) { return v.dot(h * v).real(); }

double relative_drift(double value, double reference) {
    return std::abs(value - reference) / std::max(std::abs(reference), 1.0);
}

unsigned resolve_threads(unsigned requested) {
    if (requested != 0) {
        return requested;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

std::string describe_member(const EnsembleMember& m) {
    std::ostringstream os;
    os << "ensemble member |";
    for (std::size_t i = 0; i < m.occupations.size(); ++i) {
        os << (i ? "," : "") << m.occupations[i];
    }
    os << "> (weight " << m.weight << ")";
    return os.str();
}

} // namespace

const char* to_string(Method m) {
    switch (m) {
    case Method::Auto:
        return "auto";
    case Method::Eigen:
        return "eig";
    case Method::Krylov:
        return "krylov";
    case Method::Rk4:
        return "rk4";
    }
    return "?";
}

Method method_from_string(const std::string& s) {
    if (s == "auto") {
        return Method::Auto;
    }
    if (s == "eig" || s == "eigen") {
        return Method::Eigen;
    }
    if (s == "krylov") {
        return Method::Krylov;
    }
    if (s == "rk4") {
        return Method::Rk4;
    }
    throw ContractViolation("unknown propagation method '" + s + "' (auto, eig, krylov, rk4)");
}

// ---------------------------------------------------------------- BlockSpectrum

BlockSpectrum::BlockSpectrum(const QOperator& h) {
    const SparseMatrix s = h.to_sparse();
    const std::size_t n = h.dim();

    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    for (Eigen::Index r = 0; r < s.outerSize(); ++r) {
        for (SparseMatrix::InnerIterator it(s, r); it; ++it) {
            if (it.col() != r && it.value() != Complex(0.0, 0.0)) {
                const std::size_t a = find(static_cast<std::size_t>(r));
                const std::size_t b = find(static_cast<std::size_t>(it.col()));
                if (a != b) {
                    parent[std::max(a, b)] = std::min(a, b);
                }
            }
        }
    }

    block_of_.assign(n, 0);
    position_of_.assign(n, 0);
    std::vector<std::size_t> root_block(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t root = find(i);
        if (root_block[root] == n) {
            root_block[root] = blocks_.size();
            blocks_.emplace_back();
        }
        Block& b = blocks_[root_block[root]];
        block_of_[i] = root_block[root];
        position_of_[i] = b.indices.size();
        b.indices.push_back(i);
    }

    for (Block& b : blocks_) {
        const auto size = static_cast<Eigen::Index>(b.indices.size());
        largest_ = std::max(largest_, b.indices.size());
        b.hamiltonian = DenseMatrix::Zero(size, size);
        for (Eigen::Index p = 0; p < size; ++p) {
            const auto row = static_cast<Eigen::Index>(b.indices[static_cast<std::size_t>(p)]);
            for (SparseMatrix::InnerIterator it(s, row); it; ++it) {
                const auto q = static_cast<Eigen::Index>(position_of_[static_cast<std::size_t>(it.col())]);
                b.hamiltonian(p, q) = it.value();
            }
        }
        if (size == 1) {
            b.energies = Eigen::VectorXd::Constant(1, b.hamiltonian(0, 0).real());
            b.vectors = DenseMatrix::Identity(1, 1);
        } else {
            Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(b.hamiltonian);
            if (eig.info() != Eigen::Success) {
                throw Error("eigendecomposition of a Hamiltonian block failed");
            }
            b.energies = eig.eigenvalues();
            b.vectors = eig.eigenvectors();
        }
    }
}

// ---------------------------------------------------------------- Propagator

Propagator::Propagator(const HamiltonianModel& model, PropagatorOptions opts)
    : model_(&model), opts_(opts), method_(opts.method), h_sparse_(model.hamiltonian().to_sparse()) {
    if (!model.hamiltonian().is_hermitian()) {
        throw ContractViolation("Hamiltonian is not Hermitian");
    }
    if (method_ == Method::Auto || method_ == Method::Eigen) {
        auto spectrum = std::make_shared<const BlockSpectrum>(model.hamiltonian());
        if (method_ == Method::Auto) {
            method_ = spectrum->largest_block() <= opts_.eigen_block_cap ? Method::Eigen : Method::Krylov;
        }
        if (method_ == Method::Eigen) {
            spectrum_ = std::move(spectrum);
        }
    }
}

Vector Propagator::advance(const Vector& v, double dt, double sign) const {
    switch (method_) {
    case Method::Eigen:
        return advance_eigen(v, dt, sign);
    case Method::Krylov:
        return advance_krylov(v, dt, sign);
    case Method::Rk4:
        return advance_rk4(v, dt, sign);
    case Method::Auto:
        break;
    }
    throw Error("propagator method unresolved");
}

Vector Propagator::advance_eigen(const Vector& v, double dt, double sign) const {
    Vector out = Vector::Zero(v.size());
    for (const auto& b : spectrum_->blocks()) {
        const auto size = static_cast<Eigen::Index>(b.indices.size());
        Vector c(size);
        bool any = false;
        for (Eigen::Index p = 0; p < size; ++p) {
            c(p) = v(static_cast<Eigen::Index>(b.indices[static_cast<std::size_t>(p)]));
            any = any || c(p) != Complex(0.0, 0.0);
        }
        if (!any) {
            continue;
        }
        Vector y = b.vectors.adjoint() * c;
        for (Eigen::Index k = 0; k < size; ++k) {
            y(k) *= std::exp(-kI * (sign * b.energies(k) * dt));
        }
        c = b.vectors * y;
        for (Eigen::Index p = 0; p < size; ++p) {
            out(static_cast<Eigen::Index>(b.indices[static_cast<std::size_t>(p)])) = c(p);
        }
    }
    return out;
}

Vector Propagator::advance_krylov(const Vector& v, double dt, double sign) const {
    const double scale = v.norm();
    if (dt == 0.0 || scale == 0.0) {
        return v;
    }
    const auto n = v.size();
    const auto m_max = static_cast<Eigen::Index>(std::min<std::size_t>(opts_.krylov_dim, static_cast<std::size_t>(n)));
    // ∞-norm bound on ‖H‖ picks the first trial step
    double h_norm = 0.0;
    for (Eigen::Index r = 0; r < h_sparse_.outerSize(); ++r) {
        double row = 0.0;
        for (SparseMatrix::InnerIterator it(h_sparse_, r); it; ++it) {
            row += std::abs(it.value());
        }
        h_norm = std::max(h_norm, row);
    }
    double tau = h_norm > 0.0 ? std::min(dt, static_cast<double>(m_max) / (2.0 * h_norm)) : dt;

    Vector w = v;
    double remaining = dt;
    while (remaining > 0.0) {
        // Lanczos basis with full reorthogonalization
        const double beta0 = w.norm();
        DenseMatrix q(n, m_max);
        Eigen::VectorXd alpha(m_max);
        Eigen::VectorXd beta(m_max);
        q.col(0) = w / beta0;
        Eigen::Index k = 0;
        bool breakdown = false;
        for (; k < m_max; ++k) {
            Vector u = h_sparse_ * q.col(k);
            alpha(k) = q.col(k).dot(u).real();
            for (int pass = 0; pass < 2; ++pass) {
                for (Eigen::Index j = 0; j <= k; ++j) {
                    u -= q.col(j).dot(u) * q.col(j);
                }
            }
            beta(k) = u.norm();
            if (beta(k) <= 1e-13 * std::max(1.0, h_norm)) {
                breakdown = true;
                ++k;
                break;
            }
            if (k + 1 < m_max) {
                q.col(k + 1) = u / beta(k);
            }
        }
        const Eigen::Index dim = std::min(k, m_max);

        Eigen::MatrixXd t = Eigen::MatrixXd::Zero(dim, dim);
        for (Eigen::Index j = 0; j < dim; ++j) {
            t(j, j) = alpha(j);
            if (j + 1 < dim) {
                t(j, j + 1) = beta(j);
                t(j + 1, j) = beta(j);
            }
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(t);
        const Eigen::VectorXd& theta = eig.eigenvalues();
        const Eigen::MatrixXd& s = eig.eigenvectors();

        double step = std::min(tau, remaining);
        Vector y;
        for (int attempt = 0;; ++attempt) {
            Vector phase(dim);
            for (Eigen::Index j = 0; j < dim; ++j) {
                phase(j) = std::exp(-kI * (sign * theta(j) * step)) * s(0, j);
            }
            y = s.cast<Complex>() * phase;
            const double err = breakdown ? 0.0 : beta(dim - 1) * std::abs(y(dim - 1));
            if (err <= opts_.krylov_tol || attempt > 60) {
                if (err > opts_.krylov_tol) {
                    throw PropagationDiverged("Krylov step failed to meet tolerance", dt - remaining);
                }
                tau = (err < 0.1 * opts_.krylov_tol) ? step * 1.5 : step;
                break;
            }
            step *= 0.5;
        }
        w = beta0 * (q.leftCols(dim) * y);
        remaining -= step;
        if (remaining < 1e-14 * dt) {
            remaining = 0.0;
        }
    }
    return w;
}

Vector Propagator::advance_rk4(const Vector& v, double dt, double sign) const {
    if (dt == 0.0) {
        return v;
    }
    const auto steps = static_cast<std::size_t>(std::ceil(dt / opts_.rk4_dt));
    const double h = dt / static_cast<double>(steps);
    const Complex factor = -kI * sign;
    Vector w = v;
    for (std::size_t i = 0; i < steps; ++i) {
        const Vector k1 = factor * (h_sparse_ * w);
        const Vector k2 = factor * (h_sparse_ * (w + 0.5 * h * k1));
        const Vector k3 = factor * (h_sparse_ * (w + 0.5 * h * k2));
        const Vector k4 = factor * (h_sparse_ * (w + h * k3));
        w += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return w;
}

std::vector<StateVector> Propagator::evolve(const StateVector& psi0, std::span<const double> times,
                                            TimeDirection dir) const {
    if (!(psi0.layout() == model_->layout())) {
        throw LayoutMismatch("initial state does not live on the model layout");
    }
    require_times(times);
    const double sign = dir == TimeDirection::Forward ? 1.0 : -1.0;
    const Vector& v0 = psi0.amplitudes();
    const double e0 = energy_of(h_sparse_, v0);

    std::vector<StateVector> out;
    out.reserve(times.size());
    Vector current = v0;
    double t_current = 0.0;
    for (double t : times) {
        if (method_ == Method::Eigen) {
            current = advance_eigen(v0, t, sign);
        } else {
            current = advance(current, t - t_current, sign);
        }
        t_current = t;
        const double norm_err = std::abs(current.norm() - 1.0);
        if (norm_err > opts_.norm_drift) {
            std::ostringstream os;
            os << "norm drift " << norm_err << " exceeds " << opts_.norm_drift << " at t = " << t;
            throw PropagationDiverged(os.str(), t);
        }
        const double e_drift = relative_drift(energy_of(h_sparse_, current), e0);
        if (e_drift > opts_.energy_drift_rel) {
            std::ostringstream os;
            os << "energy drift " << e_drift << " exceeds " << opts_.energy_drift_rel << " at t = " << t;
            throw PropagationDiverged(os.str(), t);
        }
        out.emplace_back(model_->layout(), current);
    }
    return out;
}

std::vector<StateVector> evolve_state(const HamiltonianModel& model, const StateVector& psi0,
                                      std::span<const double> times, const PropagatorOptions& opts) {
    return Propagator(model, opts).evolve(psi0, times);
}

// ---------------------------------------------------------------- observables

std::vector<Observable> standard_observables(const HamiltonianModel& model) {
    std::vector<Observable> obs;
    for (std::size_t i = 0; i < model.modes().size(); ++i) {
        obs.push_back({"N_" + model.modes()[i].label, model.number_operator(i)});
    }
    for (auto& c : conserved_charges(model)) {
        obs.push_back({c.name, std::move(c.op)});
    }
    obs.push_back({"H", model.hamiltonian()});
    return obs;
}

namespace {

void require_observables(const HamiltonianModel& model, const std::vector<Observable>& observables) {
    for (const auto& o : observables) {
        if (!(o.op.layout() == model.layout())) {
            throw LayoutMismatch("observable " + o.name + " does not live on the model layout");
        }
        if (!o.op.is_hermitian()) {
            throw ContractViolation("observable " + o.name + " is not Hermitian");
        }
    }
}

/// Observable data prepared for the block-restricted fast path.
struct BlockObservable {
    bool diagonal = true;
    Eigen::VectorXd diag;
    std::vector<DenseMatrix> blocks;
};

bool prepare_block_observable(const Observable& o, const BlockSpectrum& spec, BlockObservable& out) {
    if (o.op.is_diagonal()) {
        out.diagonal = true;
        out.diag = o.op.real_diagonal();
        return true;
    }
    const SparseMatrix s = o.op.to_sparse();
    for (Eigen::Index r = 0; r < s.outerSize(); ++r) {
        for (SparseMatrix::InnerIterator it(s, r); it; ++it) {
            if (spec.block_of(static_cast<std::size_t>(r)) !=
                spec.block_of(static_cast<std::size_t>(it.col()))) {
                return false;
            }
        }
    }
    out.diagonal = false;
    out.blocks.reserve(spec.blocks().size());
    for (const auto& b : spec.blocks()) {
        const auto size = static_cast<Eigen::Index>(b.indices.size());
        DenseMatrix m = DenseMatrix::Zero(size, size);
        for (Eigen::Index p = 0; p < size; ++p) {
            const auto row = static_cast<Eigen::Index>(b.indices[static_cast<std::size_t>(p)]);
            for (SparseMatrix::InnerIterator it(s, row); it; ++it) {
                m(p, static_cast<Eigen::Index>(spec.position_of(static_cast<std::size_t>(it.col())))) = it.value();
            }
        }
        out.blocks.push_back(std::move(m));
    }
    return true;
}

Eigen::MatrixXd member_fast(const BlockSpectrum& spec, const std::vector<BlockObservable>& obs,
                            std::size_t basis_index, std::span<const double> times,
                            const PropagatorOptions& opts) {
    const auto& b = spec.blocks()[spec.block_of(basis_index)];
    const auto p = static_cast<Eigen::Index>(spec.position_of(basis_index));
    const auto size = static_cast<Eigen::Index>(b.indices.size());
    const Vector y0 = b.vectors.row(p).adjoint();
    const double e0 = b.hamiltonian(p, p).real();

    Eigen::MatrixXd values(static_cast<Eigen::Index>(times.size()), static_cast<Eigen::Index>(obs.size()));
    Vector y(size);
    Eigen::VectorXd prob(size);
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
        const double t = times[ti];
        for (Eigen::Index k = 0; k < size; ++k) {
            y(k) = y0(k) * std::exp(-kI * (b.energies(k) * t));
        }
        const Vector c = b.vectors * y;
        prob = c.cwiseAbs2();
        const double norm_err = std::abs(std::sqrt(prob.sum()) - 1.0);
        if (norm_err > opts.norm_drift) {
            throw PropagationDiverged("norm drift " + std::to_string(norm_err), t);
        }
        const double e_drift = relative_drift(c.dot(b.hamiltonian * c).real(), e0);
        if (e_drift > opts.energy_drift_rel) {
            throw PropagationDiverged("energy drift " + std::to_string(e_drift), t);
        }
        for (std::size_t k = 0; k < obs.size(); ++k) {
            double v = 0.0;
            if (obs[k].diagonal) {
                for (Eigen::Index q = 0; q < size; ++q) {
                    v += prob(q) * obs[k].diag(static_cast<Eigen::Index>(b.indices[static_cast<std::size_t>(q)]));
                }
            } else {
                v = c.dot(obs[k].blocks[spec.block_of(basis_index)] * c).real();
            }
            values(static_cast<Eigen::Index>(ti), static_cast<Eigen::Index>(k)) = v;
        }
    }
    return values;
}

Eigen::MatrixXd member_generic(const Propagator& prop, const std::vector<Observable>& obs,
                               std::size_t basis_index, std::span<const double> times) {
    const auto states = prop.evolve(StateVector::basis(prop.model().layout(), basis_index), times);
    Eigen::MatrixXd values(static_cast<Eigen::Index>(times.size()), static_cast<Eigen::Index>(obs.size()));
    for (std::size_t ti = 0; ti < states.size(); ++ti) {
        const Vector& v = states[ti].amplitudes();
        for (std::size_t k = 0; k < obs.size(); ++k) {
            values(static_cast<Eigen::Index>(ti), static_cast<Eigen::Index>(k)) = v.dot(obs[k].op.apply(v)).real();
        }
    }
    return values;
}

} // namespace

Eigen::MatrixXd ensemble_expectations(const HamiltonianModel& model, const ThermalEnsemble& ensemble,
                                      std::span<const double> times,
                                      const std::vector<Observable>& observables,
                                      const PropagatorOptions& opts) {
    if (!(ensemble.layout == model.layout())) {
        throw LayoutMismatch("ensemble layout does not match the model");
    }
    require_times(times);
    require_observables(model, observables);
    const Propagator prop(model, opts);

    std::vector<BlockObservable> block_obs;
    bool fast = prop.method() == Method::Eigen;
    if (fast) {
        block_obs.resize(observables.size());
        for (std::size_t k = 0; k < observables.size() && fast; ++k) {
            fast = prepare_block_observable(observables[k], *prop.spectrum(), block_obs[k]);
        }
    }

    const auto& members = ensemble.members;
    const unsigned threads = resolve_threads(opts.threads);
    const std::size_t chunk = std::max<std::size_t>(1, threads) * 32;

    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(times.size()),
                                                static_cast<Eigen::Index>(observables.size()));
    std::vector<Eigen::MatrixXd> results(chunk);
    std::vector<std::exception_ptr> errors(chunk);

    for (std::size_t start = 0; start < members.size(); start += chunk) {
        const std::size_t count = std::min(chunk, members.size() - start);
        auto work = [&](std::size_t worker) {
            for (std::size_t i = worker; i < count; i += threads) {
                try {
                    const auto idx = members[start + i].basis_index;
                    results[i] = fast ? member_fast(*prop.spectrum(), block_obs, idx, times, opts)
                                      : member_generic(prop, observables, idx, times);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        };
        if (threads <= 1 || count == 1) {
            work(0);
        } else {
            std::vector<std::thread> pool;
            for (unsigned w = 0; w < threads; ++w) {
                pool.emplace_back(work, w);
            }
            for (auto& th : pool) {
                th.join();
            }
        }
        // fixed reduction order: descending weight, as enumerated
        for (std::size_t i = 0; i < count; ++i) {
            if (errors[i]) {
                const std::string who = describe_member(members[start + i]);
                try {
                    std::rethrow_exception(errors[i]);
                } catch (const PropagationDiverged& e) {
                    throw PropagationDiverged(who + ": " + e.what(), e.time());
                } catch (const std::exception& e) {
                    throw Error(who + ": " + e.what());
                }
            }
            acc += members[start + i].weight * results[i];
        }
    }
    return acc;
}

Eigen::MatrixXd density_matrix_expectations(const HamiltonianModel& model, const DensityMatrix& rho0,
                                            std::span<const double> times,
                                            const std::vector<Observable>& observables,
                                            const PropagatorOptions& opts) {
    if (!(rho0.layout() == model.layout())) {
        throw LayoutMismatch("density matrix layout does not match the model");
    }
    const std::size_t dim = model.layout().total_dim();
    if (dim > opts.dense_cap) {
        throw DenseCapExceeded("total dimension " + std::to_string(dim) + " exceeds the dense cap " +
                               std::to_string(opts.dense_cap) + "; use evolve_ensemble instead");
    }
    require_times(times);
    require_observables(model, observables);

    Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(model.hamiltonian().to_dense());
    if (eig.info() != Eigen::Success) {
        throw Error("dense eigendecomposition failed");
    }
    const DenseMatrix& v = eig.eigenvectors();
    const Eigen::VectorXd& lambda = eig.eigenvalues();
    const DenseMatrix rho_eig = v.adjoint() * rho0.elements() * v;

    // Tr[O ρ(t)] = Σ_ij Õ_ji ρ̃_ij e^{-i(λ_i - λ_j)t}
    std::vector<DenseMatrix> weights;
    weights.reserve(observables.size());
    for (const auto& o : observables) {
        const DenseMatrix o_eig = v.adjoint() * o.op.to_dense() * v;
        weights.push_back(o_eig.transpose().cwiseProduct(rho_eig));
    }

    const auto n = static_cast<Eigen::Index>(dim);
    Eigen::MatrixXd values(static_cast<Eigen::Index>(times.size()), static_cast<Eigen::Index>(observables.size()));
    Vector phase(n);
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
        for (Eigen::Index i = 0; i < n; ++i) {
            phase(i) = std::exp(-kI * (lambda(i) * times[ti]));
        }
        for (std::size_t k = 0; k < weights.size(); ++k) {
            const Complex tr = phase.transpose() * weights[k] * phase.conjugate();
            values(static_cast<Eigen::Index>(ti), static_cast<Eigen::Index>(k)) = tr.real();
        }
    }
    return values;
}

// ---------------------------------------------------------------- trajectories

std::size_t Trajectory::mode_index(const std::string& label) const {
    const auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) {
        throw ContractViolation("trajectory has no mode labelled '" + label + "'");
    }
    return static_cast<std::size_t>(it - labels.begin());
}

Trajectory make_trajectory(const HamiltonianModel& model, std::span<const double> times,
                           const Eigen::MatrixXd& values) {
    const auto& modes = model.modes();
    const auto n_modes = static_cast<Eigen::Index>(modes.size());
    const auto n_charges = values.cols() - n_modes - 1;
    if (n_charges < 1 || values.rows() != static_cast<Eigen::Index>(times.size())) {
        throw ContractViolation("expectation table does not match standard_observables()");
    }
    Trajectory tr;
    tr.times.assign(times.begin(), times.end());
    for (const auto& m : modes) {
        tr.labels.push_back(m.label);
        tr.frequencies.push_back(m.frequency);
    }
    tr.occupations = values.leftCols(n_modes);
    tr.energies = tr.occupations;
    for (Eigen::Index i = 0; i < n_modes; ++i) {
        tr.energies.col(i) *= modes[static_cast<std::size_t>(i)].frequency;
    }
    for (const auto& c : conserved_charges(model)) {
        tr.charge_names.push_back(c.name);
    }
    tr.charges = values.middleCols(n_modes, n_charges);
    tr.total_energy = values.col(values.cols() - 1);

    tr.meta.dims = model.layout().dims();
    if (!tr.times.empty()) {
        for (Eigen::Index t = 0; t < values.rows(); ++t) {
            tr.meta.max_energy_drift_rel =
                std::max(tr.meta.max_energy_drift_rel, relative_drift(tr.total_energy(t), tr.total_energy(0)));
            for (Eigen::Index c = 0; c < n_charges; ++c) {
                tr.meta.max_charge_drift_rel =
                    std::max(tr.meta.max_charge_drift_rel, relative_drift(tr.charges(t, c), tr.charges(0, c)));
            }
        }
    }
    return tr;
}

Trajectory evolve_ensemble(const HamiltonianModel& model, const ThermalEnsemble& ensemble,
                           std::span<const double> times, const PropagatorOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    const auto values = ensemble_expectations(model, ensemble, times, standard_observables(model), opts);
    Trajectory tr = make_trajectory(model, times, values);
    tr.meta.method = to_string(Propagator(model, opts).method());
    tr.meta.members = ensemble.members.size();
    tr.meta.discarded_mass = ensemble.discarded_mass;
    tr.meta.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return tr;
}

Trajectory evolve_density_matrix(const HamiltonianModel& model, const DensityMatrix& rho0,
                                 std::span<const double> times, const PropagatorOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    const auto values = density_matrix_expectations(model, rho0, times, standard_observables(model), opts);
    Trajectory tr = make_trajectory(model, times, values);
    tr.meta.method = "density-matrix";
    tr.meta.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return tr;
}

std::vector<double> uniform_times(double t_max, std::size_t n_points) {
    if (!(t_max >= 0.0) || n_points == 0) {
        throw ContractViolation("time grid needs t_max >= 0 and at least one point");
    }
    if (n_points == 1) {
        return {0.0};
    }
    std::vector<double> t(n_points);
    for (std::size_t i = 0; i < n_points; ++i) {
        t[i] = t_max * static_cast<double>(i) / static_cast<double>(n_points - 1);
    }
    return t;
}

double dwell_time_below(std::span<const double> times, std::span<const double> values, double level) {
    if (times.size() != values.size()) {
        throw ContractViolation("dwell_time_below: size mismatch");
    }
    double total = 0.0;
    for (std::size_t i = 1; i < times.size(); ++i) {
        const double dt = times[i] - times[i - 1];
        const double a = values[i - 1] - level;
        const double b = values[i] - level;
        if (a < 0.0 && b < 0.0) {
            total += dt;
        } else if (a < 0.0 && b >= 0.0) {
            total += dt * (-a) / (b - a);
        } else if (a >= 0.0 && b < 0.0) {
            total += dt * (-b) / (a - b);
        }
    }
    return total;
}

RefrigeratorReport refrigerator_report(const Trajectory& traj, const std::vector<ModeSpec>& modes,
                                       const ReportOptions& opts) {
    if (opts.cold == 0 || opts.hot == 0 || opts.cold >= modes.size() || opts.hot >= modes.size() ||
        opts.cold == opts.hot) {
        throw ContractViolation("refrigerator roles must name two distinct cavity modes");
    }
    if (traj.times.empty()) {
        throw ContractViolation("refrigerator_report needs a non-empty trajectory");
    }
    RefrigeratorReport r;
    r.cold_label = modes[opts.cold].label;
    r.hot_label = modes[opts.hot].label;
    r.threshold_fraction = opts.threshold_fraction;

    const Eigen::VectorXd cold = traj.energies.col(static_cast<Eigen::Index>(opts.cold));
    const Eigen::VectorXd squid = traj.energies.col(0);
    Eigen::Index i_min = 0;
    Eigen::Index i_max = 0;
    r.cold_min = cold.minCoeff(&i_min);
    r.squid_max = squid.maxCoeff(&i_max);
    r.cold_initial = cold(0);
    r.squid_initial = squid(0);
    r.t_min = traj.times[static_cast<std::size_t>(i_min)];
    r.t_squid_max = traj.times[static_cast<std::size_t>(i_max)];

    const std::vector<double> cold_values(cold.data(), cold.data() + cold.size());
    r.dwell = dwell_time_below(traj.times, cold_values, opts.threshold_fraction * r.cold_initial);

    const double tol = opts.tolerance_rel * std::abs(r.cold_initial) + 1e-12;
    r.cooling_achieved = r.cold_min < r.cold_initial - tol;

    const double t_f = modes[0].temperature;
    r.regime_ok = modes[opts.cold].temperature <= t_f && t_f < modes[opts.hot].temperature;
    return r;
}

} // namespace dcr
