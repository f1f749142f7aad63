#include "dcr/fock.hpp"

#include <cmath>
#include <string>

#include "dcr/error.hpp"

namespace dcr {

namespace {

constexpr double kImagResidue = 1e-10;

bool choose_sparse(Storage storage, std::size_t dim) {
    switch (storage) {
    case Storage::Dense:
        return false;
    case Storage::Sparse:
        return true;
    case Storage::Auto:
        break;
    }
    return dim > kSparseThreshold;
}

void require_dim(std::size_t dim) {
    if (dim < 2) {
        throw InvalidDimension("Fock truncation dimension must be >= 2, got " + std::to_string(dim));
    }
}

void require_same_layout(const SpaceLayout& a, const SpaceLayout& b, const char* where) {
    if (!(a == b)) {
        throw LayoutMismatch(std::string(where) + ": operands live on different layouts");
    }
}

QOperator from_triplets(std::size_t dim, const std::vector<Eigen::Triplet<Complex>>& triplets,
                        Storage storage) {
    SparseMatrix m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    m.setFromTriplets(triplets.begin(), triplets.end());
    m.makeCompressed();
    auto layout = SpaceLayout::single(dim);
    if (choose_sparse(storage, dim)) {
        return QOperator(layout, std::move(m));
    }
    return QOperator(layout, DenseMatrix(m));
}

} // namespace

// ---------------------------------------------------------------- SpaceLayout

SpaceLayout::SpaceLayout(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) {
        throw InvalidDimension("layout needs at least one mode");
    }
    total_ = 1;
    for (std::size_t d : dims_) {
        require_dim(d);
        total_ *= d;
    }
}

std::size_t SpaceLayout::index_of(std::span<const std::size_t> occupations) const {
    if (occupations.size() != dims_.size()) {
        throw LayoutMismatch("occupation tuple has " + std::to_string(occupations.size()) +
                             " entries, layout has " + std::to_string(dims_.size()) + " modes");
    }
    std::size_t index = 0;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        if (occupations[i] >= dims_[i]) {
            throw InvalidDimension("occupation " + std::to_string(occupations[i]) + " of mode " +
                                   std::to_string(i) + " exceeds truncation " +
                                   std::to_string(dims_[i]));
        }
        index = index * dims_[i] + occupations[i];
    }
    return index;
}

std::vector<std::size_t> SpaceLayout::occupations_of(std::size_t index) const {
    std::vector<std::size_t> occ(dims_.size());
    for (std::size_t i = dims_.size(); i-- > 0;) {
        occ[i] = index % dims_[i];
        index /= dims_[i];
    }
    return occ;
}

// ---------------------------------------------------------------- QOperator

QOperator::QOperator(SpaceLayout layout, DenseMatrix elements)
    : layout_(std::move(layout)), elements_(std::move(elements)) {
    const auto& m = std::get<DenseMatrix>(elements_);
    const auto n = static_cast<Eigen::Index>(layout_.total_dim());
    if (m.rows() != n || m.cols() != n) {
        throw LayoutMismatch("matrix shape does not match layout dimension " + std::to_string(n));
    }
}

QOperator::QOperator(SpaceLayout layout, SparseMatrix elements)
    : layout_(std::move(layout)), elements_(std::move(elements)) {
    auto& m = std::get<SparseMatrix>(elements_);
    const auto n = static_cast<Eigen::Index>(layout_.total_dim());
    if (m.rows() != n || m.cols() != n) {
        throw LayoutMismatch("matrix shape does not match layout dimension " + std::to_string(n));
    }
    m.makeCompressed();
}

DenseMatrix QOperator::to_dense() const {
    if (const auto* d = std::get_if<DenseMatrix>(&elements_)) {
        return *d;
    }
    return DenseMatrix(std::get<SparseMatrix>(elements_));
}

SparseMatrix QOperator::to_sparse() const {
    if (const auto* s = std::get_if<SparseMatrix>(&elements_)) {
        return *s;
    }
    SparseMatrix s = std::get<DenseMatrix>(elements_).sparseView(0.0, 0.0);
    s.makeCompressed();
    return s;
}

QOperator QOperator::with_storage(Storage storage) const {
    if (choose_sparse(storage, dim())) {
        return QOperator(layout_, to_sparse());
    }
    return QOperator(layout_, to_dense());
}

Complex QOperator::coeff(std::size_t row, std::size_t col) const {
    const auto r = static_cast<Eigen::Index>(row);
    const auto c = static_cast<Eigen::Index>(col);
    if (const auto* d = std::get_if<DenseMatrix>(&elements_)) {
        return (*d)(r, c);
    }
    return std::get<SparseMatrix>(elements_).coeff(r, c);
}

double QOperator::max_abs() const {
    if (const auto* d = std::get_if<DenseMatrix>(&elements_)) {
        return d->size() == 0 ? 0.0 : d->cwiseAbs().maxCoeff();
    }
    const auto& s = std::get<SparseMatrix>(elements_);
    double best = 0.0;
    for (Eigen::Index k = 0; k < s.nonZeros(); ++k) {
        best = std::max(best, std::abs(s.valuePtr()[k]));
    }
    return best;
}

QOperator QOperator::adjoint() const {
    if (const auto* d = std::get_if<DenseMatrix>(&elements_)) {
        return QOperator(layout_, DenseMatrix(d->adjoint()));
    }
    return QOperator(layout_, SparseMatrix(std::get<SparseMatrix>(elements_).adjoint()));
}

bool QOperator::is_hermitian(double tol) const {
    const double scale = std::max(1.0, max_abs());
    return max_abs_difference(*this, adjoint()) <= tol * scale;
}

bool QOperator::is_diagonal() const {
    if (const auto* d = std::get_if<DenseMatrix>(&elements_)) {
        for (Eigen::Index c = 0; c < d->cols(); ++c) {
            for (Eigen::Index r = 0; r < d->rows(); ++r) {
                if (r != c && (*d)(r, c) != Complex(0.0, 0.0)) {
                    return false;
                }
            }
        }
        return true;
    }
    const auto& s = std::get<SparseMatrix>(elements_);
    for (Eigen::Index r = 0; r < s.outerSize(); ++r) {
        for (SparseMatrix::InnerIterator it(s, r); it; ++it) {
            if (it.col() != r && it.value() != Complex(0.0, 0.0)) {
                return false;
            }
        }
    }
    return true;
}

Eigen::VectorXd QOperator::real_diagonal() const {
    if (const auto* d = std::get_if<DenseMatrix>(&elements_)) {
        return d->diagonal().real();
    }
    return std::get<SparseMatrix>(elements_).diagonal().real();
}

Vector QOperator::apply(const Vector& v) const {
    if (v.size() != static_cast<Eigen::Index>(dim())) {
        throw LayoutMismatch("vector length does not match operator dimension");
    }
    if (const auto* d = std::get_if<DenseMatrix>(&elements_)) {
        return (*d) * v;
    }
    return std::get<SparseMatrix>(elements_) * v;
}

QOperator operator+(const QOperator& a, const QOperator& b) {
    require_same_layout(a.layout_, b.layout_, "operator+");
    if (a.is_sparse() || b.is_sparse()) {
        return QOperator(a.layout_, SparseMatrix(a.to_sparse() + b.to_sparse()));
    }
    return QOperator(a.layout_, DenseMatrix(std::get<DenseMatrix>(a.elements_) +
                                            std::get<DenseMatrix>(b.elements_)));
}

QOperator operator-(const QOperator& a, const QOperator& b) {
    require_same_layout(a.layout_, b.layout_, "operator-");
    if (a.is_sparse() || b.is_sparse()) {
        return QOperator(a.layout_, SparseMatrix(a.to_sparse() - b.to_sparse()));
    }
    return QOperator(a.layout_, DenseMatrix(std::get<DenseMatrix>(a.elements_) -
                                            std::get<DenseMatrix>(b.elements_)));
}

QOperator operator*(const QOperator& a, const QOperator& b) {
    require_same_layout(a.layout_, b.layout_, "operator*");
    if (a.is_sparse() || b.is_sparse()) {
        return QOperator(a.layout_, SparseMatrix((a.to_sparse() * b.to_sparse()).pruned(0.0)));
    }
    return QOperator(a.layout_, DenseMatrix(std::get<DenseMatrix>(a.elements_) *
                                            std::get<DenseMatrix>(b.elements_)));
}

QOperator operator*(Complex s, const QOperator& a) {
    if (a.is_sparse()) {
        return QOperator(a.layout_, SparseMatrix(s * std::get<SparseMatrix>(a.elements_)));
    }
    return QOperator(a.layout_, DenseMatrix(s * std::get<DenseMatrix>(a.elements_)));
}

QOperator commutator(const QOperator& a, const QOperator& b) { return a * b - b * a; }

double max_abs_difference(const QOperator& a, const QOperator& b) {
    require_same_layout(a.layout(), b.layout(), "max_abs_difference");
    if (a.is_sparse() || b.is_sparse()) {
        SparseMatrix diff = a.to_sparse() - b.to_sparse();
        double best = 0.0;
        for (Eigen::Index k = 0; k < diff.nonZeros(); ++k) {
            best = std::max(best, std::abs(diff.valuePtr()[k]));
        }
        return best;
    }
    const DenseMatrix diff = a.to_dense() - b.to_dense();
    return diff.size() == 0 ? 0.0 : diff.cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------- constructors

QOperator identity(std::size_t dim, Storage storage) {
    require_dim(dim);
    std::vector<Eigen::Triplet<Complex>> t;
    for (std::size_t n = 0; n < dim; ++n) {
        t.emplace_back(n, n, 1.0);
    }
    return from_triplets(dim, t, storage);
}

QOperator annihilation(std::size_t dim, Storage storage) {
    require_dim(dim);
    std::vector<Eigen::Triplet<Complex>> t;
    for (std::size_t n = 1; n < dim; ++n) {
        t.emplace_back(n - 1, n, std::sqrt(static_cast<double>(n)));
    }
    return from_triplets(dim, t, storage);
}

QOperator creation(std::size_t dim, Storage storage) {
    require_dim(dim);
    std::vector<Eigen::Triplet<Complex>> t;
    for (std::size_t n = 1; n < dim; ++n) {
        t.emplace_back(n, n - 1, std::sqrt(static_cast<double>(n)));
    }
    return from_triplets(dim, t, storage);
}

QOperator number(std::size_t dim, Storage storage) {
    require_dim(dim);
    std::vector<Eigen::Triplet<Complex>> t;
    for (std::size_t n = 1; n < dim; ++n) {
        t.emplace_back(n, n, static_cast<double>(n));
    }
    return from_triplets(dim, t, storage);
}

QOperator embed(const QOperator& op, std::size_t mode_index, const SpaceLayout& layout,
                Storage storage) {
    if (mode_index >= layout.num_modes()) {
        throw LayoutMismatch("mode index " + std::to_string(mode_index) + " out of range for " +
                             std::to_string(layout.num_modes()) + "-mode layout");
    }
    const std::size_t d = layout.dim(mode_index);
    if (op.dim() != d) {
        throw LayoutMismatch("operator dimension " + std::to_string(op.dim()) +
                             " does not match mode " + std::to_string(mode_index) +
                             " truncation " + std::to_string(d));
    }
    std::size_t left = 1;
    for (std::size_t i = 0; i < mode_index; ++i) {
        left *= layout.dim(i);
    }
    const std::size_t right = layout.total_dim() / (left * d);

    const SparseMatrix local = op.to_sparse();
    std::vector<Eigen::Triplet<Complex>> t;
    t.reserve(static_cast<std::size_t>(local.nonZeros()) * left * right);
    for (std::size_t l = 0; l < left; ++l) {
        for (Eigen::Index r = 0; r < local.outerSize(); ++r) {
            for (SparseMatrix::InnerIterator it(local, r); it; ++it) {
                const std::size_t row0 = (l * d + static_cast<std::size_t>(it.row())) * right;
                const std::size_t col0 = (l * d + static_cast<std::size_t>(it.col())) * right;
                for (std::size_t k = 0; k < right; ++k) {
                    t.emplace_back(row0 + k, col0 + k, it.value());
                }
            }
        }
    }
    const auto n = static_cast<Eigen::Index>(layout.total_dim());
    SparseMatrix full(n, n);
    full.setFromTriplets(t.begin(), t.end());
    full.makeCompressed();
    if (choose_sparse(storage, layout.total_dim())) {
        return QOperator(layout, std::move(full));
    }
    return QOperator(layout, DenseMatrix(full));
}

// ---------------------------------------------------------------- states

StateVector::StateVector(SpaceLayout layout, Vector amplitudes)
    : layout_(std::move(layout)), amplitudes_(std::move(amplitudes)) {
    if (amplitudes_.size() != static_cast<Eigen::Index>(layout_.total_dim())) {
        throw LayoutMismatch("state length does not match layout dimension");
    }
    const double n = amplitudes_.norm();
    if (std::abs(n - 1.0) > 1e-9) {
        throw ContractViolation("state vector is not normalized (norm " + std::to_string(n) + ")");
    }
}

StateVector StateVector::fock(const SpaceLayout& layout, std::span<const std::size_t> occupations) {
    return basis(layout, layout.index_of(occupations));
}

StateVector StateVector::basis(const SpaceLayout& layout, std::size_t index) {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(layout.total_dim()));
    v(static_cast<Eigen::Index>(index)) = 1.0;
    return StateVector(layout, std::move(v));
}

DensityMatrix::DensityMatrix(SpaceLayout layout, DenseMatrix elements)
    : layout_(std::move(layout)), elements_(std::move(elements)) {
    const auto n = static_cast<Eigen::Index>(layout_.total_dim());
    if (elements_.rows() != n || elements_.cols() != n) {
        throw LayoutMismatch("density matrix shape does not match layout dimension");
    }
    const double scale = std::max(1.0, elements_.cwiseAbs().maxCoeff());
    if ((elements_ - elements_.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw ContractViolation("density matrix is not Hermitian");
    }
    const Complex tr = elements_.trace();
    if (std::abs(tr - Complex(1.0, 0.0)) > 1e-9) {
        throw ContractViolation("density matrix trace is " + std::to_string(tr.real()));
    }
    const bool diagonal = elements_.isDiagonal(0.0);
    const double lowest = diagonal ? elements_.diagonal().real().minCoeff()
                                   : Eigen::SelfAdjointEigenSolver<DenseMatrix>(
                                         elements_, Eigen::EigenvaluesOnly)
                                         .eigenvalues()
                                         .minCoeff();
    if (lowest < -1e-10) {
        throw ContractViolation("density matrix has negative eigenvalue " + std::to_string(lowest));
    }
}

DensityMatrix DensityMatrix::pure(const StateVector& state) {
    const Vector& v = state.amplitudes();
    return DensityMatrix(state.layout(), v * v.adjoint());
}

DensityMatrix DensityMatrix::maximally_mixed(const SpaceLayout& layout) {
    const auto n = static_cast<Eigen::Index>(layout.total_dim());
    return DensityMatrix(layout, DenseMatrix::Identity(n, n) / static_cast<double>(n));
}

DensityMatrix tensor_product(std::span<const DensityMatrix> factors) {
    if (factors.empty()) {
        throw InvalidDimension("tensor_product needs at least one factor");
    }
    std::vector<std::size_t> dims;
    DenseMatrix acc = DenseMatrix::Ones(1, 1);
    for (const auto& f : factors) {
        for (std::size_t d : f.layout().dims()) {
            dims.push_back(d);
        }
        const DenseMatrix& b = f.elements();
        DenseMatrix next(acc.rows() * b.rows(), acc.cols() * b.cols());
        for (Eigen::Index i = 0; i < acc.rows(); ++i) {
            for (Eigen::Index j = 0; j < acc.cols(); ++j) {
                next.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = acc(i, j) * b;
            }
        }
        acc = std::move(next);
    }
    return DensityMatrix(SpaceLayout(std::move(dims)), std::move(acc));
}

namespace {

double real_or_throw(Complex value) {
    if (std::abs(value.imag()) > kImagResidue * std::max(1.0, std::abs(value.real()))) {
        throw ContractViolation("expectation value has imaginary residue " +
                                std::to_string(value.imag()));
    }
    return value.real();
}

void require_observable(const QOperator& obs, const SpaceLayout& layout) {
    require_same_layout(obs.layout(), layout, "expectation");
    if (!obs.is_hermitian()) {
        throw ContractViolation("observable is not Hermitian");
    }
}

} // namespace

double expectation(const QOperator& obs, const StateVector& state) {
    require_observable(obs, state.layout());
    const Vector& v = state.amplitudes();
    return real_or_throw(v.dot(obs.apply(v)));
}

double expectation(const QOperator& obs, const DensityMatrix& state) {
    require_observable(obs, state.layout());
    const DenseMatrix& rho = state.elements();
    Complex tr{0.0, 0.0};
    if (obs.is_sparse()) {
        const SparseMatrix s = obs.to_sparse();
        for (Eigen::Index r = 0; r < s.outerSize(); ++r) {
            for (SparseMatrix::InnerIterator it(s, r); it; ++it) {
                tr += it.value() * rho(it.col(), it.row());
            }
        }
    } else {
        tr = (obs.to_dense().cwiseProduct(rho.transpose())).sum();
    }
    return real_or_throw(tr);
}

} // namespace dcr
