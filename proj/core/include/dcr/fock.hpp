// fock.hpp: truncated bosonic Fock spaces, ladder operators and tensor-product embedding

#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace dcr {

using Complex = std::complex<double>;
using DenseMatrix = Eigen::MatrixXcd;
using SparseMatrix = Eigen::SparseMatrix<Complex, Eigen::RowMajor>;
using Vector = Eigen::VectorXcd;

/// Storage requested from an operator constructor. `Auto` picks sparse once the
/// space is larger than kSparseThreshold.
enum class Storage { Auto, Dense, Sparse };

inline constexpr std::size_t kSparseThreshold = 1024;

/// Ordered per-mode truncation dimensions. Mode 0 is the most significant
/// digit of the flat basis index (by convention the SQUID mode).
class SpaceLayout {
public:
    SpaceLayout() = default;
    explicit SpaceLayout(std::vector<std::size_t> dims);

    static SpaceLayout single(std::size_t dim) { return SpaceLayout({dim}); }

    const std::vector<std::size_t>& dims() const noexcept { return dims_; }
    std::size_t dim(std::size_t mode) const { return dims_.at(mode); }
    std::size_t num_modes() const noexcept { return dims_.size(); }
    std::size_t total_dim() const noexcept { return total_; }

    std::size_t index_of(std::span<const std::size_t> occupations) const;
    std::vector<std::size_t> occupations_of(std::size_t index) const;

    bool operator==(const SpaceLayout& other) const { return dims_ == other.dims_; }

private:
    std::vector<std::size_t> dims_;
    std::size_t total_ = 0;
};

/// Complex matrix on a Fock space, stored dense or sparse. Immutable.
class QOperator {
public:
    QOperator(SpaceLayout layout, DenseMatrix elements);
    QOperator(SpaceLayout layout, SparseMatrix elements);

    const SpaceLayout& layout() const noexcept { return layout_; }
    std::size_t dim() const noexcept { return layout_.total_dim(); }
    bool is_sparse() const noexcept { return std::holds_alternative<SparseMatrix>(elements_); }

    DenseMatrix to_dense() const;
    SparseMatrix to_sparse() const;
    QOperator with_storage(Storage storage) const;

    Complex coeff(std::size_t row, std::size_t col) const;
    double max_abs() const;

    QOperator adjoint() const;
    bool is_hermitian(double tol = 1e-12) const;
    bool is_diagonal() const;
    /// Real part of the diagonal; meaningful for Hermitian operators.
    Eigen::VectorXd real_diagonal() const;

    Vector apply(const Vector& v) const;

    friend QOperator operator+(const QOperator& a, const QOperator& b);
    friend QOperator operator-(const QOperator& a, const QOperator& b);
    friend QOperator operator*(const QOperator& a, const QOperator& b);
    friend QOperator operator*(Complex s, const QOperator& a);
    friend QOperator operator*(double s, const QOperator& a) { return Complex(s, 0.0) * a; }

private:
    SpaceLayout layout_;
    std::variant<DenseMatrix, SparseMatrix> elements_;
};

QOperator commutator(const QOperator& a, const QOperator& b);

/// Largest elementwise |a - b|. Layouts must match.
double max_abs_difference(const QOperator& a, const QOperator& b);

QOperator identity(std::size_t dim, Storage storage = Storage::Auto);
QOperator annihilation(std::size_t dim, Storage storage = Storage::Auto);
QOperator creation(std::size_t dim, Storage storage = Storage::Auto);
QOperator number(std::size_t dim, Storage storage = Storage::Auto);

/// I ⊗ … ⊗ op ⊗ … ⊗ I with `op` acting on `mode_index` of `layout`.
QOperator embed(const QOperator& op, std::size_t mode_index, const SpaceLayout& layout,
                Storage storage = Storage::Auto);

class StateVector {
public:
    /// Throws ContractViolation unless the amplitudes have unit norm (1e-9).
    StateVector(SpaceLayout layout, Vector amplitudes);

    static StateVector fock(const SpaceLayout& layout, std::span<const std::size_t> occupations);
    static StateVector basis(const SpaceLayout& layout, std::size_t index);

    const SpaceLayout& layout() const noexcept { return layout_; }
    const Vector& amplitudes() const noexcept { return amplitudes_; }
    double norm() const { return amplitudes_.norm(); }

private:
    SpaceLayout layout_;
    Vector amplitudes_;
};

class DensityMatrix {
public:
    /// Validates Hermiticity, unit trace (1e-9) and eigenvalues >= -1e-10.
    DensityMatrix(SpaceLayout layout, DenseMatrix elements);

    static DensityMatrix pure(const StateVector& state);
    static DensityMatrix maximally_mixed(const SpaceLayout& layout);

    const SpaceLayout& layout() const noexcept { return layout_; }
    const DenseMatrix& elements() const noexcept { return elements_; }

private:
    SpaceLayout layout_;
    DenseMatrix elements_;
};

/// Kronecker product of density matrices on consecutive modes.
DensityMatrix tensor_product(std::span<const DensityMatrix> factors);

double expectation(const QOperator& obs, const StateVector& state);
double expectation(const QOperator& obs, const DensityMatrix& state);

} // namespace dcr
