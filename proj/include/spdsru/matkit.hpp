#pragma once

// Dense kernels for the small symmetric / triangular matrices used throughout
// the toolkit. Sizes are tiny (n <= ~32), so everything is unblocked and
// allocation is a plain std::vector.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "spdsru/errors.hpp"

namespace spdsru {

class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    DenseMatrix(std::initializer_list<std::initializer_list<double>> init);

    static DenseMatrix identity(std::size_t n);
    static DenseMatrix diagonal(std::span<const double> d);
    static DenseMatrix column(std::span<const double> v);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool square() const noexcept { return rows_ == cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    DenseMatrix transposed() const;
    double trace() const;
    double frobenius_norm() const;
    double max_abs() const;
    bool all_finite() const;

    DenseMatrix& operator+=(const DenseMatrix& o);
    DenseMatrix& operator-=(const DenseMatrix& o);
    DenseMatrix& operator*=(double s);

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b);
DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b);
DenseMatrix operator*(DenseMatrix a, double s);
DenseMatrix operator*(double s, DenseMatrix a);
DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b);

/// a * bᵀ without forming the transpose.
DenseMatrix mul_transpose(const DenseMatrix& a, const DenseMatrix& b);
/// aᵀ * b without forming the transpose.
DenseMatrix transpose_mul(const DenseMatrix& a, const DenseMatrix& b);

/// Frobenius inner product Σ a_ij b_ij.
double frobenius_dot(const DenseMatrix& a, const DenseMatrix& b);

/// (A + Aᵀ) / 2.
DenseMatrix symmetrized(const DenseMatrix& a);

/// Max |a_ij - a_ji| relative to max(1, max|a_ij|).
double asymmetry(const DenseMatrix& a);

/// Lower-triangular L with A = LLᵀ. Reads only the lower triangle of A.
DenseMatrix cholesky_factor(const DenseMatrix& a);

/// log det A = 2 Σ log L_ii, from the Cholesky factor.
double logdet_spd(const DenseMatrix& a);

struct SymEigen {
    std::vector<double> eigenvalues;  // ascending
    DenseMatrix eigenvectors;         // columns
};

/// Householder tridiagonalization followed by implicit QL with a cap of
/// 30·n sweeps per eigenvalue.
SymEigen sym_eigen(const DenseMatrix& a);

/// V diag(f(λ)) Vᵀ for symmetric A. No positivity requirement.
DenseMatrix sym_function(const DenseMatrix& a, const std::function<double(double)>& f);

/// V diag(f(λ)) Vᵀ for SPD A. Throws NotPositiveDefinite if some λ <= 0.
DenseMatrix spd_function(const DenseMatrix& a, const std::function<double(double)>& f);

/// Solves LX = B by forward substitution.
DenseMatrix tri_solve(const DenseMatrix& lower, const DenseMatrix& b);

/// Solves UX = B by back substitution.
DenseMatrix tri_solve_upper(const DenseMatrix& upper, const DenseMatrix& b);

/// Solves Lᵀ X = B with L lower triangular.
DenseMatrix tri_solve_transpose(const DenseMatrix& lower, const DenseMatrix& b);

/// A⁻¹ for SPD A via its Cholesky factor.
DenseMatrix spd_inverse(const DenseMatrix& a);

/// General square solve AX = B by LU with partial pivoting.
DenseMatrix lu_solve(const DenseMatrix& a, const DenseMatrix& b);

/// Determinant via LU with partial pivoting.
double determinant(const DenseMatrix& a);

/// Matrix exponential of a general square matrix: scaling and squaring with
/// the diagonal [6/6] Padé approximant, scaled until ‖A/2^s‖₁ <= 1/2.
DenseMatrix expm(const DenseMatrix& a);

/// exp(S) for skew-symmetric S; result lies in SO(n).
DenseMatrix skew_exp(const DenseMatrix& s);

/// Principal logarithm of Q in SO(n). Throws LogUndefined when Q has an
/// eigenvalue at -1.
DenseMatrix orth_log(const DenseMatrix& q);

}  // namespace spdsru
