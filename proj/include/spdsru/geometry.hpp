#pragma once

// Stein-metric geometry of SPD(n): the distance, the O(n) translation action,
// and the two charts (Cholesky for SPD(n), Lie algebra for SO(n)).

#include <cstddef>
#include <span>
#include <vector>

#include "spdsru/matkit.hpp"

namespace spdsru {

/// A symmetric matrix assumed to be positive definite. Symmetry is enforced
/// on construction; positivity is checked lazily by whichever kernel first
/// needs a Cholesky factor.
class SymPosDef {
public:
    SymPosDef() = default;

    /// Validates shape, finiteness and symmetry (1e-12 relative), then stores
    /// the exactly symmetrized matrix.
    explicit SymPosDef(const DenseMatrix& m);

    /// Wraps a matrix that is symmetric in exact arithmetic (e.g. L S Lᵀ),
    /// discarding rounding asymmetry. No validation.
    static SymPosDef from_computed(const DenseMatrix& m);

    static SymPosDef identity(std::size_t n, double scale = 1.0);

    std::size_t dim() const noexcept { return m_.rows(); }
    const DenseMatrix& matrix() const noexcept { return m_; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return m_(r, c); }

    /// True when the Cholesky factorization succeeds.
    bool is_positive_definite() const;

    friend bool operator==(const SymPosDef&, const SymPosDef&) = default;

private:
    DenseMatrix m_;
};

/// Coordinates of a skew-symmetric generator: the strict lower triangle,
/// row-major; the upper triangle is the negation.
class SkewParam {
public:
    SkewParam() = default;
    explicit SkewParam(std::size_t n) : n_(n), v_(size_for(n), 0.0) {}
    SkewParam(std::size_t n, std::vector<double> v);

    static std::size_t size_for(std::size_t n) { return n * (n == 0 ? 0 : n - 1) / 2; }
    static SkewParam from_matrix(const DenseMatrix& skew);
    static SkewParam from_rotation(const DenseMatrix& q);

    std::size_t dim() const noexcept { return n_; }
    std::span<const double> values() const noexcept { return v_; }
    std::span<double> values() noexcept { return v_; }

    DenseMatrix matrix() const;
    DenseMatrix rotation() const { return skew_exp(matrix()); }

    friend bool operator==(const SkewParam&, const SkewParam&) = default;

private:
    std::size_t n_ = 0;
    std::vector<double> v_;
};

/// Cholesky-chart coordinates: diagonal of L first (positive), then the
/// strict lower triangle row-major.
class CholParam {
public:
    CholParam() = default;
    CholParam(std::size_t n, std::vector<double> l);

    static std::size_t size_for(std::size_t n) { return n * (n + 1) / 2; }

    std::size_t dim() const noexcept { return n_; }
    std::span<const double> values() const noexcept { return l_; }

    /// Lower-triangular factor L.
    DenseMatrix factor() const;
    /// Packs a lower-triangular factor; the diagonal must be positive.
    static CholParam from_factor(const DenseMatrix& l);

private:
    std::size_t n_ = 0;
    std::vector<double> l_;
};

/// Squared Stein distance log det((A+B)/2) - ½(log det A + log det B),
/// clamped at zero.
double stein_distance_sq(const SymPosDef& a, const SymPosDef& b);

double stein_distance(const SymPosDef& a, const SymPosDef& b);

/// Affine-invariant distance sqrt(Σ log² λ(A⁻¹B)). Used only as a reference.
double gl_distance(const SymPosDef& a, const SymPosDef& b);

/// g A gᵀ with g = exp(skew(param)).
SymPosDef translate(const SymPosDef& a, const SkewParam& g);

/// Q A Qᵀ for an explicit orthogonal Q.
SymPosDef translate(const SymPosDef& a, const DenseMatrix& q);

CholParam to_chol_param(const SymPosDef& a);
SymPosDef from_chol_param(const CholParam& p);

inline constexpr double kDefaultReluEps = 1e-4;

/// Clamps a Cholesky factor: max(·, 0) off the diagonal, max(·, eps) on it.
DenseMatrix relu_factor(const DenseMatrix& lower, double eps = kDefaultReluEps);

/// ReLU on the Cholesky chart: LLᵀ of the clamped factor of A.
SymPosDef spd_relu(const SymPosDef& a, double eps = kDefaultReluEps);

}  // namespace spdsru
