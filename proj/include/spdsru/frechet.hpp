#pragma once

// Weighted Fréchet means under the Stein metric: the batch minimizer used as
// an oracle, the O(N) recursive estimator, and the isometric embedding into
// the positive orthant of the unit Hilbert sphere together with its
// closed-form two-point mean.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "spdsru/geometry.hpp"

namespace spdsru {

/// Nonnegative weights summing to one (within 1e-12).
class WeightVector {
public:
    WeightVector() = default;
    explicit WeightVector(std::vector<double> w);

    static WeightVector uniform(std::size_t n);
    /// Scales nonnegative raw weights to unit sum.
    static WeightVector normalized(std::vector<double> raw);

    std::size_t size() const noexcept { return w_.size(); }
    double operator[](std::size_t i) const noexcept { return w_[i]; }
    std::span<const double> values() const noexcept { return w_; }

private:
    std::vector<double> w_;
};

/// Per-step convex weights w'_k = w_k / Σ_{i<=k} w_i. The first entry is 1;
/// a zero prefix sum yields 0 (the point cannot move the estimate yet).
std::vector<double> running_weights(std::span<const double> w);

struct BatchWfmResult {
    SymPosDef mean;
    int iterations = 0;
    bool converged = false;
    std::vector<double> objective;  // objective after each accepted iterate, starting with the initial point
};

/// Σ w_i d²(X_i, M).
double wfm_objective(std::span<const SymPosDef> xs, const WeightVector& w, const SymPosDef& m);

/// Minimizes the weighted Stein objective over the Cholesky chart. Each
/// iteration moves the factor toward the factor of the majorize-minimize
/// update [Σ w_i ((X_i + M)/2)⁻¹]⁻¹ with a backtracking line search, so the
/// objective never increases. Stops when the decrease drops below `tol`.
/// Non-convergence is reported through the result flag, never thrown.
BatchWfmResult batch_wfm(std::span<const SymPosDef> xs, const WeightVector& w, double tol = 1e-10,
                         int max_iter = 500);

/// Scalar map λ ↦ sqrt(λ + c²(1-λ)²) - c(1-λ) applied to the eigenvalues of
/// the congruence-normalized sample, c = (2w-1)/2. Evaluated without
/// cancellation.
struct SteinStepMap {
    double c;
    double value(double lambda) const;
    double d_lambda(double lambda) const;
    double d_c(double lambda) const;
};

/// One step of the recursive Stein mean: weight w on X, 1-w on M_prev.
/// With M_prev = LLᵀ and S = L⁻¹XL⁻ᵀ the result is L f(S) Lᵀ.
SymPosDef recursive_stein_step(const SymPosDef& m_prev, const SymPosDef& x, double w);

/// Folds recursive_stein_step over xs with running renormalized weights.
SymPosDef recursive_stein_wfm(std::span<const SymPosDef> xs, const WeightVector& w);

/// Every intermediate estimate M_1 … M_N of recursive_stein_wfm.
std::vector<SymPosDef> recursive_stein_path(std::span<const SymPosDef> xs, const WeightVector& w);

/// ⟨Φ(A), Φ(B)⟩ for the normalized zero-mean Gaussian densities:
/// (det 2A · det 2B)^{1/4} / det(A+B)^{1/2}, evaluated in the log domain.
double gaussian_inner_product(const SymPosDef& a, const SymPosDef& b);

inline constexpr std::size_t kSphereBasisCap = 512;

/// A point of the unit Hilbert sphere represented as a finite combination of
/// embedded Gaussians, with the Gram matrix of the basis cached.
class SpherePoint {
public:
    SpherePoint() = default;
    /// Validates sizes, Gram entries in (0, 1] and unit norm (1e-10).
    SpherePoint(std::vector<SymPosDef> basis, std::vector<double> coeffs, DenseMatrix gram);

    const std::vector<SymPosDef>& basis() const noexcept { return basis_; }
    const std::vector<double>& coeffs() const noexcept { return coeffs_; }
    const DenseMatrix& gram() const noexcept { return gram_; }
    std::size_t size() const noexcept { return basis_.size(); }

    /// coeffsᵀ · gram · coeffs.
    double norm_sq() const;

private:
    friend SpherePoint sphere_wfm_step(const SpherePoint&, const SpherePoint&, double);
    std::vector<SymPosDef> basis_;
    std::vector<double> coeffs_;
    DenseMatrix gram_;
};

SpherePoint sphere_embed(const SymPosDef& a);

double sphere_inner(const SpherePoint& p, const SpherePoint& q);

/// sqrt(-log⟨p, q⟩²). Throws DomainError when the inner product is <= 0.
double sphere_distance(const SpherePoint& p, const SpherePoint& q);

/// Exact minimizer of w d²(x, ·) + (1-w) d²(m_prev, ·): the point at angle
/// α = arctan(2wc / (1 + sqrt(1 + 4w(1-w)c²))), c = tan θ, along the great
/// circle from m_prev toward x. Returns m_prev when θ < 1e-12.
SpherePoint sphere_wfm_step(const SpherePoint& m_prev, const SpherePoint& x, double w);

/// Recursive sphere mean of embedded samples with running weights.
SpherePoint sphere_recursive_wfm(std::span<const SymPosDef> xs, const WeightVector& w);

struct FmDiagnostics {
    std::vector<std::size_t> step;          // k = 1 … N
    std::vector<double> variance;           // Fréchet variance of M_k across shuffles
    std::vector<double> oracle_distance;    // mean Stein distance of M_k to the batch mean of all samples
    std::vector<double> oracle_distance_max;
    std::size_t shuffles = 0;
};

/// Runs recursive_stein_wfm (equal weights) over `shuffles` random orderings
/// of xs and tracks the spread and the oracle gap of every prefix estimate.
FmDiagnostics consistency_report(std::span<const SymPosDef> xs, std::size_t shuffles, std::uint64_t seed);

/// CSV with columns k,variance,oracle_distance,oracle_distance_max.
void write_csv(std::ostream& os, const FmDiagnostics& diag);

}  // namespace spdsru
