#pragma once

// Reverse-mode differentiation over small dense matrices. A Tape records
// every primitive with the intermediates its adjoint needs; backward() then
// sweeps the records once, newest first. Scalars are 1×1 matrices.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "spdsru/matkit.hpp"

namespace spdsru::ad {

struct Var {
    std::uint32_t id = 0;
};

/// Points where the adjoint used a convention instead of a true derivative.
struct TapeStats {
    std::size_t eigen_collisions = 0;  // eigenvalue gaps below 1e-8: divided difference replaced by f'
    std::size_t relu_kinks = 0;        // factor entries exactly at the clamp threshold
};

inline constexpr double kCollisionGap = 1e-8;

class Tape {
public:
    Var constant(DenseMatrix v);
    Var constant(double s) { return constant(DenseMatrix{{s}}); }
    /// A leaf whose gradient is wanted.
    Var variable(DenseMatrix v);

    const DenseMatrix& value(Var v) const { return nodes_[v.id].value; }
    double scalar(Var v) const { return nodes_[v.id].value(0, 0); }
    /// Adjoint after backward(); an all-zero matrix when nothing flowed in.
    const DenseMatrix& grad(Var v) const { return nodes_[v.id].grad; }

    Var matmul(Var a, Var b);
    Var mul_transpose(Var a, Var b);  // a bᵀ
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var scale(Var a, double s);
    Var transpose(Var a);
    Var symmetrize(Var a);  // (a + aᵀ)/2

    /// Lower factor of sym(a).
    Var cholesky(Var a);
    /// l⁻¹ b for lower-triangular l.
    Var tri_solve(Var l, Var b);
    /// log det of an SPD matrix, 1×1.
    Var logdet(Var a);
    /// V diag(f(λ)) Vᵀ for f(λ) = sqrt(λ + c²(1-λ)²) - c(1-λ); c is 1×1.
    Var stein_map(Var s, Var c);
    /// exp of the skew matrix whose strict lower triangle (row-major) is the column v.
    Var skew_exp(Var v, std::size_t n);
    /// max(·, eps) on the diagonal, max(·, 0) below it; zero subgradient where clamped.
    Var relu_factor(Var l, double eps);
    /// Column s ↦ (s² + δ/k) / (Σ s² + δ).
    Var normalize_squares(Var s, double delta);
    /// Column w ↦ w_k / Σ_{i≤k} w_i with the first entry fixed at 1.
    Var running_weights(Var w);
    Var element(Var v, std::size_t i);  // 1×1 view of v[i] in row-major order
    Var affine(Var x, double a, double b);  // a·x + b
    /// Column of a lower factor: diagonal, then strict lower triangle row-major.
    Var chol_vec(Var l);
    /// -log softmax(logits)[label] for a column of logits.
    Var softmax_xent(Var logits, std::size_t label);

    /// Seeds d out = 1 (out must be 1×1) and propagates to every recorded node.
    void backward(Var out);
    void clear();

    std::size_t size() const noexcept { return nodes_.size(); }
    const TapeStats& stats() const noexcept { return stats_; }

private:
    enum class Op : std::uint8_t {
        Leaf, MatMul, MulTranspose, Add, Sub, Scale, Transpose, Symmetrize, Cholesky, TriSolve, LogDet,
        SteinMap, SkewExp, ReluFactor, NormalizeSquares, RunningWeights, Element, Affine, CholVec, SoftmaxXent
    };
    struct Node {
        Op op = Op::Leaf;
        bool needs_grad = false;
        std::uint32_t a = 0, b = 0;
        double p = 0.0;        // op parameter (scale, eps, index, ...)
        DenseMatrix value;
        DenseMatrix grad;
        DenseMatrix aux;       // saved matrix (eigenvectors, inverse, mask, softmax)
        std::vector<double> auxv;
    };

    Var push(Node n);
    Var unary(Op op, Var a, DenseMatrix value);
    Var binary(Op op, Var a, Var b, DenseMatrix value);
    void accumulate(std::uint32_t id, const DenseMatrix& g);
    void backprop(const Node& n);

    std::vector<Node> nodes_;
    TapeStats stats_;
};

/// One recursive Stein step: weight w (1×1) on x, 1-w on m.
Var stein_step(Tape& t, Var m, Var x, Var w);
/// q a qᵀ, symmetrized.
Var congruence(Tape& t, Var a, Var q);
/// log det((a+b)/2) - ½ log det a - ½ log det b.
Var stein_distance_sq(Tape& t, Var a, Var b);
/// Fold of stein_step over xs with running weights of the convex column w.
Var recursive_wfm(Tape& t, std::span<const Var> xs, Var w);

/// Adjoint of A ↦ (λ, V) for symmetric A with distinct eigenvalues.
DenseMatrix sym_eigen_backward(const SymEigen& e, std::span<const double> lambda_bar, const DenseMatrix& v_bar);

}  // namespace spdsru::ad
