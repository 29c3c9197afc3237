#include "spdsru/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spdsru {

SymPosDef::SymPosDef(const DenseMatrix& m) {
    if (!m.square() || m.rows() == 0) throw std::invalid_argument("SymPosDef: need a non-empty square matrix");
    if (!m.all_finite()) throw std::invalid_argument("SymPosDef: non-finite entry");
    if (asymmetry(m) > 1e-12) throw std::invalid_argument("SymPosDef: matrix is not symmetric");
    m_ = symmetrized(m);
}

SymPosDef SymPosDef::from_computed(const DenseMatrix& m) {
    SymPosDef s;
    s.m_ = symmetrized(m);
    return s;
}

SymPosDef SymPosDef::identity(std::size_t n, double scale) {
    SymPosDef s;
    s.m_ = DenseMatrix::identity(n) * scale;
    return s;
}

bool SymPosDef::is_positive_definite() const {
    try {
        (void)cholesky_factor(m_);
        return true;
    } catch (const NotPositiveDefinite&) {
        return false;
    }
}

SkewParam::SkewParam(std::size_t n, std::vector<double> v) : n_(n), v_(std::move(v)) {
    if (v_.size() != size_for(n)) throw std::invalid_argument("SkewParam: expected n(n-1)/2 values");
}

SkewParam SkewParam::from_matrix(const DenseMatrix& skew) {
    if (!skew.square()) throw std::invalid_argument("SkewParam: need a square matrix");
    const std::size_t n = skew.rows();
    SkewParam p(n);
    std::size_t k = 0;
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) p.v_[k++] = 0.5 * (skew(i, j) - skew(j, i));
    return p;
}

SkewParam SkewParam::from_rotation(const DenseMatrix& q) { return from_matrix(orth_log(q)); }

DenseMatrix SkewParam::matrix() const {
    DenseMatrix m(n_, n_);
    std::size_t k = 0;
    for (std::size_t i = 1; i < n_; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            m(i, j) = v_[k];
            m(j, i) = -v_[k];
            ++k;
        }
    }
    return m;
}

CholParam::CholParam(std::size_t n, std::vector<double> l) : n_(n), l_(std::move(l)) {
    if (l_.size() != size_for(n)) throw std::invalid_argument("CholParam: expected n(n+1)/2 values");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(l_[i] > 0.0)) throw std::invalid_argument("CholParam: diagonal entries must be positive");
    }
}

DenseMatrix CholParam::factor() const {
    DenseMatrix l(n_, n_);
    for (std::size_t i = 0; i < n_; ++i) l(i, i) = l_[i];
    std::size_t k = n_;
    for (std::size_t i = 1; i < n_; ++i)
        for (std::size_t j = 0; j < i; ++j) l(i, j) = l_[k++];
    return l;
}

CholParam CholParam::from_factor(const DenseMatrix& l) {
    const std::size_t n = l.rows();
    std::vector<double> v(size_for(n));
    for (std::size_t i = 0; i < n; ++i) v[i] = l(i, i);
    std::size_t k = n;
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) v[k++] = l(i, j);
    return CholParam(n, std::move(v));
}

namespace {

void require_same_dim(const SymPosDef& a, const SymPosDef& b) {
    if (a.dim() != b.dim()) throw std::invalid_argument("dimension mismatch between SPD arguments");
}

}  // namespace

double stein_distance_sq(const SymPosDef& a, const SymPosDef& b) {
    require_same_dim(a, b);
    const DenseMatrix mid = (a.matrix() + b.matrix()) * 0.5;
    const double d2 = logdet_spd(mid) - 0.5 * (logdet_spd(a.matrix()) + logdet_spd(b.matrix()));
    return std::max(d2, 0.0);
}

double stein_distance(const SymPosDef& a, const SymPosDef& b) { return std::sqrt(stein_distance_sq(a, b)); }

double gl_distance(const SymPosDef& a, const SymPosDef& b) {
    require_same_dim(a, b);
    const DenseMatrix l = cholesky_factor(a.matrix());
    const DenseMatrix half = tri_solve(l, b.matrix());
    const DenseMatrix congruence = tri_solve(l, half.transposed());
    const SymEigen eig = sym_eigen(congruence);
    double s = 0.0;
    for (double lam : eig.eigenvalues) {
        if (!(lam > 0.0)) throw NotPositiveDefinite("gl_distance: second argument not SPD");
        const double lg = std::log(lam);
        s += lg * lg;
    }
    return std::sqrt(s);
}

SymPosDef translate(const SymPosDef& a, const DenseMatrix& q) {
    if (q.rows() != a.dim() || !q.square()) throw std::invalid_argument("translate: dimension mismatch");
    return SymPosDef::from_computed(mul_transpose(q * a.matrix(), q));
}

SymPosDef translate(const SymPosDef& a, const SkewParam& g) {
    if (g.dim() != a.dim()) throw std::invalid_argument("translate: dimension mismatch");
    return translate(a, g.rotation());
}

CholParam to_chol_param(const SymPosDef& a) { return CholParam::from_factor(cholesky_factor(a.matrix())); }

SymPosDef from_chol_param(const CholParam& p) {
    const DenseMatrix l = p.factor();
    return SymPosDef::from_computed(mul_transpose(l, l));
}

DenseMatrix relu_factor(const DenseMatrix& lower, double eps) {
    DenseMatrix out = lower;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        out(i, i) = std::max(out(i, i), eps);
        for (std::size_t j = 0; j < i; ++j) out(i, j) = std::max(out(i, j), 0.0);
    }
    return out;
}

SymPosDef spd_relu(const SymPosDef& a, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("spd_relu: eps must be positive");
    const DenseMatrix l = relu_factor(cholesky_factor(a.matrix()), eps);
    return SymPosDef::from_computed(mul_transpose(l, l));
}

}  // namespace spdsru
