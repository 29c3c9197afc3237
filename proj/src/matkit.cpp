#include "spdsru/matkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace spdsru {

namespace {

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
    }
}

void require_square(const DenseMatrix& a, const char* op) {
    if (!a.square()) {
        throw std::invalid_argument(std::string(op) + ": matrix must be square");
    }
}

}  // namespace

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> init)
    : rows_(init.size()), cols_(init.size() == 0 ? 0 : init.begin()->size()) {
    data_.reserve(rows_ * cols_);
    for (const auto& row : init) {
        if (row.size() != cols_) {
            throw std::invalid_argument("DenseMatrix: ragged initializer");
        }
        data_.insert(data_.end(), row.begin(), row.end());
    }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

DenseMatrix DenseMatrix::diagonal(std::span<const double> d) {
    DenseMatrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
}

DenseMatrix DenseMatrix::column(std::span<const double> v) {
    DenseMatrix m(v.size(), 1);
    std::copy(v.begin(), v.end(), m.data_.begin());
    return m;
}

DenseMatrix DenseMatrix::transposed() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

double DenseMatrix::trace() const {
    double t = 0.0;
    for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) t += (*this)(i, i);
    return t;
}

double DenseMatrix::frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

double DenseMatrix::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

bool DenseMatrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

DenseMatrix& DenseMatrix::operator+=(const DenseMatrix& o) {
    require_same_shape(*this, o, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

DenseMatrix& DenseMatrix::operator-=(const DenseMatrix& o) {
    require_same_shape(*this, o, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

DenseMatrix& DenseMatrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
DenseMatrix operator*(DenseMatrix a, double s) { return a *= s; }
DenseMatrix operator*(double s, DenseMatrix a) { return a *= s; }

DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
    DenseMatrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    }
    return c;
}

DenseMatrix mul_transpose(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.cols()) throw std::invalid_argument("mul_transpose: dimension mismatch");
    DenseMatrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
            c(i, j) = s;
        }
    }
    return c;
}

DenseMatrix transpose_mul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("transpose_mul: dimension mismatch");
    DenseMatrix c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            if (aki == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aki * b(k, j);
        }
    }
    return c;
}

double frobenius_dot(const DenseMatrix& a, const DenseMatrix& b) {
    require_same_shape(a, b, "frobenius_dot");
    const auto av = a.values();
    const auto bv = b.values();
    return std::inner_product(av.begin(), av.end(), bv.begin(), 0.0);
}

DenseMatrix symmetrized(const DenseMatrix& a) {
    require_square(a, "symmetrized");
    DenseMatrix s(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        s(i, i) = a(i, i);
        for (std::size_t j = 0; j < i; ++j) {
            const double v = 0.5 * (a(i, j) + a(j, i));
            s(i, j) = v;
            s(j, i) = v;
        }
    }
    return s;
}

double asymmetry(const DenseMatrix& a) {
    require_square(a, "asymmetry");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < i; ++j) worst = std::max(worst, std::abs(a(i, j) - a(j, i)));
    return worst / std::max(1.0, a.max_abs());
}

DenseMatrix cholesky_factor(const DenseMatrix& a) {
    require_square(a, "cholesky_factor");
    const std::size_t n = a.rows();
    DenseMatrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double s = a(j, j);
        for (std::size_t k = 0; k < j; ++k) s -= l(j, k) * l(j, k);
        if (!(s > 0.0) || !std::isfinite(s)) {
            throw NotPositiveDefinite("cholesky_factor: non-positive pivot at index " + std::to_string(j));
        }
        const double d = std::sqrt(s);
        l(j, j) = d;
        for (std::size_t i = j + 1; i < n; ++i) {
            double t = a(i, j);
            for (std::size_t k = 0; k < j; ++k) t -= l(i, k) * l(j, k);
            l(i, j) = t / d;
        }
    }
    return l;
}

double logdet_spd(const DenseMatrix& a) {
    const DenseMatrix l = cholesky_factor(a);
    double s = 0.0;
    for (std::size_t i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
    return 2.0 * s;
}

namespace {

// Householder reduction to tridiagonal form (EISPACK tred2 lineage).
// On exit v holds the accumulated orthogonal transform, d the diagonal,
// e the sub-diagonal in e[1..n-1].
void tridiagonalize(int n, DenseMatrix& v, std::vector<double>& d, std::vector<double>& e) {
    for (int j = 0; j < n; ++j) d[j] = v(n - 1, j);

    for (int i = n - 1; i > 0; --i) {
        double scale = 0.0;
        double h = 0.0;
        for (int k = 0; k < i; ++k) scale += std::abs(d[k]);
        if (scale == 0.0) {
            e[i] = d[i - 1];
            for (int j = 0; j < i; ++j) {
                d[j] = v(i - 1, j);
                v(i, j) = 0.0;
                v(j, i) = 0.0;
            }
        } else {
            for (int k = 0; k < i; ++k) {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            double f = d[i - 1];
            double g = std::sqrt(h);
            if (f > 0) g = -g;
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for (int j = 0; j < i; ++j) e[j] = 0.0;

            for (int j = 0; j < i; ++j) {
                f = d[j];
                v(j, i) = f;
                g = e[j] + v(j, j) * f;
                for (int k = j + 1; k <= i - 1; ++k) {
                    g += v(k, j) * d[k];
                    e[k] += v(k, j) * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for (int j = 0; j < i; ++j) {
                e[j] /= h;
                f += e[j] * d[j];
            }
            const double hh = f / (h + h);
            for (int j = 0; j < i; ++j) e[j] -= hh * d[j];
            for (int j = 0; j < i; ++j) {
                f = d[j];
                g = e[j];
                for (int k = j; k <= i - 1; ++k) v(k, j) -= (f * e[k] + g * d[k]);
                d[j] = v(i - 1, j);
                v(i, j) = 0.0;
            }
        }
        d[i] = h;
    }

    for (int i = 0; i < n - 1; ++i) {
        v(n - 1, i) = v(i, i);
        v(i, i) = 1.0;
        const double h = d[i + 1];
        if (h != 0.0) {
            for (int k = 0; k <= i; ++k) d[k] = v(k, i + 1) / h;
            for (int j = 0; j <= i; ++j) {
                double g = 0.0;
                for (int k = 0; k <= i; ++k) g += v(k, i + 1) * v(k, j);
                for (int k = 0; k <= i; ++k) v(k, j) -= g * d[k];
            }
        }
        for (int k = 0; k <= i; ++k) v(k, i + 1) = 0.0;
    }
    for (int j = 0; j < n; ++j) {
        d[j] = v(n - 1, j);
        v(n - 1, j) = 0.0;
    }
    v(n - 1, n - 1) = 1.0;
    e[0] = 0.0;
}

// Implicit QL on the tridiagonal (EISPACK tql2 lineage).
void tridiagonal_ql(int n, DenseMatrix& v, std::vector<double>& d, std::vector<double>& e) {
    for (int i = 1; i < n; ++i) e[i - 1] = e[i];
    e[n - 1] = 0.0;

    const int max_sweeps = 30 * n;
    double f = 0.0;
    double tst1 = 0.0;
    const double eps = std::numeric_limits<double>::epsilon();
    for (int l = 0; l < n; ++l) {
        tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
        int m = l;
        while (m < n) {
            if (std::abs(e[m]) <= eps * tst1) break;
            ++m;
        }
        if (m > l) {
            int iter = 0;
            do {
                if (++iter > max_sweeps) throw NoConvergence("sym_eigen: QL iteration cap reached");
                double g = d[l];
                double p = (d[l + 1] - g) / (2.0 * e[l]);
                double r = std::hypot(p, 1.0);
                if (p < 0) r = -r;
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                const double dl1 = d[l + 1];
                double h = g - d[l];
                for (int i = l + 2; i < n; ++i) d[i] -= h;
                f += h;

                p = d[m];
                double c = 1.0, c2 = 1.0, c3 = 1.0;
                const double el1 = e[l + 1];
                double s = 0.0, s2 = 0.0;
                for (int i = m - 1; i >= l; --i) {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = std::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for (int k = 0; k < n; ++k) {
                        h = v(k, i + 1);
                        v(k, i + 1) = s * v(k, i) + c * h;
                        v(k, i) = c * v(k, i) - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
            } while (std::abs(e[l]) > eps * tst1);
        }
        d[l] += f;
        e[l] = 0.0;
    }
}

}  // namespace

SymEigen sym_eigen(const DenseMatrix& a) {
    require_square(a, "sym_eigen");
    if (!a.all_finite()) throw NoConvergence("sym_eigen: non-finite input");
    const int n = static_cast<int>(a.rows());
    SymEigen out;
    if (n == 0) return out;

    DenseMatrix v = symmetrized(a);
    std::vector<double> d(n), e(n);
    tridiagonalize(n, v, d, e);
    tridiagonal_ql(n, v, d, e);

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return d[x] < d[y]; });

    out.eigenvalues.resize(n);
    out.eigenvectors = DenseMatrix(n, n);
    for (int c = 0; c < n; ++c) {
        out.eigenvalues[c] = d[order[c]];
        for (int r = 0; r < n; ++r) out.eigenvectors(r, c) = v(r, order[c]);
    }
    return out;
}

namespace {

DenseMatrix reassemble(const SymEigen& eig, const std::vector<double>& fvals) {
    const std::size_t n = fvals.size();
    const DenseMatrix& v = eig.eigenvectors;
    DenseMatrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += v(i, k) * fvals[k] * v(j, k);
            out(i, j) = s;
            out(j, i) = s;
        }
    }
    return out;
}

}  // namespace

DenseMatrix sym_function(const DenseMatrix& a, const std::function<double(double)>& f) {
    const SymEigen eig = sym_eigen(a);
    std::vector<double> fv(eig.eigenvalues.size());
    std::transform(eig.eigenvalues.begin(), eig.eigenvalues.end(), fv.begin(), f);
    return reassemble(eig, fv);
}

DenseMatrix spd_function(const DenseMatrix& a, const std::function<double(double)>& f) {
    const SymEigen eig = sym_eigen(a);
    if (!eig.eigenvalues.empty() && !(eig.eigenvalues.front() > 0.0)) {
        throw NotPositiveDefinite("spd_function: non-positive eigenvalue");
    }
    std::vector<double> fv(eig.eigenvalues.size());
    std::transform(eig.eigenvalues.begin(), eig.eigenvalues.end(), fv.begin(), f);
    return reassemble(eig, fv);
}

DenseMatrix tri_solve(const DenseMatrix& lower, const DenseMatrix& b) {
    require_square(lower, "tri_solve");
    if (lower.rows() != b.rows()) throw std::invalid_argument("tri_solve: dimension mismatch");
    const std::size_t n = lower.rows();
    DenseMatrix x = b;
    for (std::size_t c = 0; c < b.cols(); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            if (lower(i, i) == 0.0) throw SingularTriangular();
            double s = x(i, c);
            for (std::size_t k = 0; k < i; ++k) s -= lower(i, k) * x(k, c);
            x(i, c) = s / lower(i, i);
        }
    }
    return x;
}

DenseMatrix tri_solve_upper(const DenseMatrix& upper, const DenseMatrix& b) {
    require_square(upper, "tri_solve_upper");
    if (upper.rows() != b.rows()) throw std::invalid_argument("tri_solve_upper: dimension mismatch");
    const std::size_t n = upper.rows();
    DenseMatrix x = b;
    for (std::size_t c = 0; c < b.cols(); ++c) {
        for (std::size_t ii = n; ii-- > 0;) {
            if (upper(ii, ii) == 0.0) throw SingularTriangular();
            double s = x(ii, c);
            for (std::size_t k = ii + 1; k < n; ++k) s -= upper(ii, k) * x(k, c);
            x(ii, c) = s / upper(ii, ii);
        }
    }
    return x;
}

DenseMatrix tri_solve_transpose(const DenseMatrix& lower, const DenseMatrix& b) {
    require_square(lower, "tri_solve_transpose");
    if (lower.rows() != b.rows()) throw std::invalid_argument("tri_solve_transpose: dimension mismatch");
    const std::size_t n = lower.rows();
    DenseMatrix x = b;
    for (std::size_t c = 0; c < b.cols(); ++c) {
        for (std::size_t ii = n; ii-- > 0;) {
            if (lower(ii, ii) == 0.0) throw SingularTriangular();
            double s = x(ii, c);
            for (std::size_t k = ii + 1; k < n; ++k) s -= lower(k, ii) * x(k, c);
            x(ii, c) = s / lower(ii, ii);
        }
    }
    return x;
}

DenseMatrix spd_inverse(const DenseMatrix& a) {
    const DenseMatrix l = cholesky_factor(a);
    const DenseMatrix linv = tri_solve(l, DenseMatrix::identity(a.rows()));
    return symmetrized(transpose_mul(linv, linv));
}

namespace {

struct LuFactors {
    DenseMatrix lu;
    std::vector<std::size_t> perm;
    int sign = 1;
};

LuFactors lu_factor(const DenseMatrix& a) {
    require_square(a, "lu_factor");
    const std::size_t n = a.rows();
    LuFactors f{a, std::vector<std::size_t>(n), 1};
    std::iota(f.perm.begin(), f.perm.end(), std::size_t{0});
    DenseMatrix& m = f.lu;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(m(i, k)) > std::abs(m(p, k))) p = i;
        if (m(p, k) == 0.0) throw Error("lu_factor: singular matrix");
        if (p != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(m(k, j), m(p, j));
            std::swap(f.perm[k], f.perm[p]);
            f.sign = -f.sign;
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            m(i, k) /= m(k, k);
            const double lik = m(i, k);
            if (lik == 0.0) continue;
            for (std::size_t j = k + 1; j < n; ++j) m(i, j) -= lik * m(k, j);
        }
    }
    return f;
}

}  // namespace

DenseMatrix lu_solve(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("lu_solve: dimension mismatch");
    const LuFactors f = lu_factor(a);
    const std::size_t n = a.rows();
    DenseMatrix x(n, b.cols());
    for (std::size_t c = 0; c < b.cols(); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = b(f.perm[i], c);
            for (std::size_t k = 0; k < i; ++k) s -= f.lu(i, k) * x(k, c);
            x(i, c) = s;
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double s = x(ii, c);
            for (std::size_t k = ii + 1; k < n; ++k) s -= f.lu(ii, k) * x(k, c);
            x(ii, c) = s / f.lu(ii, ii);
        }
    }
    return x;
}

double determinant(const DenseMatrix& a) {
    require_square(a, "determinant");
    if (a.rows() == 0) return 1.0;
    LuFactors f;
    try {
        f = lu_factor(a);
    } catch (const Error&) {
        return 0.0;
    }
    double d = f.sign;
    for (std::size_t i = 0; i < a.rows(); ++i) d *= f.lu(i, i);
    return d;
}

namespace {

double norm_one(const DenseMatrix& a) {
    double best = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
        double s = 0.0;
        for (std::size_t r = 0; r < a.rows(); ++r) s += std::abs(a(r, c));
        best = std::max(best, s);
    }
    return best;
}

}  // namespace

DenseMatrix expm(const DenseMatrix& a) {
    require_square(a, "expm");
    const std::size_t n = a.rows();
    if (n == 0) return a;
    if (!a.all_finite()) throw std::invalid_argument("expm: non-finite input");

    // [6/6] Padé coefficients c_k = (12-k)! 6! / (12! k! (6-k)!).
    constexpr double c[7] = {1.0,        1.0 / 2.0,     5.0 / 44.0,     1.0 / 66.0,
                             1.0 / 792.0, 1.0 / 15840.0, 1.0 / 665280.0};

    const double norm = norm_one(a);
    int squarings = 0;
    if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
    const DenseMatrix x = a * std::ldexp(1.0, -squarings);

    const DenseMatrix id = DenseMatrix::identity(n);
    const DenseMatrix x2 = x * x;
    const DenseMatrix x4 = x2 * x2;
    const DenseMatrix x6 = x4 * x2;
    const DenseMatrix u = x * (c[1] * id + c[3] * x2 + c[5] * x4);
    const DenseMatrix v = c[0] * id + c[2] * x2 + c[4] * x4 + c[6] * x6;

    DenseMatrix r = lu_solve(v - u, v + u);
    for (int s = 0; s < squarings; ++s) r = r * r;
    return r;
}

DenseMatrix skew_exp(const DenseMatrix& s) {
    require_square(s, "skew_exp");
    DenseMatrix q = expm(s);
    return q;
}

DenseMatrix orth_log(const DenseMatrix& q) {
    require_square(q, "orth_log");
    const std::size_t n = q.rows();
    if (n <= 1) {
        if (n == 1 && q(0, 0) < 0.0) throw LogUndefined();
        return DenseMatrix(n, n);
    }

    // Q = exp(K) with K skew: cos(K) = (Q+Qᵀ)/2 and sin(K) = (Q-Qᵀ)/2 commute,
    // so K = h(cos K) sin K with h(cos θ) = θ / sin θ on each rotation block.
    const DenseMatrix qt = q.transposed();
    const DenseMatrix cos_part = (q + qt) * 0.5;
    const DenseMatrix sin_part = (q - qt) * 0.5;
    const SymEigen eig = sym_eigen(cos_part);

    std::vector<double> h(n);
    for (std::size_t i = 0; i < n; ++i) {
        double sv = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            double t = 0.0;
            for (std::size_t k = 0; k < n; ++k) t += sin_part(r, k) * eig.eigenvectors(k, i);
            sv += t * t;
        }
        const double sin_theta = std::sqrt(sv);
        const double theta = std::atan2(sin_theta, eig.eigenvalues[i]);
        // |e^{iθ} + 1| = 2 sin((π - θ)/2)
        if (2.0 * std::sin(0.5 * (M_PI - theta)) < 1e-8) throw LogUndefined();
        h[i] = theta < 1e-6 ? 1.0 + theta * theta / 6.0 : theta / std::sin(theta);
    }
    const DenseMatrix k = reassemble(eig, h) * sin_part;
    return (k - k.transposed()) * 0.5;
}

}  // namespace spdsru
