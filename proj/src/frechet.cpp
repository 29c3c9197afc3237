#include "spdsru/frechet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

namespace spdsru {

WeightVector::WeightVector(std::vector<double> w) : w_(std::move(w)) {
    if (w_.empty()) throw std::invalid_argument("WeightVector: empty");
    double s = 0.0;
    for (double v : w_) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("WeightVector: negative or non-finite weight");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("WeightVector: weights must sum to 1");
}

WeightVector WeightVector::uniform(std::size_t n) {
    if (n == 0) throw std::invalid_argument("WeightVector: empty");
    WeightVector w;
    w.w_.assign(n, 1.0 / static_cast<double>(n));
    return w;
}

WeightVector WeightVector::normalized(std::vector<double> raw) {
    const double s = std::accumulate(raw.begin(), raw.end(), 0.0);
    if (!(s > 0.0)) throw std::invalid_argument("WeightVector: raw weights must have positive sum");
    for (double& v : raw) v /= s;
    WeightVector w;
    w.w_ = std::move(raw);
    for (double v : w.w_) {
        if (!(v >= 0.0)) throw std::invalid_argument("WeightVector: negative weight");
    }
    return w;
}

std::vector<double> running_weights(std::span<const double> w) {
    std::vector<double> out(w.size());
    double prefix = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        prefix += w[k];
        if (k == 0) {
            out[k] = 1.0;
        } else {
            out[k] = prefix > 0.0 ? w[k] / prefix : 0.0;
        }
    }
    return out;
}

double wfm_objective(std::span<const SymPosDef> xs, const WeightVector& w, const SymPosDef& m) {
    double f = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (w[i] != 0.0) f += w[i] * stein_distance_sq(xs[i], m);
    }
    return f;
}

namespace {

void require_nonempty_matching(std::span<const SymPosDef> xs, const WeightVector& w) {
    if (xs.empty()) throw std::invalid_argument("Fréchet mean of an empty list");
    if (xs.size() != w.size()) throw std::invalid_argument("weights and points differ in length");
    for (const auto& x : xs) {
        if (x.dim() != xs.front().dim()) throw std::invalid_argument("points differ in dimension");
    }
}

// Objective evaluated from a candidate factor; +inf when it leaves the chart.
double objective_at(std::span<const SymPosDef> xs, const WeightVector& w, const DenseMatrix& l) {
    for (std::size_t i = 0; i < l.rows(); ++i) {
        if (!(l(i, i) > 0.0)) return std::numeric_limits<double>::infinity();
    }
    try {
        return wfm_objective(xs, w, SymPosDef::from_computed(mul_transpose(l, l)));
    } catch (const NotPositiveDefinite&) {
        return std::numeric_limits<double>::infinity();
    }
}

}  // namespace

BatchWfmResult batch_wfm(std::span<const SymPosDef> xs, const WeightVector& w, double tol, int max_iter) {
    require_nonempty_matching(xs, w);
    const std::size_t n = xs.front().dim();

    DenseMatrix start(n, n);
    for (std::size_t i = 0; i < xs.size(); ++i) start += xs[i].matrix() * w[i];

    BatchWfmResult res;
    res.mean = SymPosDef::from_computed(start);
    DenseMatrix l = cholesky_factor(res.mean.matrix());
    double f = wfm_objective(xs, w, res.mean);
    res.objective.push_back(f);

    for (int it = 1; it <= max_iter; ++it) {
        res.iterations = it;
        DenseMatrix acc(n, n);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (w[i] == 0.0) continue;
            acc += spd_inverse((xs[i].matrix() + res.mean.matrix()) * 0.5) * w[i];
        }
        const DenseMatrix target = cholesky_factor(spd_inverse(acc));
        const DenseMatrix dir = target - l;

        double step = 1.0;
        double f_new = std::numeric_limits<double>::infinity();
        DenseMatrix l_new;
        for (int halving = 0; halving < 40; ++halving, step *= 0.5) {
            l_new = l + dir * step;
            f_new = objective_at(xs, w, l_new);
            if (f_new <= f) break;
        }
        if (!(f_new <= f)) {
            // No decrease along the direction: stationary to working precision.
            res.converged = true;
            return res;
        }
        const double decrease = f - f_new;
        l = std::move(l_new);
        res.mean = SymPosDef::from_computed(mul_transpose(l, l));
        f = f_new;
        res.objective.push_back(f);
        if (decrease < tol) {
            res.converged = true;
            return res;
        }
    }
    return res;
}

double SteinStepMap::value(double lambda) const {
    const double b = c * (1.0 - lambda);
    const double root = std::sqrt(lambda + b * b);
    // (root - b)(root + b) = λ; pick the form without cancellation.
    return b > 0.0 ? lambda / (root + b) : root - b;
}

double SteinStepMap::d_lambda(double lambda) const {
    const double one_minus = 1.0 - lambda;
    const double root = std::sqrt(lambda + c * c * one_minus * one_minus);
    return (1.0 - 2.0 * c * c * one_minus) / (2.0 * root) + c;
}

double SteinStepMap::d_c(double lambda) const {
    const double one_minus = 1.0 - lambda;
    const double root = std::sqrt(lambda + c * c * one_minus * one_minus);
    return c * one_minus * one_minus / root - one_minus;
}

SymPosDef recursive_stein_step(const SymPosDef& m_prev, const SymPosDef& x, double w) {
    if (m_prev.dim() != x.dim()) throw std::invalid_argument("recursive_stein_step: dimension mismatch");
    if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("recursive_stein_step: weight outside [0, 1]");
    const DenseMatrix l = cholesky_factor(m_prev.matrix());
    const DenseMatrix half = tri_solve(l, x.matrix());
    const DenseMatrix s = symmetrized(tri_solve(l, half.transposed()));
    const SteinStepMap map{w - 0.5};
    const DenseMatrix fs = spd_function(s, [&](double lam) { return map.value(lam); });
    return SymPosDef::from_computed(mul_transpose(l * fs, l));
}

std::vector<SymPosDef> recursive_stein_path(std::span<const SymPosDef> xs, const WeightVector& w) {
    require_nonempty_matching(xs, w);
    const std::vector<double> step_w = running_weights(w.values());
    std::vector<SymPosDef> path;
    path.reserve(xs.size());
    path.push_back(xs.front());
    for (std::size_t k = 1; k < xs.size(); ++k) {
        path.push_back(recursive_stein_step(path.back(), xs[k], step_w[k]));
    }
    return path;
}

SymPosDef recursive_stein_wfm(std::span<const SymPosDef> xs, const WeightVector& w) {
    require_nonempty_matching(xs, w);
    const std::vector<double> step_w = running_weights(w.values());
    SymPosDef m = xs.front();
    for (std::size_t k = 1; k < xs.size(); ++k) m = recursive_stein_step(m, xs[k], step_w[k]);
    return m;
}

double gaussian_inner_product(const SymPosDef& a, const SymPosDef& b) {
    if (a.dim() != b.dim()) throw std::invalid_argument("gaussian_inner_product: dimension mismatch");
    const double log_ip = 0.25 * (logdet_spd(a.matrix() * 2.0) + logdet_spd(b.matrix() * 2.0)) -
                          0.5 * logdet_spd(a.matrix() + b.matrix());
    return std::min(1.0, std::exp(log_ip));
}

SpherePoint::SpherePoint(std::vector<SymPosDef> basis, std::vector<double> coeffs, DenseMatrix gram)
    : basis_(std::move(basis)), coeffs_(std::move(coeffs)), gram_(std::move(gram)) {
    const std::size_t k = basis_.size();
    if (k == 0 || coeffs_.size() != k || gram_.rows() != k || gram_.cols() != k) {
        throw std::invalid_argument("SpherePoint: inconsistent sizes");
    }
    for (double g : gram_.values()) {
        if (!(g > 0.0 && g <= 1.0)) throw DomainError("SpherePoint: Gram entry outside (0, 1]");
    }
    if (std::abs(norm_sq() - 1.0) > 1e-10) throw DomainError("SpherePoint: not unit norm");
}

double SpherePoint::norm_sq() const {
    double s = 0.0;
    for (std::size_t i = 0; i < coeffs_.size(); ++i)
        for (std::size_t j = 0; j < coeffs_.size(); ++j) s += coeffs_[i] * gram_(i, j) * coeffs_[j];
    return s;
}

SpherePoint sphere_embed(const SymPosDef& a) {
    (void)cholesky_factor(a.matrix());
    return SpherePoint({a}, {1.0}, DenseMatrix{{1.0}});
}

namespace {

DenseMatrix cross_kernel(const SpherePoint& p, const SpherePoint& q) {
    DenseMatrix k(p.size(), q.size());
    for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t j = 0; j < q.size(); ++j) k(i, j) = gaussian_inner_product(p.basis()[i], q.basis()[j]);
    return k;
}

double bilinear(const std::vector<double>& a, const DenseMatrix& k, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) s += a[i] * k(i, j) * b[j];
    return s;
}

}  // namespace

double sphere_inner(const SpherePoint& p, const SpherePoint& q) {
    return bilinear(p.coeffs(), cross_kernel(p, q), q.coeffs());
}

double sphere_distance(const SpherePoint& p, const SpherePoint& q) {
    const double ip = sphere_inner(p, q);
    if (!(ip > 0.0)) throw DomainError("sphere_distance: inner product outside (0, 1]");
    return std::sqrt(std::max(0.0, -2.0 * std::log(std::min(ip, 1.0))));
}

SpherePoint sphere_wfm_step(const SpherePoint& m_prev, const SpherePoint& x, double w) {
    if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("sphere_wfm_step: weight outside [0, 1]");
    const DenseMatrix k = cross_kernel(m_prev, x);
    const double ip = std::clamp(bilinear(m_prev.coeffs(), k, x.coeffs()), 1e-15, 1.0);
    const double theta = std::acos(ip);
    if (theta < 1e-12 || w == 0.0) return m_prev;
    if (w == 1.0) return x;

    // α = arctan((-1 + sqrt(1 + 4w(1-w)c²)) / (2c(1-w))), rationalized.
    const double c = std::tan(theta);
    const double alpha = std::atan(2.0 * w * c / (1.0 + std::sqrt(1.0 + 4.0 * w * (1.0 - w) * c * c)));
    const double a = std::sin(theta - alpha) / std::sin(theta);
    const double b = std::sin(alpha) / std::sin(theta);

    // Concatenate bases, then fold exact duplicates and drop exact zeros.
    std::vector<SymPosDef> basis;
    std::vector<double> coeffs;
    std::vector<std::size_t> origin;  // index into the concatenated list
    const std::size_t km = m_prev.size();
    auto push = [&](const SymPosDef& mat, double coef, std::size_t idx) {
        for (std::size_t i = 0; i < basis.size(); ++i) {
            if (basis[i] == mat) {
                coeffs[i] += coef;
                return;
            }
        }
        basis.push_back(mat);
        coeffs.push_back(coef);
        origin.push_back(idx);
    };
    for (std::size_t i = 0; i < km; ++i) push(m_prev.basis()[i], a * m_prev.coeffs()[i], i);
    for (std::size_t j = 0; j < x.size(); ++j) push(x.basis()[j], b * x.coeffs()[j], km + j);

    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < basis.size(); ++i)
        if (coeffs[i] != 0.0) keep.push_back(i);
    if (keep.size() > kSphereBasisCap) throw std::length_error("sphere_wfm_step: basis cap exceeded");

    auto gram_entry = [&](std::size_t u, std::size_t v) {
        if (u < km && v < km) return m_prev.gram()(u, v);
        if (u >= km && v >= km) return x.gram()(u - km, v - km);
        if (u < km) return k(u, v - km);
        return k(v, u - km);
    };

    SpherePoint out;
    out.gram_ = DenseMatrix(keep.size(), keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        out.basis_.push_back(basis[keep[i]]);
        out.coeffs_.push_back(coeffs[keep[i]]);
        for (std::size_t j = 0; j < keep.size(); ++j) out.gram_(i, j) = gram_entry(origin[keep[i]], origin[keep[j]]);
    }
    const double norm = std::sqrt(out.norm_sq());
    for (double& cf : out.coeffs_) cf /= norm;
    return out;
}

SpherePoint sphere_recursive_wfm(std::span<const SymPosDef> xs, const WeightVector& w) {
    require_nonempty_matching(xs, w);
    const std::vector<double> step_w = running_weights(w.values());
    SpherePoint m = sphere_embed(xs.front());
    for (std::size_t k = 1; k < xs.size(); ++k) m = sphere_wfm_step(m, sphere_embed(xs[k]), step_w[k]);
    return m;
}

FmDiagnostics consistency_report(std::span<const SymPosDef> xs, std::size_t shuffles, std::uint64_t seed) {
    if (xs.size() < 2) throw std::invalid_argument("consistency_report: need at least two samples");
    if (shuffles == 0) throw std::invalid_argument("consistency_report: need at least one shuffle");
    const std::size_t n = xs.size();
    const WeightVector equal = WeightVector::uniform(n);
    const SymPosDef oracle = batch_wfm(xs, equal, 1e-14).mean;

    // paths[s][k] = estimate after k+1 samples of ordering s.
    std::vector<std::vector<SymPosDef>> paths(shuffles);
    for (std::size_t s = 0; s < shuffles; ++s) {
        std::seed_seq seq{seed, static_cast<std::uint64_t>(s)};
        std::mt19937_64 rng(seq);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<SymPosDef> perm;
        perm.reserve(n);
        for (std::size_t i : order) perm.push_back(xs[i]);
        paths[s] = recursive_stein_path(perm, equal);
    }

    FmDiagnostics diag;
    diag.shuffles = shuffles;
    const WeightVector across = WeightVector::uniform(shuffles);
    std::vector<SymPosDef> at_k(shuffles);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t s = 0; s < shuffles; ++s) at_k[s] = paths[s][k];
        const SymPosDef center = batch_wfm(at_k, across, 1e-14).mean;
        double var = 0.0, dist = 0.0, dist_max = 0.0;
        for (const auto& m : at_k) {
            var += stein_distance_sq(m, center);
            const double d = stein_distance(m, oracle);
            dist += d;
            dist_max = std::max(dist_max, d);
        }
        diag.step.push_back(k + 1);
        diag.variance.push_back(var / static_cast<double>(shuffles));
        diag.oracle_distance.push_back(dist / static_cast<double>(shuffles));
        diag.oracle_distance_max.push_back(dist_max);
    }
    return diag;
}

void write_csv(std::ostream& os, const FmDiagnostics& diag) {
    os << "k,variance,oracle_distance,oracle_distance_max\n";
    for (std::size_t i = 0; i < diag.step.size(); ++i) {
        os << diag.step[i] << ',' << diag.variance[i] << ',' << diag.oracle_distance[i] << ','
           << diag.oracle_distance_max[i] << '\n';
    }
}

}  // namespace spdsru
