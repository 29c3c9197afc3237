#include "spdsru/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "spdsru/frechet.hpp"

namespace spdsru::ad {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

DenseMatrix lower_part(const DenseMatrix& a) {
    DenseMatrix out = a;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j) out(i, j) = 0.0;
    return out;
}

// Divided differences of f over the spectrum, f' on (near) collisions.
DenseMatrix divided_differences(const std::vector<double>& lam, const SteinStepMap& map) {
    const std::size_t n = lam.size();
    DenseMatrix k(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        k(i, i) = map.d_lambda(lam[i]);
        for (std::size_t j = 0; j < i; ++j) {
            const double gap = lam[i] - lam[j];
            const double v = std::abs(gap) < kCollisionGap * std::max(1.0, std::abs(lam[i]))
                                 ? map.d_lambda(0.5 * (lam[i] + lam[j]))
                                 : (map.value(lam[i]) - map.value(lam[j])) / gap;
            k(i, j) = k(j, i) = v;
        }
    }
    return k;
}

DenseMatrix skew_from_vector(std::span<const double> v, std::size_t n) {
    DenseMatrix k(n, n);
    std::size_t idx = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) {
            k(i, j) = v[idx];
            k(j, i) = -v[idx];
            ++idx;
        }
    return k;
}

}  // namespace

Var Tape::push(Node n) {
    if (!n.value.all_finite()) throw NotPositiveDefinite("non-finite intermediate on tape");
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(DenseMatrix v) {
    Node n;
    n.value = std::move(v);
    return push(std::move(n));
}

Var Tape::variable(DenseMatrix v) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = true;
    return push(std::move(n));
}

Var Tape::unary(Op op, Var a, DenseMatrix value) {
    Node n;
    n.op = op;
    n.a = a.id;
    n.needs_grad = nodes_[a.id].needs_grad;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::binary(Op op, Var a, Var b, DenseMatrix value) {
    Node n;
    n.op = op;
    n.a = a.id;
    n.b = b.id;
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) { return binary(Op::MatMul, a, b, value(a) * value(b)); }

Var Tape::mul_transpose(Var a, Var b) {
    return binary(Op::MulTranspose, a, b, spdsru::mul_transpose(value(a), value(b)));
}

Var Tape::add(Var a, Var b) { return binary(Op::Add, a, b, value(a) + value(b)); }
Var Tape::sub(Var a, Var b) { return binary(Op::Sub, a, b, value(a) - value(b)); }

Var Tape::scale(Var a, double s) {
    Var v = unary(Op::Scale, a, value(a) * s);
    nodes_[v.id].p = s;
    return v;
}

Var Tape::transpose(Var a) { return unary(Op::Transpose, a, value(a).transposed()); }
Var Tape::symmetrize(Var a) { return unary(Op::Symmetrize, a, symmetrized(value(a))); }
Var Tape::cholesky(Var a) { return unary(Op::Cholesky, a, cholesky_factor(symmetrized(value(a)))); }
Var Tape::tri_solve(Var l, Var b) { return binary(Op::TriSolve, l, b, spdsru::tri_solve(value(l), value(b))); }
Var Tape::logdet(Var a) { return unary(Op::LogDet, a, DenseMatrix{{logdet_spd(symmetrized(value(a)))}}); }

Var Tape::stein_map(Var s, Var c) {
    require(value(c).rows() == 1 && value(c).cols() == 1, "stein_map: c must be 1x1");
    const SymEigen e = sym_eigen(value(s));
    const SteinStepMap map{scalar(c)};
    const std::size_t n = e.eigenvalues.size();
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(e.eigenvalues[i] > 0.0)) throw NotPositiveDefinite("stein_map: argument not positive definite");
        f[i] = map.value(e.eigenvalues[i]);
        for (std::size_t j = 0; j < i; ++j)
            if (std::abs(e.eigenvalues[i] - e.eigenvalues[j]) <
                kCollisionGap * std::max(1.0, std::abs(e.eigenvalues[i])))
                ++stats_.eigen_collisions;
    }
    DenseMatrix vf = e.eigenvectors;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) vf(i, j) *= f[j];
    Var out = binary(Op::SteinMap, s, c, spdsru::mul_transpose(vf, e.eigenvectors));
    Node& node = nodes_[out.id];
    node.aux = e.eigenvectors;
    node.auxv = e.eigenvalues;
    node.p = map.c;
    return out;
}

Var Tape::skew_exp(Var v, std::size_t n) {
    require(value(v).size() == n * (n == 0 ? 0 : n - 1) / 2, "skew_exp: generator length does not match n");
    Var out = unary(Op::SkewExp, v, spdsru::skew_exp(skew_from_vector(value(v).values(), n)));
    nodes_[out.id].p = static_cast<double>(n);
    return out;
}

Var Tape::relu_factor(Var l, double eps) {
    const DenseMatrix& in = value(l);
    DenseMatrix out = in;
    DenseMatrix mask(in.rows(), in.cols());
    for (std::size_t i = 0; i < in.rows(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (in(i, j) > 0.0) {
                mask(i, j) = 1.0;
            } else {
                if (in(i, j) == 0.0) ++stats_.relu_kinks;
                out(i, j) = 0.0;
            }
        }
        if (in(i, i) > eps) {
            mask(i, i) = 1.0;
        } else {
            if (in(i, i) == eps) ++stats_.relu_kinks;
            out(i, i) = eps;
        }
        for (std::size_t j = i + 1; j < in.cols(); ++j) out(i, j) = 0.0;
    }
    Var o = unary(Op::ReluFactor, l, std::move(out));
    nodes_[o.id].aux = std::move(mask);
    return o;
}

Var Tape::normalize_squares(Var s, double delta) {
    const DenseMatrix& in = value(s);
    require(in.size() > 0, "normalize_squares: empty");
    const double share = delta / static_cast<double>(in.size());
    DenseMatrix w(in.rows(), in.cols());
    double sum = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) {
        w.values()[i] = in.values()[i] * in.values()[i] + share;
        sum += w.values()[i];
    }
    for (double& x : w.values()) x /= sum;
    Var o = unary(Op::NormalizeSquares, s, std::move(w));
    nodes_[o.id].p = sum;
    return o;
}

Var Tape::running_weights(Var w) {
    const auto rw = spdsru::running_weights(value(w).values());
    DenseMatrix out(value(w).rows(), value(w).cols());
    std::copy(rw.begin(), rw.end(), out.values().begin());
    return unary(Op::RunningWeights, w, std::move(out));
}

Var Tape::element(Var v, std::size_t i) {
    require(i < value(v).size(), "element: index out of range");
    Var o = unary(Op::Element, v, DenseMatrix{{value(v).values()[i]}});
    nodes_[o.id].p = static_cast<double>(i);
    return o;
}

Var Tape::affine(Var x, double a, double b) {
    DenseMatrix out = value(x) * a;
    for (double& d : out.values()) d += b;
    Var o = unary(Op::Affine, x, std::move(out));
    nodes_[o.id].p = a;
    return o;
}

Var Tape::chol_vec(Var l) {
    const DenseMatrix& in = value(l);
    const std::size_t n = in.rows();
    DenseMatrix out(n * (n + 1) / 2, 1);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) out(k++, 0) = in(i, i);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) out(k++, 0) = in(i, j);
    return unary(Op::CholVec, l, std::move(out));
}

Var Tape::softmax_xent(Var logits, std::size_t label) {
    const DenseMatrix& z = value(logits);
    require(label < z.size(), "softmax_xent: label out of range");
    double mx = z.values()[0];
    for (double v : z.values()) mx = std::max(mx, v);
    DenseMatrix p(z.rows(), z.cols());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        p.values()[i] = std::exp(z.values()[i] - mx);
        sum += p.values()[i];
    }
    for (double& v : p.values()) v /= sum;
    const double loss = std::log(sum) + mx - z.values()[label];
    Var o = unary(Op::SoftmaxXent, logits, DenseMatrix{{loss}});
    nodes_[o.id].aux = std::move(p);
    nodes_[o.id].p = static_cast<double>(label);
    return o;
}

void Tape::accumulate(std::uint32_t id, const DenseMatrix& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.empty() && !n.value.empty()) {
        n.grad = g;
    } else {
        n.grad += g;
    }
}

void Tape::backward(Var out) {
    require(value(out).rows() == 1 && value(out).cols() == 1, "backward: output must be 1x1");
    for (Node& n : nodes_) n.grad = DenseMatrix();
    nodes_[out.id].grad = DenseMatrix{{1.0}};
    for (std::size_t i = out.id + 1; i-- > 0;) {
        const Node& n = nodes_[i];
        if (n.op == Op::Leaf || !n.needs_grad || n.grad.empty()) continue;
        backprop(n);
    }
    for (Node& n : nodes_)
        if (n.grad.empty()) n.grad = DenseMatrix(n.value.rows(), n.value.cols());
}

void Tape::backprop(const Node& n) {
    const DenseMatrix& g = n.grad;
    const auto val = [&](std::uint32_t id) -> const DenseMatrix& { return nodes_[id].value; };
    const auto wants = [&](std::uint32_t id) { return nodes_[id].needs_grad; };

    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::MatMul:
            if (wants(n.a)) accumulate(n.a, spdsru::mul_transpose(g, val(n.b)));
            if (wants(n.b)) accumulate(n.b, transpose_mul(val(n.a), g));
            break;
        case Op::MulTranspose:
            if (wants(n.a)) accumulate(n.a, g * val(n.b));
            if (wants(n.b)) accumulate(n.b, transpose_mul(g, val(n.a)));
            break;
        case Op::Add:
            accumulate(n.a, g);
            accumulate(n.b, g);
            break;
        case Op::Sub:
            accumulate(n.a, g);
            if (wants(n.b)) accumulate(n.b, g * -1.0);
            break;
        case Op::Scale:
            accumulate(n.a, g * n.p);
            break;
        case Op::Transpose:
            accumulate(n.a, g.transposed());
            break;
        case Op::Symmetrize:
            accumulate(n.a, symmetrized(g));
            break;
        case Op::Cholesky: {
            // Ā = sym(L⁻ᵀ Φ(LᵀL̄) L⁻¹), Φ = lower triangle with halved diagonal.
            const DenseMatrix& l = n.value;
            DenseMatrix phi = lower_part(transpose_mul(l, g));
            for (std::size_t i = 0; i < phi.rows(); ++i) phi(i, i) *= 0.5;
            const DenseMatrix left = tri_solve_transpose(l, phi);
            const DenseMatrix full = tri_solve_transpose(l, left.transposed()).transposed();
            accumulate(n.a, symmetrized(full));
            break;
        }
        case Op::TriSolve: {
            const DenseMatrix bbar = tri_solve_transpose(val(n.a), g);
            if (wants(n.a)) accumulate(n.a, lower_part(spdsru::mul_transpose(bbar, n.value)) * -1.0);
            if (wants(n.b)) accumulate(n.b, bbar);
            break;
        }
        case Op::LogDet:
            accumulate(n.a, spd_inverse(symmetrized(val(n.a))) * g(0, 0));
            break;
        case Op::SteinMap: {
            const DenseMatrix& v = n.aux;
            const SteinStepMap map{n.p};
            const DenseMatrix inner = transpose_mul(v, symmetrized(g) * v);
            if (wants(n.a)) {
                const DenseMatrix k = divided_differences(n.auxv, map);
                DenseMatrix h = inner;
                for (std::size_t i = 0; i < h.size(); ++i) h.values()[i] *= k.values()[i];
                accumulate(n.a, symmetrized(spdsru::mul_transpose(v * h, v)));
            }
            if (wants(n.b)) {
                double cbar = 0.0;
                for (std::size_t i = 0; i < n.auxv.size(); ++i) cbar += map.d_c(n.auxv[i]) * inner(i, i);
                accumulate(n.b, DenseMatrix{{cbar}});
            }
            break;
        }
        case Op::SkewExp: {
            const std::size_t dim = static_cast<std::size_t>(n.p);
            if (dim < 2) break;
            const DenseMatrix kt = skew_from_vector(val(n.a).values(), dim).transposed();
            DenseMatrix block(2 * dim, 2 * dim);
            for (std::size_t i = 0; i < dim; ++i)
                for (std::size_t j = 0; j < dim; ++j) {
                    block(i, j) = kt(i, j);
                    block(dim + i, dim + j) = kt(i, j);
                    block(i, dim + j) = g(i, j);
                }
            const DenseMatrix e = expm(block);
            DenseMatrix vbar(val(n.a).rows(), val(n.a).cols());
            std::size_t idx = 0;
            for (std::size_t i = 0; i < dim; ++i)
                for (std::size_t j = 0; j < i; ++j) vbar.values()[idx++] = e(i, dim + j) - e(j, dim + i);
            accumulate(n.a, vbar);
            break;
        }
        case Op::ReluFactor: {
            DenseMatrix out = g;
            for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] *= n.aux.values()[i];
            accumulate(n.a, out);
            break;
        }
        case Op::NormalizeSquares: {
            const DenseMatrix& s = val(n.a);
            const DenseMatrix& w = n.value;
            const double d = n.p;
            double dot = 0.0;
            for (std::size_t i = 0; i < w.size(); ++i) dot += g.values()[i] * w.values()[i];
            DenseMatrix sbar(s.rows(), s.cols());
            for (std::size_t j = 0; j < s.size(); ++j)
                sbar.values()[j] = 2.0 * s.values()[j] / d * (g.values()[j] - dot);
            accumulate(n.a, sbar);
            break;
        }
        case Op::RunningWeights: {
            const auto w = val(n.a).values();
            DenseMatrix wbar(val(n.a).rows(), val(n.a).cols());
            double prefix = w[0];
            for (std::size_t k = 1; k < w.size(); ++k) {
                prefix += w[k];
                if (!(prefix > 0.0)) continue;
                const double gk = g.values()[k];
                wbar.values()[k] += gk / prefix;
                const double common = gk * w[k] / (prefix * prefix);
                for (std::size_t i = 0; i <= k; ++i) wbar.values()[i] -= common;
            }
            accumulate(n.a, wbar);
            break;
        }
        case Op::Element: {
            DenseMatrix out(val(n.a).rows(), val(n.a).cols());
            out.values()[static_cast<std::size_t>(n.p)] = g(0, 0);
            accumulate(n.a, out);
            break;
        }
        case Op::Affine:
            accumulate(n.a, g * n.p);
            break;
        case Op::CholVec: {
            const std::size_t dim = val(n.a).rows();
            DenseMatrix out(dim, dim);
            std::size_t k = 0;
            for (std::size_t i = 0; i < dim; ++i) out(i, i) = g.values()[k++];
            for (std::size_t i = 0; i < dim; ++i)
                for (std::size_t j = 0; j < i; ++j) out(i, j) = g.values()[k++];
            accumulate(n.a, out);
            break;
        }
        case Op::SoftmaxXent: {
            DenseMatrix out = n.aux * g(0, 0);
            out.values()[static_cast<std::size_t>(n.p)] -= g(0, 0);
            accumulate(n.a, out);
            break;
        }
    }
}

void Tape::clear() {
    nodes_.clear();
    stats_ = TapeStats{};
}

Var stein_step(Tape& t, Var m, Var x, Var w) {
    const Var l = t.cholesky(m);
    const Var half = t.tri_solve(l, x);
    const Var s = t.symmetrize(t.tri_solve(l, t.transpose(half)));
    const Var f = t.stein_map(s, t.affine(w, 1.0, -0.5));
    return t.symmetrize(t.mul_transpose(t.matmul(l, f), l));
}

Var congruence(Tape& t, Var a, Var q) { return t.symmetrize(t.mul_transpose(t.matmul(q, a), q)); }

Var stein_distance_sq(Tape& t, Var a, Var b) {
    const Var mid = t.logdet(t.scale(t.add(a, b), 0.5));
    return t.sub(mid, t.scale(t.add(t.logdet(a), t.logdet(b)), 0.5));
}

Var recursive_wfm(Tape& t, std::span<const Var> xs, Var w) {
    require(!xs.empty() && t.value(w).size() == xs.size(), "recursive_wfm: weight count mismatch");
    const Var rw = t.running_weights(w);
    Var m = xs[0];
    for (std::size_t k = 1; k < xs.size(); ++k) m = stein_step(t, m, xs[k], t.element(rw, k));
    return m;
}

DenseMatrix sym_eigen_backward(const SymEigen& e, std::span<const double> lambda_bar, const DenseMatrix& v_bar) {
    const std::size_t n = e.eigenvalues.size();
    const DenseMatrix& v = e.eigenvectors;
    DenseMatrix inner = transpose_mul(v, v_bar);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) {
                inner(i, i) = lambda_bar[i];
            } else {
                inner(i, j) /= e.eigenvalues[j] - e.eigenvalues[i];
            }
        }
    }
    return symmetrized(spdsru::mul_transpose(v * inner, v));
}

}  // namespace spdsru::ad
