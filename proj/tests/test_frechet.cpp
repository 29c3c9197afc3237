#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <sstream>

#include "spdsru/frechet.hpp"
#include "test_support.hpp"

using namespace spdsru;
using spdsru::testing::Rng;
using spdsru::testing::max_abs_diff;
using spdsru::testing::random_spd;

namespace {

// Scalar Stein divergence, written out independently of the library.
double scalar_d2(double a, double b) { return std::log((a + b) / 2.0) - 0.5 * std::log(a * b); }

// Golden-section minimization on log scale over [lo, hi].
template <class F>
double golden_min(F f, double lo, double hi) {
    double a = std::log(lo), b = std::log(hi);
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - r * (b - a), d = a + r * (b - a);
    for (int i = 0; i < 200; ++i) {
        if (f(std::exp(c)) < f(std::exp(d))) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    return std::exp(0.5 * (a + b));
}

SymPosDef scalar(double v) { return SymPosDef(DenseMatrix{{v}}); }

}  // namespace

TEST_CASE("WeightVector and running weights") {
    CHECK_THROWS_AS(WeightVector({0.5, 0.6}), std::invalid_argument);
    CHECK_THROWS_AS(WeightVector({1.5, -0.5}), std::invalid_argument);
    CHECK(WeightVector::uniform(4)[2] == 0.25);

    const std::vector<double> eq{0.25, 0.25, 0.25, 0.25};
    const auto rw = running_weights(eq);
    CHECK(rw[0] == 1.0);
    CHECK(rw[1] == doctest::Approx(0.5));
    CHECK(rw[2] == doctest::Approx(1.0 / 3.0));
    CHECK(rw[3] == doctest::Approx(0.25));

    const std::vector<double> lead_zero{0.0, 0.0, 1.0};
    const auto rz = running_weights(lead_zero);
    CHECK(rz[1] == 0.0);
    CHECK(rz[2] == 1.0);
}

TEST_CASE("batch_wfm") {
    Rng rng(31);
    const auto a = random_spd(3, rng);
    std::vector<SymPosDef> one{a};
    CHECK(max_abs_diff(batch_wfm(one, WeightVector::uniform(1)).mean.matrix(), a.matrix()) < 1e-12);

    std::vector<SymPosDef> two{a, a};
    CHECK(max_abs_diff(batch_wfm(two, WeightVector::uniform(2)).mean.matrix(), a.matrix()) < 1e-12);

    SUBCASE("scalar mean equals brute-force minimizer (geometric mean)") {
        const double oracle = golden_min(
            [](double m) { return 0.5 * scalar_d2(1.0, m) + 0.5 * scalar_d2(4.0, m); }, 0.5, 8.0);
        CHECK(oracle == doctest::Approx(2.0).epsilon(1e-7));
        std::vector<SymPosDef> xs{scalar(1.0), scalar(4.0)};
        const auto res = batch_wfm(xs, WeightVector::uniform(2), 1e-15);
        CHECK(res.converged);
        CHECK(res.mean(0, 0) == doctest::Approx(oracle).epsilon(1e-7));
    }

    SUBCASE("objective never increases and the gradient vanishes") {
        std::vector<SymPosDef> xs;
        for (int i = 0; i < 30; ++i) xs.push_back(random_spd(4, rng));
        const auto w = WeightVector::normalized(std::vector<double>(30, 1.0));
        const auto res = batch_wfm(xs, w, 1e-14);
        CHECK(res.converged);
        for (std::size_t i = 1; i < res.objective.size(); ++i) CHECK(res.objective[i] <= res.objective[i - 1]);
        // Stationarity: Σ w_i (X_i + M)⁻¹ = ½ M⁻¹.
        DenseMatrix g = spd_inverse(res.mean.matrix()) * -0.5;
        for (std::size_t i = 0; i < xs.size(); ++i) g += spd_inverse(xs[i].matrix() + res.mean.matrix()) * w[i];
        CHECK(g.max_abs() < 1e-6);
    }

    SUBCASE("non-convergence is flagged, not thrown") {
        std::vector<SymPosDef> xs;
        for (int i = 0; i < 10; ++i) xs.push_back(random_spd(3, rng));
        const auto res = batch_wfm(xs, WeightVector::uniform(10), 0.0, 1);
        CHECK_FALSE(res.converged);
        CHECK(res.iterations == 1);
    }
}

TEST_CASE("recursive_stein_step endpoints and midpoint") {
    Rng rng(32);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + trial % 5;
        const auto m = random_spd(n, rng);
        const auto x = random_spd(n, rng);
        CHECK(max_abs_diff(recursive_stein_step(m, x, 0.0).matrix(), m.matrix()) < 1e-9);
        CHECK(max_abs_diff(recursive_stein_step(m, x, 1.0).matrix(), x.matrix()) < 1e-9);
        CHECK(max_abs_diff(recursive_stein_step(m, x, 0.5).matrix(), recursive_stein_step(x, m, 0.5).matrix()) <
              1e-9);
    }
    CHECK(recursive_stein_step(scalar(1.0), scalar(4.0), 0.5)(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK_THROWS_AS(recursive_stein_step(scalar(1.0), scalar(4.0), 1.5), std::invalid_argument);
}

TEST_CASE("recursive step is the exact scalar two-point Stein mean") {
    Rng rng(33);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const double m = std::exp(2.0 * u(rng) - 1.0);
        const double x = std::exp(2.0 * u(rng) - 1.0);
        const double w = u(rng);
        const double brute = golden_min([&](double t) { return w * scalar_d2(x, t) + (1 - w) * scalar_d2(m, t); },
                                        std::min(m, x) * 0.5, std::max(m, x) * 2.0);
        CHECK(recursive_stein_step(scalar(m), scalar(x), w)(0, 0) == doctest::Approx(brute).epsilon(1e-7));
    }
}

TEST_CASE("commuting inputs reduce to per-eigenvalue scalar recursion") {
    Rng rng(34);
    std::uniform_real_distribution<double> u(0.2, 3.0);
    std::vector<SymPosDef> xs;
    std::vector<std::vector<double>> diag;
    for (int i = 0; i < 12; ++i) {
        std::vector<double> d{u(rng), u(rng), u(rng)};
        diag.push_back(d);
        xs.push_back(SymPosDef(DenseMatrix::diagonal(d)));
    }
    const auto w = WeightVector::uniform(xs.size());
    const auto m = recursive_stein_wfm(xs, w);
    for (std::size_t c = 0; c < 3; ++c) {
        double est = diag[0][c];
        for (std::size_t k = 1; k < xs.size(); ++k) {
            const double wk = 1.0 / static_cast<double>(k + 1);
            const double xk = diag[k][c];
            est = golden_min([&](double t) { return wk * scalar_d2(xk, t) + (1 - wk) * scalar_d2(est, t); },
                             std::min(est, xk) * 0.5, std::max(est, xk) * 2.0);
        }
        CHECK(m(c, c) == doctest::Approx(est).epsilon(1e-7));
        for (std::size_t r = 0; r < 3; ++r)
            if (r != c) CHECK(std::abs(m(r, c)) < 1e-14);
    }
}

TEST_CASE("recursive_stein_wfm") {
    Rng rng(35);
    const auto a = random_spd(3, rng);
    std::vector<SymPosDef> one{a};
    CHECK(recursive_stein_wfm(one, WeightVector::uniform(1)) == a);
    std::vector<SymPosDef> same(7, a);
    CHECK(max_abs_diff(recursive_stein_wfm(same, WeightVector::uniform(7)).matrix(), a.matrix()) < 1e-10);

    const auto center = random_spd(3, rng);
    std::vector<SymPosDef> xs;
    for (int i = 0; i < 100; ++i) xs.push_back(spdsru::testing::random_spd_near(center, 0.4, rng));
    const auto w = WeightVector::uniform(xs.size());
    const double gap = stein_distance(recursive_stein_wfm(xs, w), batch_wfm(xs, w, 1e-14).mean);
    CHECK(gap < 5e-2);
}

TEST_CASE("Gaussian inner product against quadrature for n = 1") {
    for (auto [a, b] : {std::pair{1.0, 4.0}, std::pair{0.3, 2.2}, std::pair{5.0, 5.0}}) {
        auto density = [](double x, double var) { return std::exp(-x * x / (2 * var)) / std::sqrt(2 * M_PI * var); };
        double fg = 0.0, ff = 0.0, gg = 0.0;
        const double h = 1e-3;
        for (double x = -60.0; x <= 60.0; x += h) {
            const double f = density(x, a), g = density(x, b);
            fg += f * g * h;
            ff += f * f * h;
            gg += g * g * h;
        }
        const double quad = fg / std::sqrt(ff * gg);
        CHECK(gaussian_inner_product(scalar(a), scalar(b)) == doctest::Approx(quad).epsilon(1e-9));
    }
}

TEST_CASE("sphere embedding and distance") {
    Rng rng(36);
    const auto a = random_spd(3, rng);
    const auto pa = sphere_embed(a);
    CHECK(pa.norm_sq() == doctest::Approx(1.0));
    CHECK(sphere_inner(pa, pa) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(sphere_distance(pa, pa) < 1e-7);

    const double d14 = sphere_distance(sphere_embed(scalar(1.0)), sphere_embed(scalar(4.0)));
    CHECK(d14 == doctest::Approx(std::sqrt(std::log(1.25))).epsilon(1e-12));
    CHECK(d14 == doctest::Approx(stein_distance(scalar(2.0), scalar(8.0))).epsilon(1e-12));

    double worst = 0.0;
    for (int trial = 0; trial < 2000; ++trial) {
        const auto x = random_spd(3, rng);
        const auto y = random_spd(3, rng);
        const double ds = sphere_distance(sphere_embed(x), sphere_embed(y));
        const double ref = stein_distance(SymPosDef::from_computed(x.matrix() * 2.0),
                                          SymPosDef::from_computed(y.matrix() * 2.0));
        worst = std::max(worst, std::abs(ds - ref));
        CHECK(gaussian_inner_product(x, y) ==
              doctest::Approx(std::exp(-0.5 * ref * ref)).epsilon(1e-12));
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("sphere_wfm_step") {
    Rng rng(37);
    const auto m = sphere_embed(random_spd(3, rng));
    const auto x = sphere_embed(random_spd(3, rng));

    const auto at0 = sphere_wfm_step(m, x, 0.0);
    CHECK(sphere_distance(at0, m) < 1e-7);
    const auto at1 = sphere_wfm_step(m, x, 1.0);
    CHECK(sphere_distance(at1, x) < 1e-7);
    CHECK(sphere_wfm_step(m, m, 0.4).size() == 1);

    SUBCASE("closed form beats a great-circle grid") {
        for (int trial = 0; trial < 50; ++trial) {
            const auto p = sphere_embed(random_spd(3, rng));
            const auto q = sphere_embed(random_spd(3, rng));
            const double w = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
            const auto r = sphere_wfm_step(p, q, w);
            CHECK(r.norm_sq() == doctest::Approx(1.0).epsilon(1e-10));
            const double dq = sphere_distance(q, r), dp = sphere_distance(p, r);
            const double closed = w * dq * dq + (1 - w) * dp * dp;

            const double ip = sphere_inner(p, q);
            const double theta = std::acos(ip);
            double best = 1e300;
            for (int i = 1; i < 10000; ++i) {
                const double phi = (theta - M_PI / 2) + (M_PI - theta) * i / 10000.0;
                const double a = std::sin(theta - phi) / std::sin(theta);
                const double b = std::sin(phi) / std::sin(theta);
                const double to_p = a + b * ip, to_q = a * ip + b;
                if (to_p <= 0 || to_q <= 0) continue;
                best = std::min(best, -w * std::log(to_q * to_q) - (1 - w) * std::log(to_p * to_p));
            }
            CHECK(closed <= best + 1e-8);
        }
    }

    SUBCASE("basis grows by one per step and merges duplicates") {
        std::vector<SymPosDef> xs;
        for (int i = 0; i < 6; ++i) xs.push_back(random_spd(2, rng));
        const auto s = sphere_recursive_wfm(xs, WeightVector::uniform(xs.size()));
        CHECK(s.size() == 6);
        CHECK(s.norm_sq() == doctest::Approx(1.0).epsilon(1e-10));
        std::vector<SymPosDef> dup{xs[0], xs[1], xs[0]};
        CHECK(sphere_recursive_wfm(dup, WeightVector::uniform(3)).size() == 2);
    }
}

TEST_CASE("consistency_report") {
    Rng rng(38);
    SUBCASE("constant stream") {
        const auto a = random_spd(3, rng);
        std::vector<SymPosDef> xs(20, a);
        const auto diag = consistency_report(xs, 5, 1);
        for (double v : diag.variance) CHECK(v < 1e-14);
    }
    SUBCASE("variance and oracle gap shrink") {
        const auto center = random_spd(3, rng);
        std::vector<SymPosDef> xs;
        for (int i = 0; i < 200; ++i) xs.push_back(spdsru::testing::random_spd_near(center, 0.3, rng));
        const auto diag = consistency_report(xs, 50, 7);
        REQUIRE(diag.variance.size() == 200);
        CHECK(diag.variance[199] < diag.variance[19]);
        CHECK(diag.oracle_distance[199] < diag.oracle_distance[19]);
        std::ostringstream os;
        write_csv(os, diag);
        CHECK(os.str().rfind("k,variance,oracle_distance,oracle_distance_max\n1,", 0) == 0);
    }
    CHECK_THROWS_AS(consistency_report(std::vector<SymPosDef>{SymPosDef::identity(2)}, 3, 1), std::invalid_argument);
}
