#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "spdsru/geometry.hpp"
#include "test_support.hpp"

using namespace spdsru;
using spdsru::testing::Rng;
using spdsru::testing::max_abs_diff;
using spdsru::testing::random_spd;

TEST_CASE("stein_distance examples") {
    const auto id = SymPosDef::identity(3);
    CHECK(stein_distance(id, id) == 0.0);

    const SymPosDef one(DenseMatrix{{1.0}});
    const SymPosDef four(DenseMatrix{{4.0}});
    // sqrt(log 2.5 - ½ log 4) = sqrt(log 1.25)
    CHECK(stein_distance(one, four) == doctest::Approx(std::sqrt(std::log(1.25))).epsilon(1e-14));
    CHECK(stein_distance(one, four) == doctest::Approx(0.472381).epsilon(1e-6));
    CHECK_THROWS_AS(stein_distance(id, SymPosDef(DenseMatrix{{1, 2, 0}, {2, 1, 0}, {0, 0, 1}})),
                    NotPositiveDefinite);
}

TEST_CASE("stein metric axioms on random triples") {
    Rng rng(21);
    int triangle_violations = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const auto a = random_spd(3, rng);
        const auto b = random_spd(3, rng);
        const auto c = random_spd(3, rng);
        const double ab = stein_distance(a, b);
        CHECK(ab == stein_distance(b, a));
        CHECK(ab >= 0.0);
        CHECK(stein_distance(a, a) < 1e-12);
        if (ab > stein_distance(a, c) + stein_distance(c, b) + 1e-12) ++triangle_violations;
    }
    CHECK(triangle_violations == 0);
}

TEST_CASE("stein distance invariances") {
    Rng rng(22);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + trial % 5;
        const auto a = random_spd(n, rng);
        const auto b = random_spd(n, rng);
        const double d = stein_distance(a, b);

        const DenseMatrix g = spdsru::testing::random_gl(n, rng);
        const auto ga = SymPosDef::from_computed(mul_transpose(g * a.matrix(), g));
        const auto gb = SymPosDef::from_computed(mul_transpose(g * b.matrix(), g));
        CHECK(std::abs(stein_distance(ga, gb) - d) < 1e-9);

        const double c = std::exp(std::normal_distribution<double>(0.0, 1.0)(rng));
        CHECK(std::abs(stein_distance(SymPosDef::from_computed(a.matrix() * c),
                                      SymPosDef::from_computed(b.matrix() * c)) -
                       d) < 1e-10);
    }
}

TEST_CASE("gl_distance") {
    const auto id = SymPosDef::identity(2);
    CHECK(gl_distance(id, id) == 0.0);
    CHECK(gl_distance(SymPosDef(DenseMatrix{{1.0}}), SymPosDef(DenseMatrix{{std::exp(2.0)}})) ==
          doctest::Approx(2.0).epsilon(1e-14));
    const double e = std::exp(1.0);
    CHECK(gl_distance(id, SymPosDef(DenseMatrix{{e, 0}, {0, e}})) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("translate") {
    Rng rng(23);
    const auto a = random_spd(3, rng);
    CHECK(max_abs_diff(translate(a, SkewParam(3)).matrix(), a.matrix()) < 1e-15);

    const double h = std::numbers::pi / 2;
    const SymPosDef d(DenseMatrix{{1, 0}, {0, 4}});
    const auto rotated = translate(d, SkewParam(2, {h}));
    CHECK(max_abs_diff(rotated.matrix(), DenseMatrix{{4, 0}, {0, 1}}) < 1e-14);

    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 2 + trial % 4;
        const auto x = random_spd(n, rng);
        const auto y = random_spd(n, rng);
        const auto g = spdsru::testing::random_skew_param(n, rng);
        const auto tx = translate(x, g);
        const auto ty = translate(y, g);
        CHECK(std::abs(stein_distance(tx, ty) - stein_distance(x, y)) < 1e-10);
        CHECK(std::abs(gl_distance(tx, ty) - gl_distance(x, y)) < 1e-9);
        const auto ex = sym_eigen(x.matrix()).eigenvalues;
        const auto et = sym_eigen(tx.matrix()).eigenvalues;
        for (std::size_t i = 0; i < n; ++i) CHECK(et[i] == doctest::Approx(ex[i]).epsilon(1e-12));
    }
}

TEST_CASE("Cholesky chart") {
    const auto p = to_chol_param(SymPosDef::identity(3));
    const std::vector<double> expect{1, 1, 1, 0, 0, 0};
    CHECK(std::vector<double>(p.values().begin(), p.values().end()) == expect);

    const auto q = to_chol_param(SymPosDef(DenseMatrix{{4, 2}, {2, 5}}));
    CHECK(q.values()[0] == doctest::Approx(2.0));
    CHECK(q.values()[1] == doctest::Approx(2.0));
    CHECK(q.values()[2] == doctest::Approx(1.0));
    CHECK(max_abs_diff(from_chol_param(CholParam(2, {2, 2, 1})).matrix(), DenseMatrix{{4, 2}, {2, 5}}) < 1e-15);

    // Ordering: diagonal first, then strict lower triangle row-major.
    const DenseMatrix l = CholParam(3, {1, 2, 3, 4, 5, 6}).factor();
    CHECK(l == DenseMatrix{{1, 0, 0}, {4, 2, 0}, {5, 6, 3}});

    CHECK_THROWS_AS(CholParam(2, {1, -1, 0}), std::invalid_argument);
    CHECK_THROWS_AS(to_chol_param(SymPosDef(DenseMatrix{{1, 2}, {2, 1}})), NotPositiveDefinite);

    Rng rng(24);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto a = random_spd(5, rng);
        worst = std::max(worst, spdsru::testing::rel_frobenius(from_chol_param(to_chol_param(a)).matrix(), a.matrix()));
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("spd_relu") {
    CHECK(max_abs_diff(spd_relu(SymPosDef::identity(3), 1e-4).matrix(), DenseMatrix::identity(3)) < 1e-15);

    const auto out = spd_relu(SymPosDef(DenseMatrix{{4, -2}, {-2, 5}}), 1e-4);
    CHECK(max_abs_diff(out.matrix(), DenseMatrix{{4, 0}, {0, 4}}) < 1e-14);

    Rng rng(25);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + trial % 5;
        const auto a = random_spd(n, rng);
        const auto r = spd_relu(a);
        CHECK(r.is_positive_definite());
        CHECK(max_abs_diff(spd_relu(r).matrix(), r.matrix()) < 1e-10);
    }
}

TEST_CASE("SymPosDef validation and skew parametrization") {
    CHECK_THROWS_AS(SymPosDef(DenseMatrix{{1, 2}, {3, 1}}), std::invalid_argument);
    CHECK_THROWS_AS(SymPosDef(DenseMatrix(2, 3)), std::invalid_argument);
    const SkewParam s(3, {1, 2, 3});
    CHECK(s.matrix() == DenseMatrix{{0, -1, -2}, {1, 0, -3}, {2, 3, 0}});
    CHECK(SkewParam::from_matrix(s.matrix()) == s);
    CHECK(SkewParam(1).values().empty());
    CHECK(SkewParam(1).rotation() == DenseMatrix::identity(1));
}
