// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "spdsru/experiments.hpp"
#include "spdsru/frechet.hpp"
#include "test_support.hpp"

using namespace spdsru;
using namespace spdsru::testing;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

Outcome isometry() {
    Rng rng(101);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const SymPosDef a = random_spd(3, rng), b = random_spd(3, rng);
        const double ds = sphere_distance(sphere_embed(a), sphere_embed(b));
        const double st = stein_distance(SymPosDef::from_computed(a.matrix() * 2.0),
                                         SymPosDef::from_computed(b.matrix() * 2.0));
        worst = std::max(worst, std::abs(ds - st));
    }
    return {worst < 1e-9, fmt("max gap %.3g over 10^4 pairs", worst)};
}

Outcome closed_form_sphere_mean() {
    Rng rng(202);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst = -1e300;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto p = sphere_embed(random_spd(3, rng));
        const auto q = sphere_embed(random_spd(3, rng));
        const double w = unit(rng);
        const auto r = sphere_wfm_step(p, q, w);
        const double dq = sphere_distance(q, r), dp = sphere_distance(p, r);
        const double closed = w * dq * dq + (1 - w) * dp * dp;

        // Grid over the great circle through p and q, parametrized by the
        // angle from p; only points with positive inner products count.
        const double ip = sphere_inner(p, q);
        const double theta = std::acos(ip);
        double best = 1e300;
        for (int i = 0; i < 10000; ++i) {
            const double phi = 2.0 * M_PI * i / 10000.0;
            const double a = std::sin(theta - phi) / std::sin(theta);
            const double b = std::sin(phi) / std::sin(theta);
            const double to_p = a + b * ip, to_q = a * ip + b;
            if (to_p <= 0 || to_q <= 0) continue;
            best = std::min(best, -w * std::log(to_q * to_q) - (1 - w) * std::log(to_p * to_p));
        }
        worst = std::max(worst, closed - best);
    }
    return {worst <= 1e-8, fmt("max(closed - grid min) = %.3g over 10^3 instances", worst)};
}

Outcome recursive_consistency() {
    Rng rng(303);
    std::vector<SymPosDef> xs;
    for (int i = 0; i < 200; ++i) xs.push_back(random_spd(3, rng));
    const FmDiagnostics d = consistency_report(xs, 50, 7);
    const double v20 = d.variance[19], v200 = d.variance[199];
    const double gap = d.oracle_distance[199], gap_max = d.oracle_distance_max[199];
    return {v200 < 0.5 * v20 && gap_max < 5e-2,
            fmt("var(20) %.3g, var(200) %.3g, oracle distance at 200: mean %.3g max %.3g", v20, v200, gap, gap_max)};
}

Outcome step_identities() {
    Rng rng(404);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = 2 + i % 3;
        const SymPosDef a = random_spd(n, rng), b = random_spd(n, rng);
        const double scale = std::max(a.matrix().max_abs(), b.matrix().max_abs());
        worst = std::max(worst, max_abs_diff(recursive_stein_step(a, b, 0.0).matrix(), a.matrix()) / scale);
        worst = std::max(worst, max_abs_diff(recursive_stein_step(a, b, 1.0).matrix(), b.matrix()) / scale);
        const SymPosDef mid = recursive_stein_step(a, b, 0.5);
        worst = std::max(worst, max_abs_diff(mid.matrix(), recursive_stein_step(b, a, 0.5).matrix()) / scale);
        worst = std::max(worst, std::abs(stein_distance(a, mid) - stein_distance(b, mid)));
    }
    double scalar = 0.0;
    std::uniform_real_distribution<double> pos(0.01, 100.0);
    for (int i = 0; i < 1000; ++i) {
        const double x = pos(rng), y = pos(rng);
        const double m = recursive_stein_step(SymPosDef(DenseMatrix{{x}}), SymPosDef(DenseMatrix{{y}}), 0.5)(0, 0);
        scalar = std::max(scalar, std::abs(m - std::sqrt(x * y)) / std::sqrt(x * y));
    }
    return {worst < 1e-9 && scalar < 1e-10,
            fmt("endpoint/midpoint max error %.3g, SPD(1) midpoint vs geometric mean %.3g", worst, scalar)};
}

Outcome metric_invariances() {
    Rng rng(505);
    double gl = 0.0, tr = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const SymPosDef a = random_spd(3, rng), b = random_spd(3, rng);
        const DenseMatrix g = random_gl(3, rng);
        const double base = stein_distance(a, b);
        const auto congr = [&](const SymPosDef& s) { return SymPosDef::from_computed(mul_transpose(g * s.matrix(), g)); };
        gl = std::max(gl, std::abs(stein_distance(congr(a), congr(b)) - base));
        const SkewParam v = random_skew_param(3, rng);
        tr = std::max(tr, std::abs(stein_distance(translate(a, v), translate(b, v)) - base));
    }
    return {gl < 1e-9 && tr < 1e-9, fmt("GL-invariance gap %.3g, translation gap %.3g over 10^4 triples", gl, tr)};
}

Outcome layer_closure() {
    Rng rng(606);
    std::normal_distribution<double> nd(0.0, 1.0);
    const ScaleSet scales = ScaleSet::default_set();
    std::size_t failures = 0, evaluations = 0;
    for (std::size_t n : {2u, 3u, 5u}) {
        for (int i = 0; i < 334; ++i) {
            LayerParams p = LayerParams::neutral(n, scales.size());
            for (auto* v : {&p.sqrt_wy, &p.sqrt_wt, &p.sqrt_ws})
                for (double& x : *v) x = nd(rng);
            p.g_r = random_skew_param(n, rng, 2.0);
            p.g_p = random_skew_param(n, rng, 2.0);
            p.g_y = random_skew_param(n, rng, 2.0);
            LayerState st;
            for (std::size_t j = 0; j < scales.size(); ++j) st.m.push_back(random_spd(n, rng));
            ++evaluations;
            try {
                const StepResult r = layer_step(st, random_spd(n, rng), p, scales);
                const StepTrace& t = r.trace;
                bool ok = true;
                for (const SymPosDef* s : {&t.y, &t.r, &t.t, &t.phi, &t.s, &t.pre_relu, &r.out})
                    ok = ok && s->is_positive_definite();
                for (const SymPosDef& m : r.state.m) ok = ok && m.is_positive_definite();
                failures += !ok;
            } catch (const Error&) {
                ++failures;
            }
        }
    }
    return {failures == 0 && evaluations >= 1000,
            fmt("%.0f failures in %.0f evaluations at n in {2,3,5}", double(failures), double(evaluations))};
}

Outcome gradient_check() {
    Rng rng(707);
    const Model m = Model::random(3, ScaleSet::default_set(), 1, 2, 17);
    std::vector<SymPosDef> xs;
    for (int t = 0; t < 5; ++t) xs.push_back(random_spd(3, rng));
    const GradReport r = finite_diff_check(m, xs, 1, Objective::Classification);
    return {r.relative_error < 1e-4 && r.max_block_relative_error < 1e-4,
            fmt("relative error %.3g (worst block %.3g), %.0f parameters", r.relative_error,
                r.max_block_relative_error, double(r.analytic.size()))};
}

// Five repetitions; each draws a fresh dataset and splits it 200/100.
double classification_accuracy(double separation_deg, std::vector<double>& per_rep) {
    TrainConfig cfg;
    cfg.layers = 3;
    cfg.init_eps = 1.0;
    cfg.optimizer = OptimizerKind::Adam;
    cfg.lr = 0.02;
    cfg.batch = 8;
    cfg.epochs = 40;
    per_rep.assign(5, 0.0);
    parallel_for(5, [&](std::size_t rep) {
        RotatingSpec s;
        s.classes = 2;
        s.per_class = 150;
        s.n = 3;
        s.length = 20;
        s.rates_deg = {10.0, 10.0 + separation_deg};
        s.noise = 0.1;
        s.seed = 100 + rep;
        const SpdSequenceDataset d = gen_rotating_spd(s);
        std::vector<std::size_t> tr, te;
        for (std::size_t i = 0; i < d.size(); ++i) (i % s.per_class < 100 ? tr : te).push_back(i);
        TrainConfig c = cfg;
        c.seed = rep + 1;
        const Model init = Model::random(3, c.scales, c.layers, 2, c.seed, c.init_eps);
        per_rep[rep] = accuracy(fit(init, d.subset(tr), nullptr, c).model, d.subset(te));
    });
    double mean = 0.0;
    for (double a : per_rep) mean += a / 5.0;
    return mean;
}

Outcome desk_classification() {
    std::vector<double> a15, a5;
    const double m15 = classification_accuracy(15.0, a15);
    const double m5 = classification_accuracy(5.0, a5);
    const auto sd = [](const std::vector<double>& v, double m) {
        double s = 0.0;
        for (double x : v) s += (x - m) * (x - m);
        return std::sqrt(s / static_cast<double>(v.size() - 1));
    };
    return {m15 >= 0.90 && m5 > 0.70,
            fmt("15 deg: %.3f +- %.3f; 5 deg: %.3f +- %.3f", m15, sd(a15, m15), m5, sd(a5, m5))};
}

PermTestConfig group_model_config(std::uint64_t seed) {
    PermTestConfig cfg;
    cfg.train.scales = ScaleSet({0.1, 0.5, 0.9});
    cfg.train.init_eps = 1.0;
    cfg.train.optimizer = OptimizerKind::Adam;
    cfg.train.lr = 0.02;
    cfg.train.batch = 4;
    cfg.train.epochs = 5;
    cfg.seed = seed;
    return cfg;
}

std::pair<SpdSequenceDataset, SpdSequenceDataset> groups(bool planted, std::uint64_t seed) {
    RotatingSpec s;
    s.n = 3;
    s.length = 8;
    s.noise = 0.1;
    s.seed = seed;
    if (planted) {
        s.classes = 2;
        s.per_class = 8;
        s.rates_deg = {0.0, 20.0};
    } else {
        s.classes = 1;
        s.per_class = 16;
        s.rates_deg = {10.0};
    }
    const SpdSequenceDataset d = gen_rotating_spd(s);
    std::vector<std::size_t> ia, ib;
    for (std::size_t i = 0; i < d.size(); ++i) ((planted ? d.items[i].label == 0 : i < 8) ? ia : ib).push_back(i);
    return {d.subset(ia), d.subset(ib)};
}

Outcome permutation_testing() {
    const auto [pa, pb] = groups(true, 500);
    const PermTestResult planted = permutation_test(pa, pb, 199, group_model_config(1));
    const PermTestResult cramer = cramer_baseline(pa, pb, 199, 1);
    std::size_t rejections = 0;
    for (int rep = 0; rep < 20; ++rep) {
        const auto [na, nb] = groups(false, 600 + rep);
        rejections += permutation_test(na, nb, 199, group_model_config(rep + 1)).p_value < 0.05;
    }
    const double rate = rejections / 20.0;
    return {planted.p_value < 0.05 && rate <= 0.2,
            fmt("planted p = %.3f (Cramér baseline p = %.3f); null rejection rate %.2f over 20 repetitions",
                planted.p_value, cramer.p_value, rate)};
}

// Walks the checkpoint bytes with its own reader and counts every stored
// parameter block.
Outcome checkpoint_layout() {
    std::size_t cases = 0, mismatches = 0;
    for (std::size_t n : {1u, 2u, 3u, 5u})
        for (std::size_t k : {1u, 3u, 5u})
            for (std::size_t layers : {1u, 2u, 3u})
                for (std::size_t classes : {1u, 2u, 4u}) {
                    std::vector<double> alphas;
                    for (std::size_t j = 0; j < k; ++j) alphas.push_back((j + 1.0) / (k + 1.0));
                    const Model m = Model::random(n, ScaleSet(alphas), layers, classes, 3);
                    std::ostringstream os;
                    save_checkpoint(os, m);
                    const std::string bytes = os.str();
                    std::size_t pos = 0;
                    const auto u64 = [&] {
                        std::uint64_t v = 0;
                        for (int b = 0; b < 8; ++b)
                            v |= std::uint64_t(static_cast<unsigned char>(bytes.at(pos + b))) << (8 * b);
                        pos += 8;
                        return v;
                    };
                    const auto f64s = [&](std::size_t count) {
                        if (pos + 8 * count > bytes.size()) throw std::out_of_range("short checkpoint");
                        pos += 8 * count;
                        return count;
                    };
                    ++cases;
                    bool ok = std::memcmp(bytes.data(), "SPDSRUCK", 8) == 0;
                    pos = 8;
                    const std::uint64_t version = u64(), fn = u64(), fk = u64(), fl = u64();
                    ok = ok && version == 1 && fn == n && fk == k && fl == layers;
                    f64s(fk);  // scale set
                    f64s(1);   // init_eps
                    std::size_t params = 0;
                    const std::size_t skew = fn * (fn == 0 ? 0 : fn - 1) / 2;
                    for (std::uint64_t l = 0; l < fl; ++l) {
                        params += f64s(fk);    // weights into Y
                        params += f64s(2);     // weights into T
                        params += f64s(fk);    // weights into S
                        params += f64s(skew);  // rotation R
                        params += f64s(skew);  // rotation Φ
                        params += f64s(skew);  // rotation of the output
                    }
                    const std::uint64_t fc = u64();
                    params += f64s(fc * fn * (fn + 1) / 2);
                    params += f64s(fc);
                    ok = ok && fc == classes && pos == bytes.size();
                    ok = ok && params == param_count(n, k, layers, classes) && params == m.param_count();
                    mismatches += !ok;
                }
    return {mismatches == 0, fmt("%.0f architectures, %.0f mismatches", double(cases), double(mismatches))};
}

}  // namespace

int main(int argc, char** argv) {
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
        double time_limit;  // seconds
    };
    constexpr double none = 1e300;
    const std::vector<Criterion> criteria = {
        {"isometry of the Gaussian embedding", isometry, 10},
        {"closed-form sphere weighted mean", closed_form_sphere_mean, 30},
        {"recursive estimator consistency", recursive_consistency, 60},
        {"recursive step endpoint and midpoint identities", step_identities, none},
        {"metric invariances", metric_invariances, none},
        {"manifold closure of the layer", layer_closure, none},
        {"gradient correctness", gradient_check, 60},
        {"desk-scale classification", desk_classification, 20 * 60},
        {"permutation testing", permutation_testing, 60 * 60},
        {"parameter count against checkpoint layout", checkpoint_layout, none},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs > criteria[i].time_limit) {
            o.pass = false;
            o.detail += fmt(" (over the %.0fs time limit)", criteria[i].time_limit);
        }
        std::printf("%s criterion %d: %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].name,
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
