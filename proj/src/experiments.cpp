#include "spdsru/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <memory>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "spdsru/frechet.hpp"

namespace spdsru {

namespace {

DenseMatrix rotation_in_plane(std::size_t n, double radians) {
    DenseMatrix r = DenseMatrix::identity(n);
    if (n < 2) return r;
    const double c = std::cos(radians), s = std::sin(radians);
    r(0, 0) = c;
    r(0, 1) = -s;
    r(1, 0) = s;
    r(1, 1) = c;
    return r;
}

// Eigenvalues spread geometrically over [1/4, 4], mildly rotated by a
// seed-dependent orthogonal matrix.
DenseMatrix base_covariance(std::size_t n, std::uint64_t seed) {
    std::vector<double> lam(n, 1.0);
    for (std::size_t i = 0; i < n && n > 1; ++i)
        lam[i] = std::pow(4.0, 1.0 - 2.0 * static_cast<double>(i) / static_cast<double>(n - 1));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 0.3);
    DenseMatrix z(n, n);
    for (double& v : z.values()) v = nd(rng);
    const DenseMatrix v = skew_exp((z - z.transposed()) * 0.5);
    return symmetrized(mul_transpose(v * DenseMatrix::diagonal(lam), v));
}

}  // namespace

SpdSequenceDataset gen_rotating_spd(const RotatingSpec& spec) {
    if (spec.classes == 0 || spec.n == 0 || spec.length == 0) throw std::invalid_argument("gen: classes, n, T must be positive");
    if (spec.rates_deg.size() != spec.classes) throw std::invalid_argument("gen: need one rate per class");
    if (!(spec.noise >= 0.0) || !std::isfinite(spec.noise)) throw std::invalid_argument("gen: noise must be nonnegative");
    for (std::size_t i = 0; i < spec.classes; ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (spec.rates_deg[i] == spec.rates_deg[j]) throw std::invalid_argument("gen: rates must differ across classes");

    SpdSequenceDataset d;
    d.n = spec.n;
    d.length = spec.length;
    d.classes = spec.classes;
    d.seed = spec.seed;
    std::ostringstream meta;
    meta << "rotating n=" << spec.n << " T=" << spec.length << " noise=" << spec.noise
         << " phase=" << (spec.random_phase ? "random" : "zero") << " rates=";
    for (std::size_t c = 0; c < spec.classes; ++c) meta << (c ? "," : "") << spec.rates_deg[c];
    d.generator = meta.str();

    const DenseMatrix base = base_covariance(spec.n, spec.seed);
    const double to_rad = std::acos(-1.0) / 180.0;
    const double zscale = 1.0 / std::sqrt(static_cast<double>(spec.n));
    for (std::size_t c = 0; c < spec.classes; ++c) {
        for (std::size_t k = 0; k < spec.per_class; ++k) {
            std::seed_seq seq{spec.seed, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(k)};
            std::mt19937_64 rng(seq);
            std::normal_distribution<double> nd(0.0, zscale);
            const double phase = spec.random_phase ? std::uniform_real_distribution<double>(0.0, 180.0)(rng) : 0.0;
            LabeledSequence item;
            item.label = static_cast<std::uint32_t>(c);
            for (std::size_t t = 0; t < spec.length; ++t) {
                const DenseMatrix r = rotation_in_plane(spec.n, (phase + spec.rates_deg[c] * static_cast<double>(t)) * to_rad);
                DenseMatrix x = mul_transpose(r * base, r);
                if (spec.noise > 0.0) {
                    DenseMatrix z(spec.n, spec.n);
                    for (double& v : z.values()) v = nd(rng);
                    const DenseMatrix e = expm(z * spec.noise);
                    x = mul_transpose(e * x, e);
                }
                item.xs.push_back(SymPosDef::from_computed(x));
            }
            d.items.push_back(std::move(item));
        }
    }
    return d;
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn, std::size_t threads) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

std::vector<std::size_t> stratified_folds(const SpdSequenceDataset& d, std::size_t folds, std::uint64_t seed) {
    if (folds < 2) throw std::invalid_argument("folds must be at least 2");
    std::vector<std::size_t> fold(d.size());
    std::mt19937_64 rng(seed);
    std::size_t dealt = 0;
    for (std::size_t c = 0; c < d.classes; ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < d.size(); ++i)
            if (d.items[i].label == c) idx.push_back(i);
        std::shuffle(idx.begin(), idx.end(), rng);
        // Continue the deal across classes so fold sizes stay balanced.
        for (std::size_t i : idx) fold[i] = dealt++ % folds;
    }
    return fold;
}

ClassificationReport run_classification(const SpdSequenceDataset& d, const TrainConfig& cfg, std::size_t folds,
                                        std::size_t threads) {
    if (d.size() < folds) throw std::invalid_argument("run_classification: fewer items than folds");
    const std::vector<std::size_t> assign = stratified_folds(d, folds, cfg.seed);
    ClassificationReport rep;
    rep.test_acc.assign(folds, 0.0);
    rep.train_acc.assign(folds, 0.0);
    rep.param_count = param_count(d.n, cfg.scales.size(), cfg.layers, d.classes);

    TrainConfig fold_cfg = cfg;
    fold_cfg.objective = Objective::Classification;
    parallel_for(
        folds,
        [&](std::size_t f) {
            std::vector<std::size_t> tr, te;
            for (std::size_t i = 0; i < d.size(); ++i) (assign[i] == f ? te : tr).push_back(i);
            const SpdSequenceDataset train = d.subset(tr), test = d.subset(te);
            const Model init = Model::random(d.n, cfg.scales, cfg.layers, d.classes, cfg.seed, cfg.init_eps);
            const FitResult r = fit(init, train, nullptr, fold_cfg);
            rep.test_acc[f] = accuracy(r.model, test);
            rep.train_acc[f] = accuracy(r.model, train);
        },
        threads);

    rep.mean = std::accumulate(rep.test_acc.begin(), rep.test_acc.end(), 0.0) / static_cast<double>(folds);
    double ss = 0.0;
    for (double a : rep.test_acc) ss += (a - rep.mean) * (a - rep.mean);
    rep.stddev = std::sqrt(ss / static_cast<double>(folds - 1));
    return rep;
}

void write_report(std::ostream& os, const ClassificationReport& r) {
    os << "fold,test_acc,train_acc\n";
    for (std::size_t f = 0; f < r.test_acc.size(); ++f)
        os << f << ',' << std::setprecision(6) << r.test_acc[f] << ',' << r.train_acc[f] << '\n';
    os << "mean," << r.mean << "\nstd," << r.stddev << "\nparam_count," << r.param_count << '\n';
}

double model_distance(const Model& a, const Model& b, const SpdSequenceDataset& probes, ModelDistanceKind kind) {
    const bool same = a.n == b.n && a.scales == b.scales && a.layers.size() == b.layers.size() &&
                      a.readout.classes == b.readout.classes && a.param_count() == b.param_count();
    if (!same) throw ArchitectureMismatch("model_distance: architectures differ");
    if (kind == ModelDistanceKind::ParameterL2) {
        const auto fa = a.flatten(), fb = b.flatten();
        double s = 0.0;
        for (std::size_t i = 0; i < fa.size(); ++i) s += (fa[i] - fb[i]) * (fa[i] - fb[i]);
        return std::sqrt(s);
    }
    if (probes.items.empty()) throw std::invalid_argument("model_distance: empty probe set");
    double total = 0.0;
    std::size_t count = 0;
    for (const LabeledSequence& p : probes.items) {
        const auto oa = model_outputs(p.xs, a);
        const auto ob = model_outputs(p.xs, b);
        for (std::size_t t = 0; t < oa.size(); ++t) total += stein_distance_sq(oa[t], ob[t]);
        count += oa.size();
    }
    return std::sqrt(total / static_cast<double>(count));
}

namespace {

void check_groups(const SpdSequenceDataset& a, const SpdSequenceDataset& b, std::size_t permutations) {
    if (a.items.empty() || b.items.empty()) throw std::invalid_argument("permutation test: empty group");
    if (a.n != b.n) throw ArchitectureMismatch("permutation test: groups differ in matrix dimension");
    if (permutations < 99) throw std::invalid_argument("permutation test: need at least 99 permutations");
}

// Group-A masks for every permutation, drawn up front so results do not
// depend on evaluation order.
std::vector<std::vector<bool>> relabelings(std::size_t m, std::size_t total, std::size_t permutations,
                                           std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<bool> base(total, false);
    std::fill(base.begin(), base.begin() + static_cast<std::ptrdiff_t>(m), true);
    std::vector<std::vector<bool>> out;
    out.reserve(permutations);
    for (std::size_t p = 0; p < permutations; ++p) {
        std::vector<bool> mask = base;
        for (std::size_t i = total; i-- > 1;) {
            std::uniform_int_distribution<std::size_t> pick(0, i);
            const std::size_t j = pick(rng);
            const bool tmp = mask[i];
            mask[i] = mask[j];
            mask[j] = tmp;
        }
        out.push_back(std::move(mask));
    }
    return out;
}

PermTestResult finish(double observed, std::vector<double> nulls) {
    PermTestResult r;
    r.observed = observed;
    r.permutations = nulls.size();
    std::size_t ge = 0;
    for (double v : nulls) ge += v >= observed;
    r.p_value = static_cast<double>(1 + ge) / static_cast<double>(1 + nulls.size());
    r.null_stats = std::move(nulls);
    return r;
}

SpdSequenceDataset pooled(const SpdSequenceDataset& a, const SpdSequenceDataset& b) {
    SpdSequenceDataset p = a;
    p.classes = 1;
    p.length = std::max(a.length, b.length);
    p.items.insert(p.items.end(), b.items.begin(), b.items.end());
    for (auto& item : p.items) item.label = 0;
    return p;
}

}  // namespace

PermTestResult permutation_test(const SpdSequenceDataset& a, const SpdSequenceDataset& b, std::size_t permutations,
                                const PermTestConfig& cfg) {
    check_groups(a, b, permutations);
    const SpdSequenceDataset pool = pooled(a, b);
    TrainConfig tc = cfg.train;
    tc.objective = Objective::NextStep;
    const Model init = Model::random(a.n, tc.scales, tc.layers, 1, cfg.seed, tc.init_eps);

    const auto statistic = [&](const std::vector<bool>& in_a) {
        std::vector<std::size_t> ia, ib;
        for (std::size_t i = 0; i < in_a.size(); ++i) (in_a[i] ? ia : ib).push_back(i);
        const Model ma = fit(init, pool.subset(ia), nullptr, tc).model;
        const Model mb = fit(init, pool.subset(ib), nullptr, tc).model;
        return model_distance(ma, mb, pool, cfg.distance);
    };

    std::vector<bool> truth(pool.size(), false);
    std::fill(truth.begin(), truth.begin() + static_cast<std::ptrdiff_t>(a.size()), true);
    const double observed = statistic(truth);

    const auto masks = relabelings(a.size(), pool.size(), permutations, cfg.seed);
    std::vector<double> nulls(permutations);
    parallel_for(permutations, [&](std::size_t p) { nulls[p] = statistic(masks[p]); }, cfg.threads);
    return finish(observed, std::move(nulls));
}

double energy_statistic(const DenseMatrix& dist, std::span<const bool> in_a) {
    const std::size_t total = in_a.size();
    double ab = 0.0, aa = 0.0, bb = 0.0;
    std::size_t m = 0;
    for (bool v : in_a) m += v;
    const std::size_t n = total - m;
    if (m == 0 || n == 0) throw std::invalid_argument("energy_statistic: empty group");
    for (std::size_t i = 0; i < total; ++i)
        for (std::size_t j = 0; j < total; ++j) {
            const double d = dist(i, j);
            if (in_a[i] && in_a[j]) {
                aa += d;
            } else if (!in_a[i] && !in_a[j]) {
                bb += d;
            } else if (in_a[i]) {
                ab += d;
            }
        }
    const double dm = static_cast<double>(m), dn = static_cast<double>(n);
    return dm * dn / (dm + dn) * (2.0 * ab / (dm * dn) - aa / (dm * dm) - bb / (dn * dn));
}

PermTestResult cramer_baseline(const SpdSequenceDataset& a, const SpdSequenceDataset& b, std::size_t permutations,
                               std::uint64_t seed) {
    check_groups(a, b, permutations);
    const SpdSequenceDataset pool = pooled(a, b);
    std::vector<SymPosDef> summary;
    summary.reserve(pool.size());
    for (const LabeledSequence& item : pool.items)
        summary.push_back(batch_wfm(item.xs, WeightVector::uniform(item.xs.size())).mean);

    DenseMatrix dist(pool.size(), pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i)
        for (std::size_t j = 0; j < i; ++j) dist(i, j) = dist(j, i) = stein_distance(summary[i], summary[j]);

    std::vector<bool> truth(pool.size(), false);
    std::fill(truth.begin(), truth.begin() + static_cast<std::ptrdiff_t>(a.size()), true);
    const auto stat = [&](const std::vector<bool>& mask) {
        const std::unique_ptr<bool[]> buf(new bool[mask.size()]);
        std::copy(mask.begin(), mask.end(), buf.get());
        return energy_statistic(dist, std::span<const bool>(buf.get(), mask.size()));
    };
    const double observed = stat(truth);
    const auto masks = relabelings(a.size(), pool.size(), permutations, seed);
    std::vector<double> nulls(permutations);
    for (std::size_t p = 0; p < permutations; ++p) nulls[p] = stat(masks[p]);
    return finish(observed, std::move(nulls));
}

}  // namespace spdsru
