#include "spdsru/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace spdsru {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double d = 0.0;
    try {
        d = std::stod(v, &used);
    } catch (const std::exception&) {
        throw FormatError("config: bad number for " + key + ": '" + v + "'");
    }
    if (used != v.size() || !std::isfinite(d)) throw FormatError("config: bad number for " + key + ": '" + v + "'");
    return d;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
        throw FormatError("config: bad integer for " + key + ": '" + v + "'");
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw FormatError("config: integer out of range for " + key);
    }
}

}  // namespace

TrainConfig parse_config(std::istream& is) {
    TrainConfig c;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("config line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "layers") {
            c.layers = parse_uint(key, val);
        } else if (key == "scales") {
            std::vector<double> a;
            std::stringstream ss(val);
            std::string item;
            while (std::getline(ss, item, ',')) a.push_back(parse_double(key, trim(item)));
            try {
                c.scales = ScaleSet(a);
            } catch (const std::invalid_argument& e) {
                throw FormatError(std::string("config: scales: ") + e.what());
            }
        } else if (key == "init_eps") {
            c.init_eps = parse_double(key, val);
        } else if (key == "epochs") {
            c.epochs = parse_uint(key, val);
        } else if (key == "batch") {
            c.batch = parse_uint(key, val);
        } else if (key == "lr") {
            c.lr = parse_double(key, val);
        } else if (key == "momentum") {
            c.momentum = parse_double(key, val);
        } else if (key == "clip") {
            c.clip = parse_double(key, val);
        } else if (key == "seed") {
            c.seed = parse_uint(key, val);
        } else if (key == "optimizer") {
            if (val == "sgd") {
                c.optimizer = OptimizerKind::Sgd;
            } else if (val == "adam") {
                c.optimizer = OptimizerKind::Adam;
            } else {
                throw FormatError("config: optimizer must be sgd or adam");
            }
        } else {
            throw FormatError("config: unknown key '" + key + "'");
        }
    }
    if (c.layers == 0) throw FormatError("config: layers must be positive");
    if (c.batch == 0) throw FormatError("config: batch must be positive");
    if (!(c.init_eps > 0.0)) throw FormatError("config: init_eps must be positive");
    if (c.lr < 0.0) throw FormatError("config: lr must be nonnegative");
    if (c.momentum < 0.0 || c.momentum >= 1.0) throw FormatError("config: momentum must lie in [0, 1)");
    return c;
}

TrainConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open config " + path);
    return parse_config(is);
}

double sequence_loss(const Model& m, std::span<const SymPosDef> xs, std::size_t label, Objective obj) {
    if (obj == Objective::Classification) {
        const std::vector<double> z = model_forward(xs, m);
        if (label >= z.size()) throw std::invalid_argument("sequence_loss: label out of range");
        const double mx = *std::max_element(z.begin(), z.end());
        double s = 0.0;
        for (double v : z) s += std::exp(v - mx);
        return std::log(s) + mx - z[label];
    }
    if (xs.size() < 2) throw std::invalid_argument("sequence_loss: next-step loss needs T >= 2");
    const std::vector<SymPosDef> out = model_outputs(xs, m);
    double acc = 0.0;
    for (std::size_t t = 0; t + 1 < xs.size(); ++t) {
        const double ld = logdet_spd((out[t].matrix() + xs[t + 1].matrix()) * 0.5);
        acc += ld - 0.5 * (logdet_spd(out[t].matrix()) + logdet_spd(xs[t + 1].matrix()));
    }
    return acc / static_cast<double>(xs.size() - 1);
}

namespace {

struct LayerVars {
    ad::Var wy, wt, ws, gr, gp, gy;
};

struct ModelVars {
    std::vector<LayerVars> layers;
    ad::Var weight, bias;
};

DenseMatrix column_of(std::span<const double> v) {
    DenseMatrix m(v.size(), 1);
    std::copy(v.begin(), v.end(), m.values().begin());
    return m;
}

// Records the model and returns the loss node; fills `vars` and `logits`.
ad::Var record(ad::Tape& t, const Model& m, std::span<const SymPosDef> xs, std::size_t label, Objective obj,
               ModelVars& vars, ad::Var* logits) {
    if (xs.empty()) throw std::invalid_argument("loss_and_grad: empty sequence");
    for (const LayerParams& p : m.layers) {
        LayerVars lv;
        lv.wy = t.variable(column_of(p.sqrt_wy));
        lv.wt = t.variable(column_of(p.sqrt_wt));
        lv.ws = t.variable(column_of(p.sqrt_ws));
        lv.gr = t.variable(column_of(p.g_r.values()));
        lv.gp = t.variable(column_of(p.g_p.values()));
        lv.gy = t.variable(column_of(p.g_y.values()));
        vars.layers.push_back(lv);
    }
    vars.weight = t.variable(m.readout.weight);
    vars.bias = t.variable(column_of(m.readout.bias));

    std::vector<ad::Var> cur;
    cur.reserve(xs.size());
    for (const SymPosDef& x : xs) cur.push_back(t.constant(x.matrix()));
    const std::vector<ad::Var> inputs = cur;

    ad::Var last_factor{};
    const std::size_t k = m.scales.size();
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const LayerVars& lv = vars.layers[l];
        const ad::Var qr = t.skew_exp(lv.gr, m.n);
        const ad::Var qp = t.skew_exp(lv.gp, m.n);
        const ad::Var qy = t.skew_exp(lv.gy, m.n);
        const ad::Var wy = t.normalize_squares(lv.wy, kWeightFloor);
        const ad::Var wt = t.normalize_squares(lv.wt, kWeightFloor);
        const ad::Var ws = t.normalize_squares(lv.ws, kWeightFloor);
        std::vector<ad::Var> keep;
        for (std::size_t i = 0; i < k; ++i) keep.push_back(t.constant(1.0 - m.scales[i]));

        std::vector<ad::Var> state(k, t.constant(DenseMatrix::identity(m.n) * m.init_eps));
        std::vector<ad::Var> next;
        next.reserve(cur.size());
        for (const ad::Var x : cur) {
            const ad::Var y = ad::recursive_wfm(t, state, wy);
            const ad::Var r = ad::congruence(t, y, qr);
            const ad::Var pair[2] = {r, x};
            const ad::Var tt = ad::recursive_wfm(t, pair, wt);
            const ad::Var phi = ad::congruence(t, tt, qp);
            for (std::size_t i = 0; i < k; ++i) state[i] = ad::stein_step(t, state[i], phi, keep[i]);
            const ad::Var s = ad::recursive_wfm(t, state, ws);
            const ad::Var pre = ad::congruence(t, s, qy);
            last_factor = t.relu_factor(t.cholesky(pre), kDefaultReluEps);
            next.push_back(t.symmetrize(t.mul_transpose(last_factor, last_factor)));
        }
        cur = std::move(next);
    }

    if (obj == Objective::Classification) {
        const ad::Var z = t.add(t.matmul(vars.weight, t.chol_vec(last_factor)), vars.bias);
        if (logits) *logits = z;
        if (label >= t.value(z).size()) throw std::invalid_argument("loss_and_grad: label out of range");
        return t.softmax_xent(z, label);
    }
    if (xs.size() < 2) throw std::invalid_argument("loss_and_grad: next-step loss needs T >= 2");
    ad::Var acc = ad::stein_distance_sq(t, cur[0], inputs[1]);
    for (std::size_t s = 1; s + 1 < xs.size(); ++s) acc = t.add(acc, ad::stein_distance_sq(t, cur[s], inputs[s + 1]));
    return t.scale(acc, 1.0 / static_cast<double>(xs.size() - 1));
}

void append(std::vector<double>& out, const DenseMatrix& g) { out.insert(out.end(), g.values().begin(), g.values().end()); }

// Sizes of the parameter blocks in flatten order.
std::vector<std::size_t> block_sizes(const Model& m) {
    std::vector<std::size_t> b;
    for (const LayerParams& p : m.layers) {
        const std::size_t s = SkewParam::size_for(p.n);
        for (std::size_t v : {p.sqrt_wy.size(), p.sqrt_wt.size(), p.sqrt_ws.size(), s, s, s}) b.push_back(v);
    }
    b.push_back(m.readout.weight.size());
    b.push_back(m.readout.bias.size());
    return b;
}

double rel_error(std::span<const double> a, std::span<const double> b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

}  // namespace

LossGrad loss_and_grad(const Model& m, std::span<const SymPosDef> xs, std::size_t label, Objective obj) {
    ad::Tape t;
    ModelVars vars;
    ad::Var z{};
    const ad::Var loss = record(t, m, xs, label, obj, vars, &z);
    t.backward(loss);

    LossGrad out;
    out.loss = t.scalar(loss);
    out.grad.reserve(m.param_count());
    for (const LayerVars& lv : vars.layers)
        for (ad::Var v : {lv.wy, lv.wt, lv.ws, lv.gr, lv.gp, lv.gy}) append(out.grad, t.grad(v));
    append(out.grad, t.grad(vars.weight));
    append(out.grad, t.grad(vars.bias));
    if (obj == Objective::Classification) out.logits.assign(t.value(z).values().begin(), t.value(z).values().end());
    out.stats = t.stats();
    return out;
}

GradReport finite_diff_check(const Model& m, std::span<const SymPosDef> xs, std::size_t label, Objective obj,
                             double step) {
    GradReport r;
    if (m.param_count() == 0) return r;
    const LossGrad lg = loss_and_grad(m, xs, label, obj);
    r.analytic = lg.grad;
    r.stats = lg.stats;

    std::vector<double> theta = m.flatten();
    Model probe = m;
    r.numeric.resize(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double keep = theta[i];
        theta[i] = keep + step;
        probe.assign(theta);
        const double up = sequence_loss(probe, xs, label, obj);
        theta[i] = keep - step;
        probe.assign(theta);
        const double down = sequence_loss(probe, xs, label, obj);
        theta[i] = keep;
        r.numeric[i] = (up - down) / (2.0 * step);
    }
    r.relative_error = rel_error(r.analytic, r.numeric);
    std::size_t pos = 0;
    for (std::size_t len : block_sizes(m)) {
        if (len > 0) {
            const double e = rel_error(std::span(r.analytic).subspan(pos, len), std::span(r.numeric).subspan(pos, len));
            r.max_block_relative_error = std::max(r.max_block_relative_error, e);
        }
        pos += len;
    }
    return r;
}

std::size_t predict(const Model& m, std::span<const SymPosDef> xs) {
    const std::vector<double> z = model_forward(xs, m);
    return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

double accuracy(const Model& m, const SpdSequenceDataset& d) {
    if (d.items.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::size_t hit = 0;
    for (const LabeledSequence& item : d.items) hit += predict(m, item.xs) == item.label;
    return static_cast<double>(hit) / static_cast<double>(d.items.size());
}

FitResult fit(Model init, const SpdSequenceDataset& train, const SpdSequenceDataset* test, const TrainConfig& cfg) {
    if (train.items.empty()) throw std::invalid_argument("fit: empty training set");
    if (cfg.batch == 0) throw std::invalid_argument("fit: batch must be positive");
    if (cfg.objective == Objective::Classification && train.classes > init.readout.classes)
        throw ArchitectureMismatch("fit: dataset has more classes than the readout");
    if (train.n != init.n) throw ArchitectureMismatch("fit: dataset dimension differs from model");

    const auto start = std::chrono::steady_clock::now();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    FitResult res;
    res.model = std::move(init);
    std::vector<double> theta = res.model.flatten();
    std::vector<double> prev = theta;
    std::vector<double> vel(theta.size(), 0.0), sq(theta.size(), 0.0);
    std::size_t adam_t = 0;
    double lr = cfg.lr;

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(train.items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> g(theta.size());

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t seen = 0, hits = 0;

        for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch) {
            const std::size_t b1 = std::min(order.size(), b0 + cfg.batch);
            std::fill(g.begin(), g.end(), 0.0);
            double batch_loss = 0.0;
            std::size_t batch_hits = 0;
            bool failed = false;
            try {
                for (std::size_t i = b0; i < b1; ++i) {
                    const LabeledSequence& item = train.items[order[i]];
                    const LossGrad lg = loss_and_grad(res.model, item.xs, item.label, cfg.objective);
                    batch_loss += lg.loss;
                    for (std::size_t j = 0; j < g.size(); ++j) g[j] += lg.grad[j];
                    if (!lg.logits.empty()) {
                        const auto best = std::max_element(lg.logits.begin(), lg.logits.end()) - lg.logits.begin();
                        batch_hits += static_cast<std::size_t>(best) == item.label;
                    }
                }
            } catch (const NotPositiveDefinite&) {
                failed = true;
            } catch (const NoConvergence&) {
                failed = true;
            }
            if (failed) {
                theta = prev;
                res.model.assign(theta);
                std::fill(vel.begin(), vel.end(), 0.0);
                std::fill(sq.begin(), sq.end(), 0.0);
                adam_t = 0;
                lr *= 0.5;
                if (++res.lr_halvings > 40) {
                    FitResult partial = res;
                    throw TrainingDiverged("fit: forward pass keeps leaving the manifold", std::move(partial));
                }
                continue;
            }

            const double count = static_cast<double>(b1 - b0);
            const double mean_loss = batch_loss / count;
            double gnorm = 0.0;
            for (double& v : g) {
                v /= count;
                gnorm += v * v;
            }
            gnorm = std::sqrt(gnorm);
            if (!std::isfinite(mean_loss) || !std::isfinite(gnorm)) {
                res.model.assign(prev);
                FitResult partial = res;
                throw TrainingDiverged("fit: loss became non-finite", std::move(partial));
            }
            loss_sum += batch_loss;
            seen += b1 - b0;
            hits += batch_hits;
            if (cfg.clip > 0.0 && gnorm > cfg.clip)
                for (double& v : g) v *= cfg.clip / gnorm;

            prev = theta;
            if (cfg.optimizer == OptimizerKind::Sgd) {
                for (std::size_t j = 0; j < theta.size(); ++j) {
                    vel[j] = cfg.momentum * vel[j] - lr * g[j];
                    theta[j] += vel[j];
                }
            } else {
                constexpr double beta2 = 0.999, eps = 1e-8;
                const double beta1 = cfg.momentum;
                ++adam_t;
                const double c1 = 1.0 - std::pow(beta1, static_cast<double>(adam_t));
                const double c2 = 1.0 - std::pow(beta2, static_cast<double>(adam_t));
                for (std::size_t j = 0; j < theta.size(); ++j) {
                    vel[j] = beta1 * vel[j] + (1.0 - beta1) * g[j];
                    sq[j] = beta2 * sq[j] + (1.0 - beta2) * g[j] * g[j];
                    theta[j] -= lr * (vel[j] / c1) / (std::sqrt(sq[j] / c2) + eps);
                }
            }
            res.model.assign(theta);
        }

        EpochLog e;
        e.epoch = epoch;
        e.loss = seen ? loss_sum / static_cast<double>(seen) : nan;
        e.train_acc = (cfg.objective == Objective::Classification && seen)
                          ? static_cast<double>(hits) / static_cast<double>(seen)
                          : nan;
        e.test_acc = (test && !test->items.empty() && cfg.objective == Objective::Classification)
                         ? accuracy(res.model, *test)
                         : nan;
        e.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        res.log.push_back(e);
    }
    return res;
}

void write_log_csv(std::ostream& os, std::span<const EpochLog> log) {
    os << "epoch,loss,train_acc,test_acc,wall_seconds\n";
    const auto num = [&](double v) {
        if (std::isnan(v)) {
            os << "nan";
        } else {
            os << std::setprecision(10) << v;
        }
    };
    for (const EpochLog& e : log) {
        os << e.epoch << ',';
        num(e.loss);
        os << ',';
        num(e.train_acc);
        os << ',';
        num(e.test_acc);
        os << ',';
        num(e.wall_seconds);
        os << '\n';
    }
}

}  // namespace spdsru
