#include "spdsru/sru.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "binio.hpp"

namespace spdsru {

ScaleSet::ScaleSet(std::vector<double> alphas) : a_(std::move(alphas)) {
    if (a_.empty()) throw std::invalid_argument("ScaleSet: empty");
    std::sort(a_.begin(), a_.end());
    for (std::size_t i = 0; i < a_.size(); ++i) {
        if (!(a_[i] > 0.0 && a_[i] < 1.0)) throw std::invalid_argument("ScaleSet: scales must lie in (0, 1)");
        if (i > 0 && a_[i] == a_[i - 1]) throw std::invalid_argument("ScaleSet: duplicate scale");
    }
}

ScaleSet ScaleSet::default_set() { return ScaleSet({0.01, 0.25, 0.5, 0.9, 0.99}); }

WeightVector realize_weights(std::span<const double> sqrt_w) {
    if (sqrt_w.empty()) throw std::invalid_argument("realize_weights: empty");
    const double share = kWeightFloor / static_cast<double>(sqrt_w.size());
    std::vector<double> sq(sqrt_w.size());
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = sqrt_w[i] * sqrt_w[i] + share;
    return WeightVector::normalized(std::move(sq));
}

LayerParams LayerParams::neutral(std::size_t n, std::size_t scales) {
    LayerParams p;
    p.n = n;
    p.sqrt_wy.assign(scales, 1.0);
    p.sqrt_wt.assign(2, 1.0);
    p.sqrt_ws.assign(scales, 1.0);
    p.g_r = p.g_p = p.g_y = SkewParam(n);
    return p;
}

std::size_t LayerParams::count() const {
    return sqrt_wy.size() + sqrt_wt.size() + sqrt_ws.size() + 3 * SkewParam::size_for(n);
}

void LayerParams::pack(std::vector<double>& out) const {
    out.insert(out.end(), sqrt_wy.begin(), sqrt_wy.end());
    out.insert(out.end(), sqrt_wt.begin(), sqrt_wt.end());
    out.insert(out.end(), sqrt_ws.begin(), sqrt_ws.end());
    for (const SkewParam* g : {&g_r, &g_p, &g_y}) {
        const auto v = g->values();
        out.insert(out.end(), v.begin(), v.end());
    }
}

void LayerParams::unpack(std::span<const double> in, std::size_t& pos) {
    if (pos + count() > in.size()) throw std::invalid_argument("LayerParams: parameter vector too short");
    auto take = [&](std::span<double> dst) {
        for (double& d : dst) d = in[pos++];
    };
    take(sqrt_wy);
    take(sqrt_wt);
    take(sqrt_ws);
    take(g_r.values());
    take(g_p.values());
    take(g_y.values());
}

LayerState LayerState::initial(std::size_t n, std::size_t scales, double init_eps) {
    if (!(init_eps > 0.0)) throw std::invalid_argument("LayerState: init_eps must be positive");
    return LayerState{std::vector<SymPosDef>(scales, SymPosDef::identity(n, init_eps))};
}

StepResult layer_step(const LayerState& state, const SymPosDef& x, const LayerParams& p, const ScaleSet& scales) {
    const std::size_t k = scales.size();
    if (state.m.size() != k || p.sqrt_wy.size() != k || p.sqrt_ws.size() != k || p.sqrt_wt.size() != 2)
        throw ArchitectureMismatch("layer_step: scale count mismatch");
    if (x.dim() != p.n) throw ArchitectureMismatch("layer_step: input dimension mismatch");

    StepResult res;
    StepTrace& tr = res.trace;
    tr.y = recursive_stein_wfm(state.m, realize_weights(p.sqrt_wy));
    tr.r = translate(tr.y, p.g_r);
    const std::vector<SymPosDef> pair{tr.r, x};
    tr.t = recursive_stein_wfm(pair, realize_weights(p.sqrt_wt));
    tr.phi = translate(tr.t, p.g_p);

    res.state.m.reserve(k);
    for (std::size_t i = 0; i < k; ++i) res.state.m.push_back(recursive_stein_step(state.m[i], tr.phi, 1.0 - scales[i]));

    tr.s = recursive_stein_wfm(res.state.m, realize_weights(p.sqrt_ws));
    tr.pre_relu = translate(tr.s, p.g_y);
    tr.out_factor = relu_factor(cholesky_factor(tr.pre_relu.matrix()));
    res.out = SymPosDef::from_computed(mul_transpose(tr.out_factor, tr.out_factor));
    return res;
}

std::vector<SymPosDef> layer_forward(std::span<const SymPosDef> xs, const LayerParams& p, const ScaleSet& scales,
                                     double init_eps) {
    if (xs.empty()) throw std::invalid_argument("layer_forward: empty sequence");
    LayerState st = LayerState::initial(p.n, scales.size(), init_eps);
    std::vector<SymPosDef> out;
    out.reserve(xs.size());
    for (const SymPosDef& x : xs) {
        StepResult r = layer_step(st, x, p, scales);
        st = std::move(r.state);
        out.push_back(std::move(r.out));
    }
    return out;
}

ReadoutParams ReadoutParams::zeros(std::size_t classes, std::size_t n) {
    ReadoutParams r;
    r.classes = classes;
    r.features = CholParam::size_for(n);
    r.weight = DenseMatrix(classes, r.features);
    r.bias.assign(classes, 0.0);
    return r;
}

Model Model::random(std::size_t n, const ScaleSet& scales, std::size_t layers, std::size_t classes,
                    std::uint64_t seed, double init_eps) {
    if (n == 0 || layers == 0 || classes == 0) throw std::invalid_argument("Model: n, layers and classes must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> small(0.0, 0.1);
    Model m;
    m.n = n;
    m.scales = scales;
    m.init_eps = init_eps;
    for (std::size_t l = 0; l < layers; ++l) {
        LayerParams p = LayerParams::neutral(n, scales.size());
        for (auto* v : {&p.sqrt_wy, &p.sqrt_wt, &p.sqrt_ws})
            for (double& d : *v) d += small(rng);
        for (SkewParam* g : {&p.g_r, &p.g_p, &p.g_y})
            for (double& d : g->values()) d = small(rng);
        m.layers.push_back(std::move(p));
    }
    m.readout = ReadoutParams::zeros(classes, n);
    std::normal_distribution<double> ro(0.0, 1.0 / std::sqrt(static_cast<double>(m.readout.features)));
    for (double& d : m.readout.weight.values()) d = ro(rng);
    return m;
}

std::size_t Model::param_count() const {
    std::size_t c = readout.count();
    for (const LayerParams& p : layers) c += p.count();
    return c;
}

std::vector<double> Model::flatten() const {
    std::vector<double> out;
    out.reserve(param_count());
    for (const LayerParams& p : layers) p.pack(out);
    const auto w = readout.weight.values();
    out.insert(out.end(), w.begin(), w.end());
    out.insert(out.end(), readout.bias.begin(), readout.bias.end());
    return out;
}

void Model::assign(std::span<const double> flat) {
    if (flat.size() != param_count()) throw std::invalid_argument("Model::assign: wrong parameter count");
    std::size_t pos = 0;
    for (LayerParams& p : layers) p.unpack(flat, pos);
    for (double& d : readout.weight.values()) d = flat[pos++];
    for (double& d : readout.bias) d = flat[pos++];
}

std::size_t param_count(std::size_t n, std::size_t scales, std::size_t layers, std::size_t classes) {
    const std::size_t per_layer = 2 * scales + 2 + 3 * SkewParam::size_for(n);
    return layers * per_layer + classes * CholParam::size_for(n) + classes;
}

namespace {

void check_model(const Model& m) {
    if (m.layers.empty()) throw ArchitectureMismatch("model has no layers");
    for (const LayerParams& p : m.layers)
        if (p.n != m.n) throw ArchitectureMismatch("layer dimension differs from model dimension");
    if (m.readout.features != CholParam::size_for(m.n) || m.readout.weight.rows() != m.readout.classes ||
        m.readout.weight.cols() != m.readout.features || m.readout.bias.size() != m.readout.classes)
        throw ArchitectureMismatch("readout shape does not match model");
}

// Runs the stack and returns the last layer's outputs plus its final factor.
std::vector<SymPosDef> run_stack(std::span<const SymPosDef> xs, const Model& m, DenseMatrix* last_factor) {
    check_model(m);
    if (xs.empty()) throw std::invalid_argument("model: empty sequence");
    std::vector<SymPosDef> cur(xs.begin(), xs.end());
    for (const LayerParams& p : m.layers) {
        LayerState st = LayerState::initial(m.n, m.scales.size(), m.init_eps);
        std::vector<SymPosDef> next;
        next.reserve(cur.size());
        for (const SymPosDef& x : cur) {
            StepResult r = layer_step(st, x, p, m.scales);
            st = std::move(r.state);
            next.push_back(std::move(r.out));
            if (last_factor) *last_factor = std::move(r.trace.out_factor);
        }
        cur = std::move(next);
    }
    return cur;
}

}  // namespace

std::vector<SymPosDef> model_outputs(std::span<const SymPosDef> xs, const Model& m) {
    return run_stack(xs, m, nullptr);
}

std::vector<double> readout_features(const DenseMatrix& out_factor) {
    const std::size_t n = out_factor.rows();
    std::vector<double> f;
    f.reserve(CholParam::size_for(n));
    for (std::size_t i = 0; i < n; ++i) f.push_back(out_factor(i, i));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) f.push_back(out_factor(i, j));
    return f;
}

std::vector<double> model_forward(std::span<const SymPosDef> xs, const Model& m) {
    DenseMatrix factor;
    run_stack(xs, m, &factor);
    const std::vector<double> f = readout_features(factor);
    std::vector<double> logits(m.readout.bias);
    for (std::size_t c = 0; c < m.readout.classes; ++c)
        for (std::size_t j = 0; j < f.size(); ++j) logits[c] += m.readout.weight(c, j) * f[j];
    return logits;
}

void save_checkpoint(std::ostream& os, const Model& m) {
    using namespace binio;
    check_model(m);
    os.write(kCheckpointMagic, sizeof kCheckpointMagic);
    put_uint<std::uint64_t>(os, kCheckpointVersion);
    put_uint<std::uint64_t>(os, m.n);
    put_uint<std::uint64_t>(os, m.scales.size());
    put_uint<std::uint64_t>(os, m.layers.size());
    for (double a : m.scales.values()) put_f64(os, a);
    put_f64(os, m.init_eps);
    std::vector<double> block;
    for (const LayerParams& p : m.layers) {
        block.clear();
        p.pack(block);
        for (double d : block) put_f64(os, d);
    }
    put_uint<std::uint64_t>(os, m.readout.classes);
    for (double d : m.readout.weight.values()) put_f64(os, d);
    for (double d : m.readout.bias) put_f64(os, d);
    if (!os) throw FormatError("checkpoint write failed");
}

Model load_checkpoint(std::istream& is) {
    using namespace binio;
    char magic[sizeof kCheckpointMagic];
    if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kCheckpointMagic))
        throw FormatError("not a checkpoint (bad magic)");
    const auto version = get_uint<std::uint64_t>(is, "checkpoint header");
    if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const auto n = get_uint<std::uint64_t>(is, "checkpoint header");
    const auto k = get_uint<std::uint64_t>(is, "checkpoint header");
    const auto layers = get_uint<std::uint64_t>(is, "checkpoint header");
    if (n == 0 || n > 1024 || k == 0 || k > 1024 || layers == 0 || layers > 1024)
        throw FormatError("implausible checkpoint header");

    Model m;
    m.n = n;
    std::vector<double> alphas(k);
    for (double& a : alphas) a = get_f64(is, "scale set");
    try {
        m.scales = ScaleSet(alphas);
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("checkpoint scale set: ") + e.what());
    }
    m.init_eps = get_f64(is, "init_eps");
    if (!(m.init_eps > 0.0)) throw FormatError("checkpoint init_eps must be positive");
    for (std::uint64_t l = 0; l < layers; ++l) {
        LayerParams p = LayerParams::neutral(n, k);
        std::vector<double> block(p.count());
        for (double& d : block) d = get_f64(is, "layer block");
        std::size_t pos = 0;
        p.unpack(block, pos);
        m.layers.push_back(std::move(p));
    }
    const auto classes = get_uint<std::uint64_t>(is, "readout header");
    if (classes == 0 || classes > 1u << 20) throw FormatError("implausible class count");
    m.readout = ReadoutParams::zeros(classes, n);
    for (double& d : m.readout.weight.values()) d = get_f64(is, "readout weight");
    for (double& d : m.readout.bias) d = get_f64(is, "readout bias");
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint");
    for (double d : m.flatten())
        if (!std::isfinite(d)) throw FormatError("non-finite checkpoint parameter");
    return m;
}

void save_checkpoint(const std::string& path, const Model& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    save_checkpoint(os, m);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path);
    return load_checkpoint(is);
}

}  // namespace spdsru
