#pragma once

// The SPD-SRU recurrent layer, layer stacks, the Cholesky-chart readout and
// the binary checkpoint format.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spdsru/frechet.hpp"
#include "spdsru/geometry.hpp"

namespace spdsru {

/// Moving-average factors α, distinct, in (0, 1), kept in ascending order.
class ScaleSet {
public:
    ScaleSet() = default;
    explicit ScaleSet(std::vector<double> alphas);

    static ScaleSet default_set();

    std::size_t size() const noexcept { return a_.size(); }
    double operator[](std::size_t i) const noexcept { return a_[i]; }
    std::span<const double> values() const noexcept { return a_; }

    friend bool operator==(const ScaleSet&, const ScaleSet&) = default;

private:
    std::vector<double> a_;
};

inline constexpr double kDefaultInitEps = 1e-3;
inline constexpr double kWeightFloor = 1e-12;

/// Convex weights from unconstrained square roots:
/// w_i = (s_i² + δ/k) / (Σ s_j² + δ), δ = kWeightFloor. All-zero input maps
/// to uniform weights.
WeightVector realize_weights(std::span<const double> sqrt_w);

struct LayerParams {
    std::size_t n = 0;
    std::vector<double> sqrt_wy;  // |J|
    std::vector<double> sqrt_wt;  // 2: {R_t, X_t}
    std::vector<double> sqrt_ws;  // |J|
    SkewParam g_r, g_p, g_y;

    /// Unit square roots and zero rotations.
    static LayerParams neutral(std::size_t n, std::size_t scales);

    std::size_t count() const;
    /// Appends every scalar in storage order: sqrt_wy, sqrt_wt, sqrt_ws, g_r, g_p, g_y.
    void pack(std::vector<double>& out) const;
    /// Reads count() scalars starting at `pos`, advancing it.
    void unpack(std::span<const double> in, std::size_t& pos);

    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// Running means M^(α), one per scale, in ScaleSet order.
struct LayerState {
    std::vector<SymPosDef> m;

    static LayerState initial(std::size_t n, std::size_t scales, double init_eps = kDefaultInitEps);
};

/// Every intermediate of one step, for inspection and tests.
struct StepTrace {
    SymPosDef y, r, t, phi, s, pre_relu;
    DenseMatrix out_factor;  // clamped Cholesky factor of the output
};

struct StepResult {
    LayerState state;
    SymPosDef out;
    StepTrace trace;
};

StepResult layer_step(const LayerState& state, const SymPosDef& x, const LayerParams& p, const ScaleSet& scales);

/// Folds layer_step from M₀ = init_eps·I and returns O_1 … O_T.
std::vector<SymPosDef> layer_forward(std::span<const SymPosDef> xs, const LayerParams& p, const ScaleSet& scales,
                                     double init_eps = kDefaultInitEps);

/// Affine map from the Cholesky-chart vector of O_T to class logits.
struct ReadoutParams {
    std::size_t classes = 0;
    std::size_t features = 0;
    DenseMatrix weight;  // classes × features
    std::vector<double> bias;

    static ReadoutParams zeros(std::size_t classes, std::size_t n);
    std::size_t count() const { return classes * features + classes; }

    friend bool operator==(const ReadoutParams&, const ReadoutParams&) = default;
};

struct Model {
    std::size_t n = 0;
    ScaleSet scales;
    double init_eps = kDefaultInitEps;
    std::vector<LayerParams> layers;
    ReadoutParams readout;

    /// Random initialization: square roots 1 + N(0, 0.1²), rotations N(0, 0.1²),
    /// readout N(0, 1/features), zero bias.
    static Model random(std::size_t n, const ScaleSet& scales, std::size_t layers, std::size_t classes,
                        std::uint64_t seed, double init_eps = kDefaultInitEps);

    std::size_t param_count() const;
    std::vector<double> flatten() const;
    void assign(std::span<const double> flat);

    friend bool operator==(const Model&, const Model&) = default;
};

/// Per-layer 2|J| + 2 + 3n(n-1)/2, plus classes·n(n+1)/2 + classes for the readout.
std::size_t param_count(std::size_t n, std::size_t scales, std::size_t layers, std::size_t classes);

/// Output sequence of the last layer.
std::vector<SymPosDef> model_outputs(std::span<const SymPosDef> xs, const Model& m);

std::vector<double> model_forward(std::span<const SymPosDef> xs, const Model& m);

/// Cholesky-chart vector (diagonal first) of the output factor.
std::vector<double> readout_features(const DenseMatrix& out_factor);

inline constexpr char kCheckpointMagic[8] = {'S', 'P', 'D', 'S', 'R', 'U', 'C', 'K'};
inline constexpr std::uint64_t kCheckpointVersion = 1;

/// Layout (all little-endian): magic[8]; u64 version, n, |J|, layers;
/// f64 α × |J|; f64 init_eps; per layer f64 × count() in pack order;
/// u64 classes; f64 weight (row-major); f64 bias.
void save_checkpoint(std::ostream& os, const Model& m);
Model load_checkpoint(std::istream& is);
void save_checkpoint(const std::string& path, const Model& m);
Model load_checkpoint(const std::string& path);

}  // namespace spdsru
