#pragma once

// Losses, gradients and the optimization loop for SPD-SRU models.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "spdsru/autodiff.hpp"
#include "spdsru/dataset.hpp"
#include "spdsru/sru.hpp"

namespace spdsru {

enum class Objective {
    Classification,  // softmax cross-entropy of the readout logits
    NextStep,        // mean over t < T of d²(O_t, X_{t+1})
};

enum class OptimizerKind { Sgd, Adam };

struct TrainConfig {
    std::size_t layers = 1;
    ScaleSet scales = ScaleSet::default_set();
    double init_eps = kDefaultInitEps;
    std::size_t epochs = 30;
    std::size_t batch = 16;
    double lr = 0.05;
    double momentum = 0.9;
    double clip = 5.0;  // global gradient norm; <= 0 disables
    std::uint64_t seed = 1;
    OptimizerKind optimizer = OptimizerKind::Sgd;
    Objective objective = Objective::Classification;
};

/// Flat key=value text; '#' starts a comment. Keys: layers, scales (comma
/// list), init_eps, epochs, batch, lr, momentum, clip, seed, optimizer
/// (sgd|adam). Unknown keys and malformed values raise FormatError.
TrainConfig parse_config(std::istream& is);
TrainConfig load_config(const std::string& path);

/// Loss of one sequence through the plain forward pass.
double sequence_loss(const Model& m, std::span<const SymPosDef> xs, std::size_t label, Objective obj);

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;    // in Model::flatten order
    std::vector<double> logits;  // empty for NextStep
    ad::TapeStats stats;
};

/// Records the model on a tape, sweeps it backwards and returns the gradient
/// with respect to every unconstrained parameter.
LossGrad loss_and_grad(const Model& m, std::span<const SymPosDef> xs, std::size_t label, Objective obj);

struct GradReport {
    std::vector<double> analytic;
    std::vector<double> numeric;  // central differences on sequence_loss
    /// ‖g_a - g_fd‖ / max(‖g_a‖, ‖g_fd‖, 1e-12) over the whole vector.
    double relative_error = 0.0;
    /// Largest of the same ratio taken block by block (each weight vector,
    /// rotation generator, readout weight and bias).
    double max_block_relative_error = 0.0;
    ad::TapeStats stats;
};

GradReport finite_diff_check(const Model& m, std::span<const SymPosDef> xs, std::size_t label,
                             Objective obj = Objective::Classification, double step = 1e-5);

std::size_t predict(const Model& m, std::span<const SymPosDef> xs);
double accuracy(const Model& m, const SpdSequenceDataset& d);

struct EpochLog {
    std::size_t epoch = 0;
    double loss = 0.0;       // mean per-sequence loss seen during the epoch
    double train_acc = 0.0;  // predictions made during the epoch; NaN for NextStep
    double test_acc = 0.0;   // NaN without a test set
    double wall_seconds = 0.0;
};

struct FitResult {
    Model model;
    std::vector<EpochLog> log;
    std::size_t lr_halvings = 0;
};

/// Raised when the loss turns non-finite; `partial` holds the last good model.
class TrainingDiverged : public Diverged {
public:
    TrainingDiverged(const std::string& what, FitResult partial) : Diverged(what), partial(std::move(partial)) {}
    FitResult partial;
};

/// Mini-batch training, deterministic given config.seed. A forward failure
/// (NotPositiveDefinite, NoConvergence) reverts the last update, halves the
/// learning rate and resets the optimizer state.
FitResult fit(Model init, const SpdSequenceDataset& train, const SpdSequenceDataset* test, const TrainConfig& cfg);

/// CSV with header epoch,loss,train_acc,test_acc,wall_seconds.
void write_log_csv(std::ostream& os, std::span<const EpochLog> log);

}  // namespace spdsru
