#pragma once

// Synthetic rotating-covariance sequences, the cross-validated
// classification harness and the permutation tests comparing two groups.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "spdsru/dataset.hpp"
#include "spdsru/training.hpp"

namespace spdsru {

struct RotatingSpec {
    std::size_t classes = 2;
    std::size_t per_class = 100;
    std::size_t n = 3;
    std::size_t length = 20;
    std::vector<double> rates_deg;  // one per class, degrees per step
    double noise = 0.1;
    std::uint64_t seed = 1;
    // Uniform initial angle in [0°, 180°) per sequence, so only the rate
    // identifies the class; off means every sequence starts at 0°.
    bool random_phase = true;
};

/// Class c: X_t = E_t R(φ + rate_c·t) B R(φ + rate_c·t)ᵀ E_tᵀ with a seed-fixed
/// anisotropic B, R a rotation in the plane of the first two coordinates and
/// E_t = exp(noise·Z_t) for Gaussian Z_t (E_t = I when noise is 0).
SpdSequenceDataset gen_rotating_spd(const RotatingSpec& spec);

/// Runs fn(0) … fn(count-1) on up to `threads` workers (0 = hardware
/// concurrency). Callers store results by index, so the outcome does not
/// depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn, std::size_t threads = 0);

struct ClassificationReport {
    std::vector<double> test_acc;   // per fold
    std::vector<double> train_acc;  // per fold, after training
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation across folds
    std::size_t param_count = 0;
};

/// Stratified assignment of items to folds: each class is shuffled with
/// `seed` and dealt round-robin. Every item lands in exactly one fold.
std::vector<std::size_t> stratified_folds(const SpdSequenceDataset& d, std::size_t folds, std::uint64_t seed);

/// k-fold cross-validation; every fold trains a fresh model from cfg.seed.
ClassificationReport run_classification(const SpdSequenceDataset& d, const TrainConfig& cfg, std::size_t folds,
                                        std::size_t threads = 0);

void write_report(std::ostream& os, const ClassificationReport& r);

enum class ModelDistanceKind {
    OutputRms,       // RMS over probes and steps of the Stein distance between outputs
    ParameterL2,     // Euclidean distance of the flattened parameters
};

double model_distance(const Model& a, const Model& b, const SpdSequenceDataset& probes,
                      ModelDistanceKind kind = ModelDistanceKind::OutputRms);

struct PermTestResult {
    double observed = 0.0;
    std::size_t permutations = 0;
    std::vector<double> null_stats;
    double p_value = 1.0;  // (1 + #{null >= observed}) / (1 + permutations)
};

struct PermTestConfig {
    TrainConfig train;  // objective is forced to NextStep
    std::uint64_t seed = 1;
    ModelDistanceKind distance = ModelDistanceKind::OutputRms;
    std::size_t threads = 0;
};

/// Trains one model per group (same initialization, next-step loss), takes
/// the model distance over the pooled sequences as the statistic, and
/// repeats on random relabelings of the pool.
PermTestResult permutation_test(const SpdSequenceDataset& a, const SpdSequenceDataset& b, std::size_t permutations,
                                const PermTestConfig& cfg);

/// Energy statistic mn/(m+n)·[2/(mn) Σ d(a,b) - 1/m² Σ d(a,a') - 1/n² Σ d(b,b')]
/// over precomputed Stein distances; `in_a` marks group membership.
double energy_statistic(const DenseMatrix& dist, std::span<const bool> in_a);

/// One batch Fréchet mean per sequence, then the energy statistic under
/// random relabelings.
PermTestResult cramer_baseline(const SpdSequenceDataset& a, const SpdSequenceDataset& b, std::size_t permutations,
                               std::uint64_t seed);

}  // namespace spdsru
