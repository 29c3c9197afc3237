// Command-line front end: data generation, training, evaluation and the
// group-comparison tests.

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>

#include "spdsru/errors.hpp"
#include "spdsru/experiments.hpp"
#include "spdsru/frechet.hpp"

using namespace spdsru;

namespace {

TrainConfig config_or_default(const std::string& path) {
    return path.empty() ? TrainConfig{} : load_config(path);
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    return os;
}

// exp of a symmetric Gaussian matrix: SPD draws spread around the identity.
std::vector<SymPosDef> random_draws(std::size_t n, std::size_t count, double spread, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, spread);
    std::vector<SymPosDef> xs;
    for (std::size_t k = 0; k < count; ++k) {
        DenseMatrix z(n, n);
        for (double& v : z.values()) v = nd(rng);
        xs.push_back(SymPosDef::from_computed(sym_function(symmetrized(z), [](double x) { return std::exp(x); })));
    }
    return xs;
}

int cmd_gen(const RotatingSpec& spec, const std::string& out) {
    const SpdSequenceDataset d = gen_rotating_spd(spec);
    save_dataset(out, d);
    std::cout << "wrote " << d.size() << " sequences to " << out << " (" << d.generator << " seed=" << d.seed << ")\n";
    return 0;
}

int cmd_train(const std::string& data, const std::string& config, const std::string& test_path,
              const std::string& ckpt_out, const std::string& log_path, std::size_t folds) {
    const TrainConfig cfg = config_or_default(config);
    const SpdSequenceDataset train = load_dataset(data);
    if (folds > 0) {
        const ClassificationReport r = run_classification(train, cfg, folds);
        write_report(std::cout, r);
        return 0;
    }
    SpdSequenceDataset test;
    if (!test_path.empty()) test = load_dataset(test_path);
    const Model init = Model::random(train.n, cfg.scales, cfg.layers, train.classes, cfg.seed, cfg.init_eps);
    std::cout << "param_count " << init.param_count() << '\n';

    const auto write_outputs = [&](const FitResult& r) {
        if (!log_path.empty()) {
            auto os = open_out(log_path);
            write_log_csv(os, r.log);
        }
        if (!ckpt_out.empty()) save_checkpoint(ckpt_out, r.model);
    };
    try {
        const FitResult r = fit(init, train, test_path.empty() ? nullptr : &test, cfg);
        write_outputs(r);
        if (!r.log.empty()) {
            const EpochLog& last = r.log.back();
            std::cout << "epoch " << last.epoch << " loss " << last.loss << " train_acc " << last.train_acc;
            if (!test_path.empty()) std::cout << " test_acc " << last.test_acc;
            std::cout << '\n';
        }
        if (r.lr_halvings > 0) std::cout << "learning rate halved " << r.lr_halvings << " times\n";
    } catch (const TrainingDiverged& e) {
        write_outputs(e.partial);
        throw;
    }
    return 0;
}

int cmd_eval(const std::string& data, const std::string& ckpt) {
    const SpdSequenceDataset d = load_dataset(data);
    const Model m = load_checkpoint(ckpt);
    if (m.n != d.n) throw ArchitectureMismatch("checkpoint dimension differs from dataset");
    double loss = 0.0;
    for (const auto& item : d.items) loss += sequence_loss(m, item.xs, item.label, Objective::Classification);
    std::cout << std::setprecision(6) << "accuracy " << accuracy(m, d) << "\nloss "
              << loss / static_cast<double>(std::max<std::size_t>(1, d.size())) << '\n';
    return 0;
}

int cmd_fmbench(const std::string& data, std::size_t dim, std::size_t samples, std::size_t shuffles,
                std::uint64_t seed, const std::string& out) {
    std::vector<SymPosDef> xs;
    if (!data.empty()) {
        for (const auto& item : load_dataset(data).items) xs.insert(xs.end(), item.xs.begin(), item.xs.end());
        if (samples > 0 && samples < xs.size()) xs.resize(samples);
    } else {
        xs = random_draws(dim, samples, 0.5, seed);
    }
    const FmDiagnostics diag = consistency_report(xs, shuffles, seed);
    if (out.empty()) {
        write_csv(std::cout, diag);
    } else {
        auto os = open_out(out);
        write_csv(os, diag);
    }
    return 0;
}

int cmd_permtest(const std::string& ga, const std::string& gb, std::size_t perms, std::uint64_t seed,
                 const std::string& baseline, const std::string& config, const std::string& distance,
                 std::size_t threads, const std::string& out) {
    const SpdSequenceDataset a = load_dataset(ga), b = load_dataset(gb);
    PermTestResult r;
    if (baseline == "cramer") {
        r = cramer_baseline(a, b, perms, seed);
    } else {
        PermTestConfig cfg;
        cfg.train = config_or_default(config);
        cfg.seed = seed;
        cfg.threads = threads;
        cfg.distance = distance == "param" ? ModelDistanceKind::ParameterL2 : ModelDistanceKind::OutputRms;
        r = permutation_test(a, b, perms, cfg);
    }
    std::cout << std::setprecision(8) << "observed " << r.observed << "\npermutations " << r.permutations
              << "\np_value " << r.p_value << '\n';
    if (!out.empty()) {
        auto os = open_out(out);
        os << "permutation,statistic\n" << std::setprecision(17);
        for (std::size_t i = 0; i < r.null_stats.size(); ++i) os << i << ',' << r.null_stats[i] << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stein-metric recurrent models for SPD sequences"};
    app.require_subcommand(1);

    RotatingSpec spec;
    std::string gen_out;
    bool fixed_phase = false;
    auto* gen = app.add_subcommand("gen", "generate a rotating-covariance dataset");
    gen->add_option("--classes", spec.classes)->check(CLI::PositiveNumber);
    gen->add_option("--per-class", spec.per_class)->check(CLI::PositiveNumber);
    gen->add_option("--dim", spec.n)->check(CLI::PositiveNumber);
    gen->add_option("--len", spec.length)->check(CLI::PositiveNumber);
    gen->add_option("--rates", spec.rates_deg, "degrees per step, one per class")->delimiter(',')->required();
    gen->add_option("--noise", spec.noise);
    gen->add_option("--seed", spec.seed);
    gen->add_flag("--fixed-phase", fixed_phase, "start every sequence at angle 0");
    gen->add_option("--out", gen_out)->required();

    std::string data, config, test_path, ckpt_out, log_path;
    std::size_t folds = 0;
    auto* train = app.add_subcommand("train", "train a classifier");
    train->add_option("--data", data)->required()->check(CLI::ExistingFile);
    train->add_option("--config", config)->check(CLI::ExistingFile);
    train->add_option("--test", test_path, "held-out dataset for test_acc")->check(CLI::ExistingFile);
    train->add_option("--ckpt-out", ckpt_out);
    train->add_option("--log", log_path);
    train->add_option("--folds", folds, "run k-fold cross-validation instead");

    std::string ckpt;
    auto* eval = app.add_subcommand("eval", "accuracy of a checkpoint on a dataset");
    eval->add_option("--data", data)->required()->check(CLI::ExistingFile);
    eval->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);

    std::size_t dim = 3, samples = 200, shuffles = 50;
    std::uint64_t seed = 1;
    std::string out;
    auto* fmbench = app.add_subcommand("fmbench", "recursive Fréchet-mean consistency report as CSV");
    fmbench->add_option("--data", data, "use the matrices of a dataset instead of random draws")
        ->check(CLI::ExistingFile);
    fmbench->add_option("--dim", dim)->check(CLI::PositiveNumber);
    fmbench->add_option("--samples", samples);
    fmbench->add_option("--shuffles", shuffles)->check(CLI::PositiveNumber);
    fmbench->add_option("--seed", seed);
    fmbench->add_option("--out", out);

    std::string group_a, group_b, baseline = "model", distance = "output";
    std::size_t perms = 499, threads = 0;
    auto* perm = app.add_subcommand("permtest", "two-group permutation test");
    perm->add_option("--group-a", group_a)->required()->check(CLI::ExistingFile);
    perm->add_option("--group-b", group_b)->required()->check(CLI::ExistingFile);
    perm->add_option("--perms", perms);
    perm->add_option("--seed", seed);
    perm->add_option("--baseline", baseline)->check(CLI::IsMember({"model", "cramer"}));
    perm->add_option("--config", config, "training config for the group models")->check(CLI::ExistingFile);
    perm->add_option("--distance", distance)->check(CLI::IsMember({"output", "param"}));
    perm->add_option("--threads", threads);
    perm->add_option("--out", out, "CSV of null statistics");

    std::size_t layers = 1, classes = 2;
    std::size_t scale_count = TrainConfig{}.scales.size();
    auto* params = app.add_subcommand("params", "print the trainable parameter count");
    params->add_option("--dim", dim)->check(CLI::PositiveNumber);
    params->add_option("--scales", scale_count)->check(CLI::PositiveNumber);
    params->add_option("--layers", layers);
    params->add_option("--classes", classes);
    params->add_option("--config", config, "take layers and scales from a config")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*gen) {
            spec.random_phase = !fixed_phase;
            return cmd_gen(spec, gen_out);
        }
        if (*train) return cmd_train(data, config, test_path, ckpt_out, log_path, folds);
        if (*eval) return cmd_eval(data, ckpt);
        if (*fmbench) return cmd_fmbench(data, dim, samples, shuffles, seed, out);
        if (*perm) return cmd_permtest(group_a, group_b, perms, seed, baseline, config, distance, threads, out);
        if (*params) {
            if (!config.empty()) {
                const TrainConfig cfg = load_config(config);
                layers = cfg.layers;
                scale_count = cfg.scales.size();
            }
            std::cout << param_count(dim, scale_count, layers, classes) << '\n';
            return 0;
        }
    } catch (const Diverged& e) {
        std::cerr << "diverged: " << e.what() << '\n';
        return 2;
    } catch (const NoConvergence& e) {
        std::cerr << "no convergence: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
