#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lpvmpc/lpv_model.hpp"
#include "lpvmpc/trajectory.hpp"

namespace lpvmpc {

/// Per-parameter search interval in log10 space; bounds are positive in
/// linear space by construction.
struct HyperBounds {
    std::vector<std::string> names;
    Eigen::VectorXd low, high;  // log10

    void validate() const;
    Eigen::Index dim() const { return low.size(); }

    /// Defaults: sigma in [1e-3, 1e3]; gamma in [1e-1, 1e6], shared across
    /// state dims or one per dim.
    static HyperBounds defaults(bool shared_gamma, Eigen::Index n_x = 3);
};

struct OptRecord {
    int iteration = 0;
    Eigen::VectorXd point;  // log10 space
    double objective = 0.0;
    double best_so_far = 0.0;
};

struct OptHistory {
    std::vector<OptRecord> records;

    double best_value() const;
    Eigen::VectorXd best_point() const;
};

struct BayesOptSettings {
    int budget = 60;             // total objective evaluations
    std::uint64_t seed = 0;
    double noise = 1e-6;         // GP observation noise (standardized scale)
    double ei_jitter = 0.01;     // exploration offset in the improvement
    int candidates = 1024;       // random acquisition candidates
    int refine_top = 8;          // candidates polished by local search
    double gp_lengthscale = 0.2; // RBF lengthscale on the unit cube
};

/// Gaussian-process guided minimization with expected improvement. The first
/// max(5, budget/10) evaluations are space-filling (Latin hypercube); the
/// remainder maximize EI over random multistart candidates refined by compass
/// search. Fully deterministic for a fixed seed. The objective is evaluated at
/// most `budget` times; non-finite objective values are recorded as +inf and
/// fed to the surrogate as a pessimistic finite stand-in.
std::pair<Eigen::VectorXd, OptHistory> bayesopt_minimize(
    const std::function<double(const Eigen::VectorXd&)>& objective, const HyperBounds& bounds,
    const BayesOptSettings& settings);

/// History CSV: iter,log_sigma,log_gamma...,J,best_J.
void save_history(const std::string& path, const HyperBounds& bounds, const OptHistory& history);

// --- Identification objective --------------------------------------------------

/// Mean squared one-step-ahead prediction error over the validation split and
/// all state dimensions, in scaled coordinates. Returns +inf if the fit fails.
double hyperopt_objective(const Trajectory& train, const Trajectory& val,
                          const ScheduleConfig& schedule, const Eigen::VectorXd& log10_point,
                          bool shared_gamma);

struct TuneResult {
    KernelConfig best;
    OptHistory history;
    HyperBounds bounds;
};

/// Split the trajectory, search (log sigma, log gamma) and return the best
/// kernel configuration.
TuneResult tune_hyperparameters(const Trajectory& data, double train_fraction,
                                const ScheduleConfig& schedule, bool shared_gamma,
                                const BayesOptSettings& settings);

}  // namespace lpvmpc
