#pragma once

#include <string>
#include <vector>

#include "lpvmpc/bayesopt.hpp"
#include "lpvmpc/imitation.hpp"
#include "lpvmpc/lpv_model.hpp"
#include "lpvmpc/mpc.hpp"

namespace lpvmpc {

/// Declarative end-to-end pipeline:
///   simulate -> identify -> tune -> control -> imitate -> report
/// Stage outputs are cached by content hash; a stage reruns only when its
/// configuration or any upstream output changed.
struct ExperimentRecipe {
    std::uint64_t seed = 42;

    // simulate: random actuator excitation through the surrogate plant
    Eigen::Index ident_cycles = 2000;
    double ident_speed = 1500.0;
    int excite_hold_lo = 20, excite_hold_hi = 60;

    // identify: default-hyperparameter fit plus the linear baseline
    double train_fraction = 0.8;
    double default_sigma = 0.3;
    double default_gamma = 1e4;
    ScheduleConfig schedule;

    // tune: Bayesian search of (sigma, gamma); the tuned model replaces the
    // default fit downstream
    bool tune_enabled = true;
    int tune_budget = 60;
    bool shared_gamma = true;

    // control: benchmark / linear MPC / LPV-MPC on identical profiles
    MpcConfig mpc;
    std::vector<double> eval_speeds = {1500.0, 1200.0};
    Eigen::Index eval_cycles = 1000;
    double ref_lo = 50.0, ref_hi = 350.0;
    int ref_hold_lo = 50, ref_hold_hi = 200;

    // imitate: clone the LPV-MPC and rerun the evaluation profiles
    Eigen::Index collect_cycles = 2000;
    std::vector<double> collect_speeds = {1500.0, 1350.0, 1200.0};
    int speed_hold_lo = 200, speed_hold_hi = 400;
    TrainConfig train;
};

ExperimentRecipe load_recipe(const std::string& path);
void save_recipe(const std::string& path, const ExperimentRecipe& recipe);

struct StageResult {
    std::string name;
    bool cache_hit = false;
};

/// Runs the pipeline into out_dir. Throws with the failing stage's name;
/// completed stage outputs are preserved. Returns per-stage cache status.
std::vector<StageResult> run_experiment(const ExperimentRecipe& recipe,
                                        const std::string& out_dir);

/// SHA-256 hex digests (content-addressed cache keys).
std::string sha256_hex(const std::string& data);
std::string sha256_file(const std::string& path);

/// Controller configuration file (weights, horizons, bounds) in JSON.
MpcConfig load_mpc_config(const std::string& path);
void save_mpc_config(const std::string& path, const MpcConfig& cfg);

}  // namespace lpvmpc
