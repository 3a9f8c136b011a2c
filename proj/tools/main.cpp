#include <Eigen/Core>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lpvmpc/bayesopt.hpp"
#include "lpvmpc/csv.hpp"
#include "lpvmpc/experiment.hpp"
#include "lpvmpc/imitation.hpp"
#include "lpvmpc/lpv_model.hpp"
#include "lpvmpc/metrics.hpp"
#include "lpvmpc/mpc.hpp"
#include "lpvmpc/plant.hpp"
#include "lpvmpc/report.hpp"
#include "lpvmpc/trajectory.hpp"

#include "json.hpp"

namespace {

using namespace lpvmpc;

Eigen::VectorXd load_refs(const std::string& path) {
    const csv::Table t = csv::read(path);
    const auto& col = t.column("tref_nm");
    Eigen::VectorXd refs(static_cast<Eigen::Index>(col.size()));
    for (std::size_t i = 0; i < col.size(); ++i) refs[static_cast<Eigen::Index>(i)] = col[i];
    return refs;
}

void write_refs(const std::string& path, const Eigen::VectorXd& refs) {
    csv::Table t;
    t.names = {"cycle", "tref_nm"};
    t.cols.resize(2);
    for (Eigen::Index k = 0; k < refs.size(); ++k) {
        t.cols[0].push_back(static_cast<double>(k));
        t.cols[1].push_back(refs[k]);
    }
    csv::write(path, t);
}

ClosedLoopLog run_loop(CycleController& ctl, const Eigen::VectorXd& refs, double speed) {
    SurrogatePlant plant;
    const Eigen::Vector3d u0 = feedforward_baseline_clamped(refs[0], speed, plant);
    return closed_loop(plant, ctl, refs, Eigen::VectorXd::Constant(refs.size(), speed),
                       plant_steady_state(plant, u0, speed));
}

int cmd_simulate_plant(const std::string& inputs_path, long long random_cycles,
                       std::uint64_t seed, double speed, const std::string& out) {
    SurrogatePlant plant;
    Eigen::MatrixXd u;
    Eigen::VectorXd speeds;
    if (!inputs_path.empty()) {
        const csv::Table t = csv::read(inputs_path);
        const auto& fq = t.column("fq_mg");
        const auto n = static_cast<Eigen::Index>(fq.size());
        u.resize(n, 3);
        speeds.resize(n);
        const auto& soi = t.column("soi_cad");
        const auto& vgt = t.column("vgt_pct");
        const auto& spd = t.column("speed_rpm");
        for (Eigen::Index k = 0; k < n; ++k) {
            u(k, 0) = fq[static_cast<std::size_t>(k)];
            u(k, 1) = soi[static_cast<std::size_t>(k)];
            u(k, 2) = vgt[static_cast<std::size_t>(k)];
            speeds[k] = spd[static_cast<std::size_t>(k)];
        }
    } else {
        u = random_excitation(random_cycles, BoundSet{}, 20, 60, seed);
        speeds = Eigen::VectorXd::Constant(random_cycles, speed);
    }
    save_trajectory(out, plant.simulate(u, speeds));
    std::cout << "wrote " << out << " (" << u.rows() << " cycles)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kernel-LPV engine identification, constrained MPC and imitation control"};
    app.require_subcommand(1);

    // --- simulate-plant -------------------------------------------------------
    auto* sim = app.add_subcommand("simulate-plant",
                                   "Run the surrogate engine over an input profile");
    std::string sim_inputs, sim_out = "trajectory.csv";
    long long sim_random = 0;
    std::uint64_t sim_seed = 1;
    double sim_speed = 1500.0;
    sim->add_option("--inputs", sim_inputs,
                    "input CSV (cycle,fq_mg,soi_cad,vgt_pct,speed_rpm)");
    sim->add_option("--random-inputs", sim_random, "generate N cycles of random excitation");
    sim->add_option("--seed", sim_seed, "excitation seed");
    sim->add_option("--speed", sim_speed, "engine speed for generated excitation [rpm]");
    sim->add_option("--out", sim_out, "output trajectory CSV")->required();

    // --- identify ---------------------------------------------------------------
    auto* ident = app.add_subcommand("identify", "Fit the kernel LPV model (and optionally the "
                                                 "linear baseline) from a trajectory");
    std::string id_data, id_out = "model.json", id_arx, id_hyper;
    double id_fraction = 0.8, id_sigma = 0.3, id_gamma = 1e4;
    std::vector<std::string> id_schedule{"fq_mg", "soi_cad"};
    ident->add_option("--data", id_data, "trajectory CSV")->required();
    ident->add_option("--train-fraction", id_fraction, "contiguous prefix used for fitting");
    ident->add_option("--sigma", id_sigma, "kernel width");
    ident->add_option("--gamma", id_gamma, "regularization weight (shared)");
    ident->add_option("--hyper", id_hyper, "tuned hyperparameter JSON from `tune`");
    ident->add_option("--schedule", id_schedule, "scheduling channels");
    ident->add_option("--out", id_out, "model output JSON");
    ident->add_option("--arx", id_arx, "also fit the least-squares linear baseline to this file");

    // --- tune ---------------------------------------------------------------------
    auto* tune = app.add_subcommand("tune", "Bayesian search of (sigma, gamma)");
    std::string tu_data, tu_out = "hyper.json", tu_history = "tune_history.csv";
    double tu_fraction = 0.8;
    int tu_budget = 60;
    std::uint64_t tu_seed = 0;
    bool tu_per_dim = false;
    tune->add_option("--data", tu_data, "trajectory CSV")->required();
    tune->add_option("--train-fraction", tu_fraction, "train/validation split");
    tune->add_option("--budget", tu_budget, "objective evaluations");
    tune->add_option("--seed", tu_seed, "search seed");
    tune->add_flag("--per-dim-gamma", tu_per_dim, "tune one gamma per state dimension");
    tune->add_option("--out", tu_out, "best hyperparameters JSON");
    tune->add_option("--history", tu_history, "history CSV (iter,log_sigma,log_gamma...,J,best_J)");

    // --- run-mpc ---------------------------------------------------------------------
    auto* mpc = app.add_subcommand("run-mpc", "Closed-loop run of a controller on the surrogate");
    std::string mp_model, mp_arx, mp_config, mp_refs, mp_out = "log.csv";
    bool mp_benchmark = false;
    double mp_speed = 1500.0;
    long long mp_random_refs = 0;
    std::uint64_t mp_seed = 11;
    mpc->add_option("--model", mp_model, "LPV model JSON (LPV-MPC)");
    mpc->add_option("--arx", mp_arx, "fitted linear model JSON (linear MPC)");
    mpc->add_flag("--benchmark", mp_benchmark, "run the feedforward production baseline");
    mpc->add_option("--config", mp_config, "MPC config JSON (weights, horizons, bounds)");
    mpc->add_option("--refs", mp_refs, "reference CSV (cycle,tref_nm)");
    mpc->add_option("--random-refs", mp_random_refs, "generate N cycles of random torque targets");
    mpc->add_option("--seed", mp_seed, "reference seed");
    mpc->add_option("--speed", mp_speed, "engine speed [rpm]");
    mpc->add_option("--out", mp_out, "closed-loop log CSV");

    // --- collect-imitation-data ----------------------------------------------------
    auto* coll = app.add_subcommand("collect-imitation-data",
                                    "Run the LPV-MPC over mixed speeds and record features/targets");
    std::string co_model, co_config, co_out = "imitation_data.csv";
    long long co_cycles = 2000;
    std::vector<double> co_speeds{1500.0, 1350.0, 1200.0};
    std::uint64_t co_seed = 7;
    coll->add_option("--model", co_model, "LPV model JSON")->required();
    coll->add_option("--config", co_config, "MPC config JSON");
    coll->add_option("--cycles", co_cycles, "total cycles");
    coll->add_option("--speeds", co_speeds, "speed levels [rpm]");
    coll->add_option("--seed", co_seed, "profile seed");
    coll->add_option("--out", co_out, "dataset CSV");

    // --- train-imitation ---------------------------------------------------------------
    auto* trn = app.add_subcommand("train-imitation", "Behavioral cloning of the recorded MPC");
    std::string tr_data, tr_out = "imitation_net.json", tr_curves = "imitation_curves.csv";
    TrainConfig tr_cfg;
    trn->add_option("--data", tr_data, "dataset CSV from collect-imitation-data")->required();
    trn->add_option("--epochs", tr_cfg.epochs, "training epochs");
    trn->add_option("--minibatch", tr_cfg.minibatch, "windows per optimizer step");
    trn->add_option("--learning-rate", tr_cfg.learning_rate, "initial learning rate");
    trn->add_option("--l2", tr_cfg.l2, "L2 penalty coefficient");
    trn->add_option("--tbptt", tr_cfg.tbptt_len, "truncated backprop window length");
    trn->add_option("--stride", tr_cfg.window_stride, "window stride");
    trn->add_option("--seed", tr_cfg.seed, "init/shuffle seed");
    trn->add_option("--out", tr_out, "network JSON");
    trn->add_option("--curves", tr_curves, "per-epoch NRMSE curves CSV");

    // --- run-imitation ---------------------------------------------------------------
    auto* imit = app.add_subcommand("run-imitation", "Closed-loop run of the imitation controller");
    std::string im_net, im_refs, im_out = "imit_log.csv";
    double im_speed = 1500.0;
    long long im_random_refs = 0;
    std::uint64_t im_seed = 11;
    imit->add_option("--net", im_net, "network JSON")->required();
    imit->add_option("--refs", im_refs, "reference CSV (cycle,tref_nm)");
    imit->add_option("--random-refs", im_random_refs, "generate N cycles of random torque targets");
    imit->add_option("--seed", im_seed, "reference seed");
    imit->add_option("--speed", im_speed, "engine speed [rpm]");
    imit->add_option("--out", im_out, "closed-loop log CSV");

    // --- evaluate ----------------------------------------------------------------------
    auto* eval = app.add_subcommand("evaluate", "Comparative report against a benchmark log");
    std::string ev_bench, ev_out = "report.json";
    std::vector<std::string> ev_logs;  // name=path
    double ev_bound = 500.0;
    eval->add_option("--benchmark", ev_bench, "benchmark log CSV")->required();
    eval->add_option("--log", ev_logs, "controller log as name=path (repeatable)")->required();
    eval->add_option("--nox-bound", ev_bound, "NOx bound for violation counting [ppm]");
    eval->add_option("--out", ev_out, "report JSON");

    // --- run-experiment ------------------------------------------------------------------
    auto* exp = app.add_subcommand("run-experiment", "Full cached pipeline from a recipe");
    std::string ex_recipe, ex_dir = "artifacts", ex_write_default;
    exp->add_option("--recipe", ex_recipe, "recipe JSON (defaults used when omitted)");
    exp->add_option("--out-dir", ex_dir, "artifacts directory");
    exp->add_option("--write-default-recipe", ex_write_default,
                    "write the default recipe to this path and exit");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            if (sim_inputs.empty() && sim_random <= 0)
                throw std::runtime_error("simulate-plant: need --inputs or --random-inputs");
            return cmd_simulate_plant(sim_inputs, sim_random, sim_seed, sim_speed, sim_out);
        }

        if (ident->parsed()) {
            const Trajectory data = load_trajectory(id_data);
            const auto [train, val] = split(data, id_fraction);
            KernelConfig kc;
            kc.sigma = id_sigma;
            kc.gamma = Eigen::Vector3d::Constant(id_gamma);
            if (!id_hyper.empty()) {
                std::ifstream in(id_hyper);
                if (!in) throw std::runtime_error("cannot open '" + id_hyper + "'");
                const nlohmann::json j = nlohmann::json::parse(in);
                kc.sigma = j.at("sigma").get<double>();
                const auto g = j.at("gamma").get<std::vector<double>>();
                kc.gamma.resize(static_cast<Eigen::Index>(g.size()));
                for (std::size_t i = 0; i < g.size(); ++i)
                    kc.gamma[static_cast<Eigen::Index>(i)] = g[i];
            }
            ScheduleConfig sc;
            sc.channels = id_schedule;
            FitDiagnostics diag;
            const LpvModel model = fit_engine_model(train, sc, kc, &diag);
            save_model(id_out, model);
            std::cout << "fit " << model.sample_count() << " transitions, identity residual "
                      << diag.identity_rel_err << "\n";
            const Eigen::MatrixXd pred = predict_engine_one_step(model, val);
            const Eigen::MatrixXd meas = val.states().bottomRows(val.size() - 1);
            const char* names[3] = {"tout", "pman", "nox"};
            for (int c = 0; c < 3; ++c)
                std::cout << "  one-step NRMSE " << names[c] << ": "
                          << nrmse(pred.col(c), meas.col(c)) << " %\n";
            if (!id_arx.empty()) save_arx(id_arx, fit_engine_arx(train));
            return 0;
        }

        if (tune->parsed()) {
            const Trajectory data = load_trajectory(tu_data);
            BayesOptSettings settings;
            settings.budget = tu_budget;
            settings.seed = tu_seed;
            const TuneResult res = tune_hyperparameters(data, tu_fraction, ScheduleConfig{},
                                                        !tu_per_dim, settings);
            save_history(tu_history, res.bounds, res.history);
            nlohmann::json j{{"sigma", res.best.sigma},
                             {"gamma", std::vector<double>(res.best.gamma.data(),
                                                           res.best.gamma.data() +
                                                               res.best.gamma.size())},
                             {"best_J", res.history.best_value()}};
            std::ofstream out(tu_out);
            out << j.dump(1, '\t') << '\n';
            std::cout << "best J = " << res.history.best_value() << " at sigma = "
                      << res.best.sigma << ", gamma = " << res.best.gamma.transpose() << "\n";
            return 0;
        }

        if (mpc->parsed()) {
            const int modes = (!mp_model.empty()) + (!mp_arx.empty()) + (mp_benchmark ? 1 : 0);
            if (modes != 1)
                throw std::runtime_error("run-mpc: pick exactly one of --model/--arx/--benchmark");
            Eigen::VectorXd refs;
            if (!mp_refs.empty())
                refs = load_refs(mp_refs);
            else if (mp_random_refs > 0)
                refs = random_step_profile(mp_random_refs, 50.0, 350.0, 50, 200, mp_seed);
            else
                throw std::runtime_error("run-mpc: need --refs or --random-refs");
            const MpcConfig cfg = mp_config.empty() ? MpcConfig{} : load_mpc_config(mp_config);

            ClosedLoopLog log;
            if (mp_benchmark) {
                BenchmarkCycleController ctl(SurrogatePlant{});
                log = run_loop(ctl, refs, mp_speed);
            } else if (!mp_arx.empty()) {
                const FittedArx arx = load_arx(mp_arx);
                const Eigen::Vector3d u0 = feedforward_baseline_clamped(refs[0], mp_speed);
                MpcCycleController ctl(MpcController(
                    std::make_shared<FixedControlModel>(arx.lti, arx.x_scaler, arx.u_scaler), cfg,
                    u0));
                log = run_loop(ctl, refs, mp_speed);
            } else {
                const Eigen::Vector3d u0 = feedforward_baseline_clamped(refs[0], mp_speed);
                MpcCycleController ctl(
                    MpcController(std::make_shared<LpvControlModel>(load_model(mp_model)), cfg, u0));
                log = run_loop(ctl, refs, mp_speed);
            }
            save_log(mp_out, log);
            std::cout << "wrote " << mp_out << " (" << log.size() << " cycles)\n";
            return 0;
        }

        if (coll->parsed()) {
            const LpvModel model = load_model(co_model);
            const MpcConfig cfg = co_config.empty() ? MpcConfig{} : load_mpc_config(co_config);
            const Eigen::VectorXd refs =
                random_step_profile(co_cycles, 50.0, 350.0, 50, 200, co_seed);
            const Eigen::VectorXd speeds =
                random_speed_profile(co_cycles, co_speeds, 200, 400, co_seed ^ 0xABCD);
            SurrogatePlant plant;
            const Eigen::Vector3d u0 = feedforward_baseline_clamped(refs[0], speeds[0], plant);
            MpcCycleController ctl(
                MpcController(std::make_shared<LpvControlModel>(model), cfg, u0));
            const ClosedLoopLog log = closed_loop(plant, ctl, refs, speeds,
                                                  plant_steady_state(plant, u0, speeds[0]));
            save_dataset(co_out, collect_dataset({log}, cfg.bounds));
            std::cout << "wrote " << co_out << "\n";
            return 0;
        }

        if (trn->parsed()) {
            const ImitationDataset ds = load_dataset(tr_data);
            const TrainedImitation trained = train_imitation(ds, tr_cfg);
            save_network(tr_out, trained);
            csv::Table curves;
            curves.names = {"epoch",          "lr",             "train_loss",
                            "train_nrmse_fq", "train_nrmse_soi", "train_nrmse_vgt",
                            "val_nrmse_fq",   "val_nrmse_soi",   "val_nrmse_vgt"};
            curves.cols.resize(curves.names.size());
            for (std::size_t e = 0; e < trained.curves.epoch.size(); ++e) {
                curves.cols[0].push_back(trained.curves.epoch[e]);
                curves.cols[1].push_back(trained.curves.learning_rate[e]);
                curves.cols[2].push_back(trained.curves.train_loss[e]);
                for (int c = 0; c < 3; ++c) {
                    curves.cols[3 + c].push_back(trained.curves.train_nrmse[e][c]);
                    curves.cols[6 + c].push_back(trained.curves.val_nrmse[e][c]);
                }
            }
            csv::write(tr_curves, curves);
            if (!trained.curves.val_nrmse.empty()) {
                const Eigen::Vector3d v = trained.curves.val_nrmse.back();
                std::cout << "validation NRMSE: FQ " << v[0] << " %, SOI " << v[1] << " %, VGT "
                          << v[2] << " %\n";
            }
            return 0;
        }

        if (imit->parsed()) {
            Eigen::VectorXd refs;
            if (!im_refs.empty())
                refs = load_refs(im_refs);
            else if (im_random_refs > 0)
                refs = random_step_profile(im_random_refs, 50.0, 350.0, 50, 200, im_seed);
            else
                throw std::runtime_error("run-imitation: need --refs or --random-refs");
            ImitationController ctl(load_network(im_net));
            const ClosedLoopLog log = run_loop(ctl, refs, im_speed);
            save_log(im_out, log);
            std::cout << "wrote " << im_out << " (" << log.size() << " cycles)\n";
            return 0;
        }

        if (eval->parsed()) {
            const ClosedLoopLog bench = load_log(ev_bench);
            std::vector<std::string> names;
            std::vector<ClosedLoopLog> logs;
            for (const auto& spec : ev_logs) {
                const auto at = spec.find('=');
                if (at == std::string::npos)
                    throw std::runtime_error("evaluate: --log expects name=path");
                names.push_back(spec.substr(0, at));
                logs.push_back(load_log(spec.substr(at + 1)));
            }
            std::vector<const ClosedLoopLog*> ptrs;
            for (const auto& l : logs) ptrs.push_back(&l);
            const ImprovementReport rep = compute_report(bench, names, ptrs, ev_bound);
            save_report(ev_out, rep);
            for (const auto& r : rep.rows)
                std::cout << r.name << ": NOx " << r.nox_change_pct << " %, fuel "
                          << r.fuel_change_pct << " %, load error " << r.load_error_pct
                          << " %, step " << r.mean_step_ms << " ms, violations "
                          << r.violation_cycles << "\n";
            return 0;
        }

        if (exp->parsed()) {
            if (!ex_write_default.empty()) {
                save_recipe(ex_write_default, ExperimentRecipe{});
                std::cout << "wrote " << ex_write_default << "\n";
                return 0;
            }
            const ExperimentRecipe recipe =
                ex_recipe.empty() ? ExperimentRecipe{} : load_recipe(ex_recipe);
            const auto results = run_experiment(recipe, ex_dir);
            for (const auto& s : results)
                std::cout << s.name << (s.cache_hit ? " (cached)" : " (ran)") << "\n";
            std::cout << "artifacts in " << ex_dir << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
