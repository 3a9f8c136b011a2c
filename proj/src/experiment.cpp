#include "lpvmpc/experiment.hpp"

#include <openssl/evp.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "lpvmpc/csv.hpp"
#include "lpvmpc/report.hpp"

namespace lpvmpc {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr))
        throw std::runtime_error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("sha256_file: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

// --- Recipe I/O -----------------------------------------------------------------

namespace {

json mpc_to_json(const MpcConfig& m) {
    return json{{"np", m.np},
                {"nc", m.nc},
                {"weights",
                 {{"t_out", m.weights.t_out},
                  {"nox", m.weights.nox},
                  {"fq", m.weights.fq},
                  {"delta_u", {m.weights.delta_u[0], m.weights.delta_u[1], m.weights.delta_u[2]}},
                  {"slack", m.weights.slack}}},
                {"bounds",
                 {{"nox", {m.bounds.nox_min, m.bounds.nox_max}},
                  {"fq", {m.bounds.fq_min, m.bounds.fq_max}},
                  {"soi", {m.bounds.soi_min, m.bounds.soi_max}},
                  {"vgt", {m.bounds.vgt_min, m.bounds.vgt_max}}}}};
}

MpcConfig mpc_from_json(const json& s, MpcConfig base = {}) {
    MpcConfig r = base;
    r.np = s.value("np", r.np);
    r.nc = s.value("nc", r.nc);
    if (s.contains("weights")) {
        const auto& w = s["weights"];
        r.weights.t_out = w.value("t_out", r.weights.t_out);
        r.weights.nox = w.value("nox", r.weights.nox);
        r.weights.fq = w.value("fq", r.weights.fq);
        if (w.contains("delta_u"))
            for (int i = 0; i < 3; ++i) r.weights.delta_u[i] = w["delta_u"].at(i).get<double>();
        r.weights.slack = w.value("slack", r.weights.slack);
    }
    if (s.contains("bounds")) {
        const auto& b = s["bounds"];
        auto pair = [&](const char* k, double& lo, double& hi) {
            if (b.contains(k)) {
                lo = b[k].at(0).get<double>();
                hi = b[k].at(1).get<double>();
            }
        };
        pair("nox", r.bounds.nox_min, r.bounds.nox_max);
        pair("fq", r.bounds.fq_min, r.bounds.fq_max);
        pair("soi", r.bounds.soi_min, r.bounds.soi_max);
        pair("vgt", r.bounds.vgt_min, r.bounds.vgt_max);
    }
    return r;
}

json recipe_to_json(const ExperimentRecipe& r) {
    json control = mpc_to_json(r.mpc);
    control["speeds"] = r.eval_speeds;
    control["cycles"] = r.eval_cycles;
    control["ref_range"] = {r.ref_lo, r.ref_hi};
    control["ref_hold"] = {r.ref_hold_lo, r.ref_hold_hi};
    return json{
        {"schema_version", 1},
        {"seed", r.seed},
        {"simulate",
         {{"cycles", r.ident_cycles},
          {"speed", r.ident_speed},
          {"hold", {r.excite_hold_lo, r.excite_hold_hi}}}},
        {"identify",
         {{"train_fraction", r.train_fraction},
          {"sigma", r.default_sigma},
          {"gamma", r.default_gamma},
          {"schedule", r.schedule.channels}}},
        {"tune",
         {{"enabled", r.tune_enabled},
          {"budget", r.tune_budget},
          {"shared_gamma", r.shared_gamma}}},
        {"control", control},
        {"imitate",
         {{"collect_cycles", r.collect_cycles},
          {"collect_speeds", r.collect_speeds},
          {"speed_hold", {r.speed_hold_lo, r.speed_hold_hi}},
          {"minibatch", r.train.minibatch},
          {"learning_rate", r.train.learning_rate},
          {"lr_drop_period", r.train.lr_drop_period},
          {"lr_drop_factor", r.train.lr_drop_factor},
          {"l2", r.train.l2},
          {"epochs", r.train.epochs},
          {"tbptt_len", r.train.tbptt_len},
          {"window_stride", r.train.window_stride},
          {"train_fraction", r.train.train_fraction}}}};
}

ExperimentRecipe recipe_from_json(const json& j) {
    ExperimentRecipe r;
    r.seed = j.value("seed", r.seed);
    if (j.contains("simulate")) {
        const auto& s = j["simulate"];
        r.ident_cycles = s.value("cycles", r.ident_cycles);
        r.ident_speed = s.value("speed", r.ident_speed);
        if (s.contains("hold")) {
            r.excite_hold_lo = s["hold"].at(0).get<int>();
            r.excite_hold_hi = s["hold"].at(1).get<int>();
        }
    }
    if (j.contains("identify")) {
        const auto& s = j["identify"];
        r.train_fraction = s.value("train_fraction", r.train_fraction);
        r.default_sigma = s.value("sigma", r.default_sigma);
        r.default_gamma = s.value("gamma", r.default_gamma);
        if (s.contains("schedule")) r.schedule.channels = s["schedule"].get<std::vector<std::string>>();
    }
    if (j.contains("tune")) {
        const auto& s = j["tune"];
        r.tune_enabled = s.value("enabled", r.tune_enabled);
        r.tune_budget = s.value("budget", r.tune_budget);
        r.shared_gamma = s.value("shared_gamma", r.shared_gamma);
    }
    if (j.contains("control")) {
        const auto& s = j["control"];
        r.mpc = mpc_from_json(s, r.mpc);
        if (s.contains("speeds")) r.eval_speeds = s["speeds"].get<std::vector<double>>();
        r.eval_cycles = s.value("cycles", r.eval_cycles);
        if (s.contains("ref_range")) {
            r.ref_lo = s["ref_range"].at(0).get<double>();
            r.ref_hi = s["ref_range"].at(1).get<double>();
        }
        if (s.contains("ref_hold")) {
            r.ref_hold_lo = s["ref_hold"].at(0).get<int>();
            r.ref_hold_hi = s["ref_hold"].at(1).get<int>();
        }
    }
    if (j.contains("imitate")) {
        const auto& s = j["imitate"];
        r.collect_cycles = s.value("collect_cycles", r.collect_cycles);
        if (s.contains("collect_speeds"))
            r.collect_speeds = s["collect_speeds"].get<std::vector<double>>();
        if (s.contains("speed_hold")) {
            r.speed_hold_lo = s["speed_hold"].at(0).get<int>();
            r.speed_hold_hi = s["speed_hold"].at(1).get<int>();
        }
        r.train.minibatch = s.value("minibatch", r.train.minibatch);
        r.train.learning_rate = s.value("learning_rate", r.train.learning_rate);
        r.train.lr_drop_period = s.value("lr_drop_period", r.train.lr_drop_period);
        r.train.lr_drop_factor = s.value("lr_drop_factor", r.train.lr_drop_factor);
        r.train.l2 = s.value("l2", r.train.l2);
        r.train.epochs = s.value("epochs", r.train.epochs);
        r.train.tbptt_len = s.value("tbptt_len", r.train.tbptt_len);
        r.train.window_stride = s.value("window_stride", r.train.window_stride);
        r.train.train_fraction = s.value("train_fraction", r.train.train_fraction);
    }
    return r;
}

}  // namespace

ExperimentRecipe load_recipe(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open recipe '" + path + "'");
    return recipe_from_json(json::parse(in));
}

void save_recipe(const std::string& path, const ExperimentRecipe& recipe) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write recipe '" + path + "'");
    out << recipe_to_json(recipe).dump(1, '\t') << '\n';
}

MpcConfig load_mpc_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open mpc config '" + path + "'");
    MpcConfig cfg = mpc_from_json(json::parse(in));
    cfg.validate();
    return cfg;
}

void save_mpc_config(const std::string& path, const MpcConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write mpc config '" + path + "'");
    out << mpc_to_json(cfg).dump(1, '\t') << '\n';
}

// --- Pipeline -------------------------------------------------------------------

namespace {

class StageCache {
public:
    explicit StageCache(const fs::path& dir) : path_(dir / "cache.json") {
        if (fs::exists(path_)) {
            std::ifstream in(path_);
            cache_ = json::parse(in);
        } else {
            cache_ = json::object();
        }
    }

    bool hit(const std::string& stage, const std::string& key,
             const std::vector<std::string>& outputs) const {
        if (!cache_.contains(stage) || cache_[stage].value("key", "") != key) return false;
        for (const auto& o : outputs)
            if (!fs::exists(o)) return false;
        return true;
    }

    void store(const std::string& stage, const std::string& key,
               const std::vector<std::string>& outputs) {
        cache_[stage] = {{"key", key}, {"outputs", outputs}};
        std::ofstream out(path_);
        out << cache_.dump(1, '\t') << '\n';
    }

private:
    fs::path path_;
    json cache_;
};

std::string speed_tag(double speed) {
    std::ostringstream ss;
    ss << static_cast<long long>(speed);
    return ss.str();
}

void write_refs_csv(const std::string& path, const Eigen::VectorXd& refs) {
    csv::Table t;
    t.names = {"cycle", "tref_nm"};
    t.cols.resize(2);
    for (Eigen::Index k = 0; k < refs.size(); ++k) {
        t.cols[0].push_back(static_cast<double>(k));
        t.cols[1].push_back(refs[k]);
    }
    csv::write(path, t);
}

void write_gain_surface(const std::string& path, const LpvModel& model) {
    csv::Table t;
    t.names = {"fq_mg", "soi_cad"};
    for (int r = 1; r <= 3; ++r)
        for (int c = 1; c <= 3; ++c) t.names.push_back("a" + std::to_string(r) + std::to_string(c));
    for (int r = 1; r <= 3; ++r)
        for (int c = 1; c <= 3; ++c) t.names.push_back("b" + std::to_string(r) + std::to_string(c));
    t.cols.resize(t.names.size());

    const BoundSet bounds;
    const int n = 21;
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < n; ++k) {
            const double fq = bounds.fq_min + (bounds.fq_max - bounds.fq_min) * i / (n - 1);
            const double soi = bounds.soi_min + (bounds.soi_max - bounds.soi_min) * k / (n - 1);
            const FrozenLti lti =
                model.eval_matrices(schedule_from_inputs(model, fq, soi, 85.0));
            std::size_t col = 0;
            t.cols[col++].push_back(fq);
            t.cols[col++].push_back(soi);
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) t.cols[col++].push_back(lti.A(r, c));
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) t.cols[col++].push_back(lti.B(r, c));
        }
    }
    csv::write(path, t);
}

ClosedLoopLog run_controller(CycleController& ctl, const SurrogatePlant& plant,
                             const Eigen::VectorXd& refs, double speed) {
    SurrogatePlant p = plant;
    const Eigen::Vector3d u0 = feedforward_baseline_clamped(refs[0], speed, p);
    const PlantState init = plant_steady_state(p, u0, speed);
    const Eigen::VectorXd speeds = Eigen::VectorXd::Constant(refs.size(), speed);
    return closed_loop(p, ctl, refs, speeds, init);
}

}  // namespace

std::vector<StageResult> run_experiment(const ExperimentRecipe& recipe,
                                        const std::string& out_dir) {
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    StageCache cache(dir);
    std::vector<StageResult> results;

    const std::string recipe_json = recipe_to_json(recipe).dump();
    auto path = [&](const std::string& name) { return (dir / name).string(); };

    auto run_stage = [&](const std::string& name, const std::string& key,
                         const std::vector<std::string>& outputs, const auto& body) {
        if (cache.hit(name, key, outputs)) {
            results.push_back({name, true});
            return;
        }
        try {
            body();
        } catch (const std::exception& e) {
            throw std::runtime_error("stage '" + name + "' failed: " + e.what());
        }
        cache.store(name, key, outputs);
        results.push_back({name, false});
    };

    // ---- simulate ----------------------------------------------------------
    const std::string train_data = path("train_data.csv");
    {
        const json cfg = recipe_to_json(recipe)["simulate"];
        const std::string key = sha256_hex("simulate|" + cfg.dump() +
                                           "|seed=" + std::to_string(recipe.seed));
        run_stage("simulate", key, {train_data}, [&] {
            SurrogatePlant plant;
            const Eigen::MatrixXd u =
                random_excitation(recipe.ident_cycles, recipe.mpc.bounds, recipe.excite_hold_lo,
                                  recipe.excite_hold_hi, recipe.seed + 1);
            const Eigen::VectorXd speeds =
                Eigen::VectorXd::Constant(recipe.ident_cycles, recipe.ident_speed);
            Trajectory traj = plant.simulate(u, speeds);
            save_trajectory(train_data, traj);
        });
    }

    // ---- identify ----------------------------------------------------------
    const std::string model_default = path("model_default.json");
    const std::string arx_file = path("arx.json");
    {
        const json cfg = recipe_to_json(recipe)["identify"];
        const std::string key =
            sha256_hex("identify|" + cfg.dump() + "|" + sha256_file(train_data));
        run_stage("identify", key, {model_default, arx_file}, [&] {
            const Trajectory data = load_trajectory(train_data);
            const auto [train, val] = split(data, recipe.train_fraction);
            KernelConfig kc;
            kc.sigma = recipe.default_sigma;
            kc.gamma = Eigen::Vector3d::Constant(recipe.default_gamma);
            save_model(model_default, fit_engine_model(train, recipe.schedule, kc));
            save_arx(arx_file, fit_engine_arx(train));
        });
    }

    // ---- tune --------------------------------------------------------------
    const std::string model_file = path("model.json");
    const std::string tune_history = path("tune_history.csv");
    {
        const json cfg = recipe_to_json(recipe)["tune"];
        const std::string key = sha256_hex("tune|" + cfg.dump() + "|" +
                                           sha256_file(train_data) + "|" +
                                           sha256_file(model_default));
        run_stage("tune", key, {model_file, tune_history}, [&] {
            const Trajectory data = load_trajectory(train_data);
            if (recipe.tune_enabled) {
                BayesOptSettings settings;
                settings.budget = recipe.tune_budget;
                settings.seed = recipe.seed + 2;
                const TuneResult tuned = tune_hyperparameters(
                    data, recipe.train_fraction, recipe.schedule, recipe.shared_gamma, settings);
                save_history(tune_history, tuned.bounds, tuned.history);
                const auto [train, val] = split(data, recipe.train_fraction);
                save_model(model_file, fit_engine_model(train, recipe.schedule, tuned.best));
            } else {
                fs::copy_file(model_default, model_file, fs::copy_options::overwrite_existing);
                csv::Table empty;
                empty.names = {"iter", "log_sigma", "log_gamma", "J", "best_J"};
                empty.cols.resize(5);
                csv::write(tune_history, empty);
            }
        });
    }

    // ---- control -----------------------------------------------------------
    std::vector<std::string> control_outputs;
    for (double speed : recipe.eval_speeds) {
        const std::string tag = speed_tag(speed);
        control_outputs.push_back(path("refs_" + tag + ".csv"));
        control_outputs.push_back(path("bench_" + tag + ".csv"));
        control_outputs.push_back(path("lmpc_" + tag + ".csv"));
        control_outputs.push_back(path("lpvmpc_" + tag + ".csv"));
    }
    {
        const json cfg = recipe_to_json(recipe)["control"];
        const std::string key = sha256_hex("control|" + cfg.dump() + "|" +
                                           std::to_string(recipe.seed) + "|" +
                                           sha256_file(model_file) + "|" + sha256_file(arx_file));
        run_stage("control", key, control_outputs, [&] {
            const SurrogatePlant plant;
            const LpvModel model = load_model(model_file);
            const FittedArx arx = load_arx(arx_file);
            for (std::size_t si = 0; si < recipe.eval_speeds.size(); ++si) {
                const double speed = recipe.eval_speeds[si];
                const std::string tag = speed_tag(speed);
                const Eigen::VectorXd refs =
                    random_step_profile(recipe.eval_cycles, recipe.ref_lo, recipe.ref_hi,
                                        recipe.ref_hold_lo, recipe.ref_hold_hi,
                                        recipe.seed + 10 + si);
                write_refs_csv(path("refs_" + tag + ".csv"), refs);

                BenchmarkCycleController bench(plant);
                save_log(path("bench_" + tag + ".csv"), run_controller(bench, plant, refs, speed));

                const Eigen::Vector3d u0 = feedforward_baseline_clamped(refs[0], speed, plant);
                MpcCycleController lmpc(MpcController(
                    std::make_shared<FixedControlModel>(arx.lti, arx.x_scaler, arx.u_scaler),
                    recipe.mpc, u0));
                save_log(path("lmpc_" + tag + ".csv"), run_controller(lmpc, plant, refs, speed));

                MpcCycleController lpv(MpcController(
                    std::make_shared<LpvControlModel>(model), recipe.mpc, u0));
                save_log(path("lpvmpc_" + tag + ".csv"), run_controller(lpv, plant, refs, speed));
            }
        });
    }

    // ---- imitate -----------------------------------------------------------
    const std::string imitation_data = path("imitation_data.csv");
    const std::string imitation_net = path("imitation_net.json");
    const std::string curves_file = path("imitation_curves.csv");
    std::vector<std::string> imitate_outputs{imitation_data, imitation_net, curves_file};
    for (double speed : recipe.eval_speeds)
        imitate_outputs.push_back(path("imit_" + speed_tag(speed) + ".csv"));
    {
        const json cfg = recipe_to_json(recipe)["imitate"];
        std::string key_src = "imitate|" + cfg.dump() + "|" + std::to_string(recipe.seed) + "|" +
                              sha256_file(model_file);
        for (double speed : recipe.eval_speeds)
            key_src += "|" + sha256_file(path("refs_" + speed_tag(speed) + ".csv"));
        run_stage("imitate", sha256_hex(key_src), imitate_outputs, [&] {
            const SurrogatePlant plant;
            const LpvModel model = load_model(model_file);

            // collect: LPV-MPC over mixed speeds and random torque targets
            const Eigen::VectorXd refs =
                random_step_profile(recipe.collect_cycles, recipe.ref_lo, recipe.ref_hi,
                                    recipe.ref_hold_lo, recipe.ref_hold_hi, recipe.seed + 20);
            const Eigen::VectorXd speeds =
                random_speed_profile(recipe.collect_cycles, recipe.collect_speeds,
                                     recipe.speed_hold_lo, recipe.speed_hold_hi, recipe.seed + 21);
            SurrogatePlant p = plant;
            const Eigen::Vector3d u0 = feedforward_baseline_clamped(refs[0], speeds[0], p);
            MpcCycleController mpc(MpcController(std::make_shared<LpvControlModel>(model),
                                                 recipe.mpc, u0));
            const ClosedLoopLog collect_log =
                closed_loop(p, mpc, refs, speeds, plant_steady_state(p, u0, speeds[0]));
            const ImitationDataset ds = collect_dataset({collect_log}, recipe.mpc.bounds);
            save_dataset(imitation_data, ds);

            TrainConfig tc = recipe.train;
            tc.seed = recipe.seed + 22;
            const TrainedImitation trained = train_imitation(ds, tc);
            save_network(imitation_net, trained);

            csv::Table curves;
            curves.names = {"epoch",          "lr",            "train_loss",
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
            csv::write(curves_file, curves);

            for (double speed : recipe.eval_speeds) {
                const std::string tag = speed_tag(speed);
                const csv::Table rt = csv::read(path("refs_" + tag + ".csv"));
                const auto& col = rt.column("tref_nm");
                Eigen::VectorXd eval_refs(static_cast<Eigen::Index>(col.size()));
                for (std::size_t i = 0; i < col.size(); ++i)
                    eval_refs[static_cast<Eigen::Index>(i)] = col[i];
                ImitationController imit(load_network(imitation_net), recipe.mpc.bounds);
                save_log(path("imit_" + tag + ".csv"),
                         run_controller(imit, plant, eval_refs, speed));
            }
        });
    }

    // ---- report ------------------------------------------------------------
    std::vector<std::string> report_outputs{path("report.json"), path("gain_surface.csv")};
    for (double speed : recipe.eval_speeds)
        report_outputs.push_back(path("report_" + speed_tag(speed) + ".json"));
    {
        std::string key_src = "report|" + std::to_string(recipe.mpc.bounds.nox_max) + "|" +
                              sha256_file(model_file);
        for (double speed : recipe.eval_speeds) {
            const std::string tag = speed_tag(speed);
            for (const char* base : {"bench_", "lmpc_", "lpvmpc_", "imit_"})
                key_src += "|" + sha256_file(path(base + tag + ".csv"));
        }
        run_stage("report", sha256_hex(key_src), report_outputs, [&] {
            json combined{{"schema_version", 1}, {"speeds", json::object()}};
            for (double speed : recipe.eval_speeds) {
                const std::string tag = speed_tag(speed);
                const ClosedLoopLog bench = load_log(path("bench_" + tag + ".csv"));
                const ClosedLoopLog lmpc = load_log(path("lmpc_" + tag + ".csv"));
                const ClosedLoopLog lpv = load_log(path("lpvmpc_" + tag + ".csv"));
                const ClosedLoopLog imit = load_log(path("imit_" + tag + ".csv"));
                const ImprovementReport rep =
                    compute_report(bench, {"linear-mpc", "lpv-mpc", "imitative"},
                                   {&lmpc, &lpv, &imit}, recipe.mpc.bounds.nox_max);
                const std::string rep_path = path("report_" + tag + ".json");
                save_report(rep_path, rep);
                std::ifstream in(rep_path);
                combined["speeds"][tag] = json::parse(in);
            }
            std::ofstream out(path("report.json"));
            out << combined.dump(1, '\t') << '\n';
            write_gain_surface(path("gain_surface.csv"), load_model(model_file));
        });
    }

    return results;
}

}  // namespace lpvmpc
