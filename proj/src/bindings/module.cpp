#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lpvmpc/bayesopt.hpp"
#include "lpvmpc/experiment.hpp"
#include "lpvmpc/imitation.hpp"
#include "lpvmpc/lpv_model.hpp"
#include "lpvmpc/metrics.hpp"
#include "lpvmpc/mpc.hpp"
#include "lpvmpc/plant.hpp"
#include "lpvmpc/report.hpp"
#include "lpvmpc/trajectory.hpp"

namespace py = pybind11;
using namespace lpvmpc;

PYBIND11_MODULE(_core, m) {
    m.doc() = "Kernel LPV identification, constrained MPC and imitation control "
              "for a surrogate diesel engine";

    // --- dataset -------------------------------------------------------------
    py::class_<Trajectory>(m, "Trajectory")
        .def(py::init<>())
        .def_readwrite("cycle", &Trajectory::cycle)
        .def_readwrite("fq", &Trajectory::fq)
        .def_readwrite("soi", &Trajectory::soi)
        .def_readwrite("vgt", &Trajectory::vgt)
        .def_readwrite("t_out", &Trajectory::t_out)
        .def_readwrite("p_man", &Trajectory::p_man)
        .def_readwrite("nox", &Trajectory::nox)
        .def_readwrite("speed", &Trajectory::speed)
        .def("__len__", &Trajectory::size)
        .def("validate", &Trajectory::validate)
        .def("inputs", &Trajectory::inputs)
        .def("states", &Trajectory::states);
    m.def("load_trajectory", &load_trajectory, py::arg("path"));
    m.def("save_trajectory", &save_trajectory, py::arg("path"), py::arg("trajectory"));
    m.def("split", &split, py::arg("trajectory"), py::arg("train_fraction"));
    m.def("nrmse", &nrmse, py::arg("predicted"), py::arg("measured"),
          "NRMSE in percent, normalized by the measured range");

    // --- LPV-SVM model ---------------------------------------------------------
    py::class_<KernelConfig>(m, "KernelConfig")
        .def(py::init([](double sigma, const Eigen::VectorXd& gamma) {
                 KernelConfig k;
                 k.sigma = sigma;
                 k.gamma = gamma;
                 return k;
             }),
             py::arg("sigma"), py::arg("gamma"))
        .def_readwrite("sigma", &KernelConfig::sigma)
        .def_readwrite("gamma", &KernelConfig::gamma);
    py::class_<FrozenLti>(m, "FrozenLti")
        .def_readonly("A", &FrozenLti::A)
        .def_readonly("B", &FrozenLti::B)
        .def_readonly("p_frozen", &FrozenLti::p_frozen);
    py::class_<LpvModel>(m, "LpvModel")
        .def_static("fit",
                    [](const Eigen::MatrixXd& X0, const Eigen::MatrixXd& U,
                       const Eigen::MatrixXd& P, const Eigen::MatrixXd& X1,
                       const KernelConfig& cfg) { return LpvModel::fit(X0, U, P, X1, cfg); },
                    py::arg("X0"), py::arg("U"), py::arg("P"), py::arg("X1"), py::arg("config"))
        .def("eval_matrices", &LpvModel::eval_matrices, py::arg("p"))
        .def("predict_one_step", &LpvModel::predict_one_step, py::arg("x"), py::arg("u"),
             py::arg("p"))
        .def("simulate", &LpvModel::simulate, py::arg("x0"), py::arg("u_seq"), py::arg("p_seq"))
        .def("verify_identity", &LpvModel::verify_identity)
        .def_property_readonly("alpha", &LpvModel::alpha)
        .def_property_readonly("sample_count", &LpvModel::sample_count);
    m.def("rbf_kernel", &rbf_kernel, py::arg("p_i"), py::arg("p_j"), py::arg("sigma"));
    m.def("build_omega", &build_omega, py::arg("train_x"), py::arg("train_u"), py::arg("train_p"),
          py::arg("sigma"));
    m.def(
        "fit_engine_model",
        [](const Trajectory& train, const KernelConfig& cfg,
           const std::vector<std::string>& schedule) {
            ScheduleConfig sc;
            if (!schedule.empty()) sc.channels = schedule;
            return fit_engine_model(train, sc, cfg);
        },
        py::arg("train"), py::arg("config"), py::arg("schedule") = std::vector<std::string>{});
    m.def("simulate_engine", &simulate_engine, py::arg("model"), py::arg("trajectory"));
    m.def("predict_engine_one_step", &predict_engine_one_step, py::arg("model"),
          py::arg("trajectory"));
    m.def("save_model", &save_model, py::arg("path"), py::arg("model"));
    m.def("load_model", &load_model, py::arg("path"));
    m.def("fit_arx", &fit_arx, py::arg("X0"), py::arg("U"), py::arg("X1"), py::arg("P"));

    // --- hyperparameter search ---------------------------------------------------
    py::class_<OptRecord>(m, "OptRecord")
        .def_readonly("iteration", &OptRecord::iteration)
        .def_readonly("point", &OptRecord::point)
        .def_readonly("objective", &OptRecord::objective)
        .def_readonly("best_so_far", &OptRecord::best_so_far);
    py::class_<OptHistory>(m, "OptHistory")
        .def_readonly("records", &OptHistory::records)
        .def("best_value", &OptHistory::best_value)
        .def("best_point", &OptHistory::best_point);
    m.def(
        "bayesopt_minimize",
        [](const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& low,
           const Eigen::VectorXd& high, int budget, std::uint64_t seed) {
            HyperBounds b;
            b.low = low;
            b.high = high;
            for (Eigen::Index i = 0; i < low.size(); ++i) b.names.push_back("x" + std::to_string(i));
            BayesOptSettings s;
            s.budget = budget;
            s.seed = seed;
            return bayesopt_minimize(f, b, s);
        },
        py::arg("objective"), py::arg("low"), py::arg("high"), py::arg("budget"), py::arg("seed"),
        "Minimize a black-box function over a box via GP expected improvement");

    // --- plant ---------------------------------------------------------------------
    py::class_<PlantState>(m, "PlantState")
        .def(py::init<>())
        .def_readwrite("t_out", &PlantState::t_out)
        .def_readwrite("p_man", &PlantState::p_man)
        .def_readwrite("nox", &PlantState::nox)
        .def_readwrite("turbo_lag", &PlantState::turbo_lag)
        .def_readwrite("speed", &PlantState::speed);
    py::class_<SurrogatePlant>(m, "SurrogatePlant")
        .def(py::init<>())
        .def("step", &SurrogatePlant::step, py::arg("state"), py::arg("u"), py::arg("speed"))
        .def("simulate", &SurrogatePlant::simulate, py::arg("inputs"), py::arg("speed"),
             py::arg("initial") = PlantState{})
        .def("steady_torque", &SurrogatePlant::steady_torque)
        .def("steady_nox", &SurrogatePlant::steady_nox);
    py::class_<ArxModel>(m, "ArxModel")
        .def_static("reference", &ArxModel::reference)
        .def_readonly("A", &ArxModel::A)
        .def_readonly("B", &ArxModel::B)
        .def_readonly("C", &ArxModel::C);
    m.def("arx_step", &arx_step, py::arg("model"), py::arg("x"), py::arg("u"));
    m.def("feedforward_baseline",
          [](double t_ref, double speed) { return feedforward_baseline(t_ref, speed); },
          py::arg("t_ref"), py::arg("speed"));
    m.def("plant_steady_state", &plant_steady_state, py::arg("plant"), py::arg("u"),
          py::arg("speed"));

    // --- MPC -----------------------------------------------------------------------
    py::class_<BoundSet>(m, "BoundSet")
        .def(py::init<>())
        .def_readwrite("nox_min", &BoundSet::nox_min)
        .def_readwrite("nox_max", &BoundSet::nox_max)
        .def_readwrite("fq_min", &BoundSet::fq_min)
        .def_readwrite("fq_max", &BoundSet::fq_max)
        .def_readwrite("soi_min", &BoundSet::soi_min)
        .def_readwrite("soi_max", &BoundSet::soi_max)
        .def_readwrite("vgt_min", &BoundSet::vgt_min)
        .def_readwrite("vgt_max", &BoundSet::vgt_max);
    py::class_<MpcWeights>(m, "MpcWeights")
        .def(py::init<>())
        .def_readwrite("t_out", &MpcWeights::t_out)
        .def_readwrite("nox", &MpcWeights::nox)
        .def_readwrite("fq", &MpcWeights::fq)
        .def_readwrite("delta_u", &MpcWeights::delta_u)
        .def_readwrite("slack", &MpcWeights::slack);
    py::class_<MpcConfig>(m, "MpcConfig")
        .def(py::init<>())
        .def_readwrite("np", &MpcConfig::np)
        .def_readwrite("nc", &MpcConfig::nc)
        .def_readwrite("weights", &MpcConfig::weights)
        .def_readwrite("bounds", &MpcConfig::bounds);
    py::class_<MpcStepResult>(m, "MpcStepResult")
        .def_readonly("u", &MpcStepResult::u)
        .def_readonly("slack", &MpcStepResult::slack)
        .def_readonly("cost", &MpcStepResult::cost)
        .def_readonly("kkt_residual", &MpcStepResult::kkt_residual)
        .def_readonly("converged", &MpcStepResult::converged)
        .def_readonly("solve_seconds", &MpcStepResult::solve_seconds);
    py::class_<MpcController>(m, "MpcController")
        .def(py::init([](const LpvModel& model, const MpcConfig& cfg, const Eigen::Vector3d& u0) {
                 return MpcController(std::make_shared<LpvControlModel>(model), cfg, u0);
             }),
             py::arg("model"), py::arg("config"), py::arg("u_init"))
        .def_static(
            "linear",
            [](const FrozenLti& lti, const Eigen::VectorXd& x_offset,
               const Eigen::VectorXd& x_span, const Eigen::VectorXd& u_offset,
               const Eigen::VectorXd& u_span, const MpcConfig& cfg, const Eigen::Vector3d& u0) {
                return MpcController(
                    std::make_shared<FixedControlModel>(
                        lti, Scaler::from_offsets_spans(x_offset, x_span),
                        Scaler::from_offsets_spans(u_offset, u_span)),
                    cfg, u0);
            },
            py::arg("lti"), py::arg("x_offset"), py::arg("x_span"), py::arg("u_offset"),
            py::arg("u_span"), py::arg("config"), py::arg("u_init"))
        .def("step", py::overload_cast<const PlantState&, double>(&MpcController::step),
             py::arg("measurement"), py::arg("t_ref"))
        .def("reset", &MpcController::reset)
        .def_property_readonly("previous_input", &MpcController::previous_input);

    py::class_<ClosedLoopLog>(m, "ClosedLoopLog")
        .def_readonly("cycle", &ClosedLoopLog::cycle)
        .def_readonly("tref", &ClosedLoopLog::tref)
        .def_readonly("fq", &ClosedLoopLog::fq)
        .def_readonly("soi", &ClosedLoopLog::soi)
        .def_readonly("vgt", &ClosedLoopLog::vgt)
        .def_readonly("tout", &ClosedLoopLog::tout)
        .def_readonly("pman", &ClosedLoopLog::pman)
        .def_readonly("nox", &ClosedLoopLog::nox)
        .def_readonly("slack", &ClosedLoopLog::slack)
        .def_readonly("cost", &ClosedLoopLog::cost)
        .def_readonly("solve_us", &ClosedLoopLog::solve_us)
        .def_readonly("converged", &ClosedLoopLog::converged)
        .def("__len__", &ClosedLoopLog::size);
    m.def("save_log", &save_log, py::arg("path"), py::arg("log"));
    m.def("load_log", &load_log, py::arg("path"));

    py::class_<CycleController>(m, "CycleController");
    py::class_<MpcCycleController, CycleController>(m, "MpcCycleController")
        .def(py::init<MpcController>(), py::arg("controller"));
    py::class_<BenchmarkCycleController, CycleController>(m, "BenchmarkCycleController")
        .def(py::init<SurrogatePlant>(), py::arg("plant"));
    m.def(
        "closed_loop",
        [](SurrogatePlant& plant, CycleController& ctl, const Eigen::VectorXd& refs,
           const Eigen::VectorXd& speeds, const PlantState& initial) {
            return closed_loop(plant, ctl, refs, speeds, initial);
        },
        py::arg("plant"), py::arg("controller"), py::arg("t_ref_profile"),
        py::arg("speed_profile"), py::arg("initial"));

    // --- imitation -------------------------------------------------------------------
    py::class_<ImitationDataset>(m, "ImitationDataset")
        .def(py::init<>())
        .def_readwrite("features", &ImitationDataset::features)
        .def_readwrite("targets", &ImitationDataset::targets)
        .def("total_rows", &ImitationDataset::total_rows);
    m.def("collect_dataset", &collect_dataset, py::arg("runs"), py::arg("bounds") = BoundSet{});
    m.def("save_dataset", &save_dataset, py::arg("path"), py::arg("dataset"));
    m.def("load_dataset", &load_dataset, py::arg("path"));
    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("minibatch", &TrainConfig::minibatch)
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("lr_drop_period", &TrainConfig::lr_drop_period)
        .def_readwrite("lr_drop_factor", &TrainConfig::lr_drop_factor)
        .def_readwrite("l2", &TrainConfig::l2)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("tbptt_len", &TrainConfig::tbptt_len)
        .def_readwrite("window_stride", &TrainConfig::window_stride)
        .def_readwrite("train_fraction", &TrainConfig::train_fraction)
        .def_readwrite("seed", &TrainConfig::seed);
    py::class_<TrainedImitation>(m, "TrainedImitation")
        .def_property_readonly("val_nrmse",
                               [](const TrainedImitation& t) {
                                   return t.curves.val_nrmse.empty()
                                              ? Eigen::Vector3d::Zero().eval()
                                              : t.curves.val_nrmse.back();
                               })
        .def_property_readonly("train_loss", [](const TrainedImitation& t) {
            return t.curves.train_loss;
        });
    m.def("train_imitation", &train_imitation, py::arg("dataset"), py::arg("config"));
    m.def("save_network", &save_network, py::arg("path"), py::arg("trained"));
    m.def("load_network", &load_network, py::arg("path"));
    py::class_<ImitationController, CycleController>(m, "ImitationController")
        .def(py::init<TrainedImitation, BoundSet>(), py::arg("trained"),
             py::arg("bounds") = BoundSet{})
        .def("step", &ImitationController::step, py::arg("measurement"), py::arg("t_ref"),
             py::arg("speed"))
        .def("reset", &ImitationController::reset);

    // --- harness ---------------------------------------------------------------------
    py::class_<ControllerRow>(m, "ControllerRow")
        .def_readonly("name", &ControllerRow::name)
        .def_readonly("nox_change_pct", &ControllerRow::nox_change_pct)
        .def_readonly("fuel_change_pct", &ControllerRow::fuel_change_pct)
        .def_readonly("load_error_pct", &ControllerRow::load_error_pct)
        .def_readonly("mean_step_ms", &ControllerRow::mean_step_ms)
        .def_readonly("violation_cycles", &ControllerRow::violation_cycles)
        .def_readonly("mean_nox_ppm", &ControllerRow::mean_nox_ppm)
        .def_readonly("total_fuel_mg", &ControllerRow::total_fuel_mg);
    py::class_<ImprovementReport>(m, "ImprovementReport")
        .def_readonly("rows", &ImprovementReport::rows)
        .def_readonly("nox_bound_ppm", &ImprovementReport::nox_bound_ppm);
    m.def(
        "compute_report",
        [](const ClosedLoopLog& bench, const std::vector<std::string>& names,
           const std::vector<ClosedLoopLog>& logs, double nox_bound) {
            std::vector<const ClosedLoopLog*> ptrs;
            for (const auto& l : logs) ptrs.push_back(&l);
            return compute_report(bench, names, ptrs, nox_bound);
        },
        py::arg("benchmark"), py::arg("names"), py::arg("logs"), py::arg("nox_bound") = 500.0);
    m.def("random_step_profile", &random_step_profile, py::arg("cycles"), py::arg("lo"),
          py::arg("hi"), py::arg("hold_lo"), py::arg("hold_hi"), py::arg("seed"));
    m.def(
        "run_experiment",
        [](const std::string& recipe_path, const std::string& out_dir) {
            const ExperimentRecipe recipe =
                recipe_path.empty() ? ExperimentRecipe{} : load_recipe(recipe_path);
            std::vector<std::pair<std::string, bool>> out;
            for (const auto& s : run_experiment(recipe, out_dir))
                out.emplace_back(s.name, s.cache_hit);
            return out;
        },
        py::arg("recipe_path"), py::arg("out_dir"));

#ifdef VERSION_INFO
#define STRINGIFY(x) #x
#define MACRO_STRINGIFY(x) STRINGIFY(x)
    m.attr("__version__") = MACRO_STRINGIFY(VERSION_INFO);
#else
    m.attr("__version__") = "0.1.0";
#endif
}
