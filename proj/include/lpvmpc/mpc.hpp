#pragma once

#include <Eigen/Core>
#include <memory>
#include <string>
#include <vector>

#include "lpvmpc/lpv_model.hpp"
#include "lpvmpc/plant.hpp"
#include "lpvmpc/qp.hpp"
#include "lpvmpc/scaler.hpp"

namespace lpvmpc {

/// Input and state constraint set. Defaults are the published constraint table:
/// NOx [0, 500] ppm, FQ [10, 80] mg/cycle, SOI [-2, 11] aTDC CAD, VGT [70, 100] %.
struct BoundSet {
    double nox_min = 0.0, nox_max = 500.0;
    double fq_min = 10.0, fq_max = 80.0;
    double soi_min = -2.0, soi_max = 11.0;
    double vgt_min = 70.0, vgt_max = 100.0;

    void validate() const;
    Eigen::Vector3d input_min() const { return {fq_min, soi_min, vgt_min}; }
    Eigen::Vector3d input_max() const { return {fq_max, soi_max, vgt_max}; }
    Eigen::Vector3d clamp_input(const Eigen::Vector3d& u) const;
};

struct MpcWeights {
    double t_out = 1.0;  // (N*m)^-2
    double nox = 4e-4;   // ppm^-2
    double fq = 1e-2;    // (mg/cycle)^-2
    Eigen::Vector3d delta_u{1e-2, 1e-2, 1e-3};
    // Large enough that the quadratic penalty acts like an exact one: slack
    // stays below 1e-6 whenever the bound is satisfiable, and the term is ~0
    // at nominal operation.
    double slack = 1e8;
};

struct MpcConfig {
    int np = 5;  // prediction horizon (cycles)
    int nc = 1;  // control horizon (cycles)
    MpcWeights weights;
    BoundSet bounds;

    void validate() const;
};

/// Condensed single-shooting QP data: predictions are affine in the stacked
/// decision (u(k)..u(k+Nc-1), s) via the frozen (A, B) held over the horizon.
struct CondensedQp {
    QpProblem qp;
    // physical-unit affine prediction maps x(k+i) = G[i-1] u_stack + h[i-1], i = 1..Np
    std::vector<Eigen::MatrixXd> G;
    std::vector<Eigen::Vector3d> h;
    Eigen::VectorXd t_ref;  // horizon torque references
    Eigen::Vector3d u_prev;
    MpcConfig cfg;

    Eigen::Index input_blocks() const { return cfg.nc; }
    /// Stacked decision from an input sequence (repeating the last block) and slack.
    Eigen::VectorXd pack(const Eigen::MatrixXd& u_blocks, double s) const;
};

/// Expand the five cost terms (torque tracking, NOx, fuel, input move, slack)
/// around the frozen model. State terms run i = 1..Np; input terms i = 0..Np-1.
CondensedQp build_qp(const FrozenLti& lti, const Scaler& x_scaler, const Scaler& u_scaler,
                     const Eigen::Vector3d& x0, const Eigen::VectorXd& t_ref,
                     const Eigen::Vector3d& u_prev, const MpcConfig& cfg);

/// The controller cost at a stacked decision, evaluated term by term (not via
/// the quadratic form), so it is exact regardless of Hessian regularization.
double mpc_cost(const CondensedQp& c, const Eigen::VectorXd& z);

struct MpcSolveResult {
    Eigen::Vector3d u;  // first input block
    double slack = 0.0;
    double cost = 0.0;
    double kkt_residual = 0.0;
    bool converged = false;
};

/// Solve from a feasible start built out of the previous input.
MpcSolveResult solve_mpc_qp(const CondensedQp& c);

/// Smallest achievable worst-case NOx constraint violation over the horizon
/// with zero slack (a tiny regularized LP). Positive means the zero-slack
/// problem is infeasible; used for slack attribution checks.
double zero_slack_infeasibility(const CondensedQp& c);

// --- Controller --------------------------------------------------------------

/// Prediction model handle: produces frozen scaled-coordinate matrices from the
/// previous applied input, plus the scalers tying them to physical signals.
class ControlModel {
public:
    virtual ~ControlModel() = default;
    virtual FrozenLti freeze(const Eigen::Vector3d& u_prev) const = 0;
    virtual const Scaler& x_scaler() const = 0;
    virtual const Scaler& u_scaler() const = 0;
};

/// Quasi-LPV freezing: matrices evaluated at the previous applied input's
/// scheduling point and held over the horizon.
class LpvControlModel final : public ControlModel {
public:
    explicit LpvControlModel(LpvModel model) : model_(std::move(model)) {}
    FrozenLti freeze(const Eigen::Vector3d& u_prev) const override;
    const Scaler& x_scaler() const override { return model_.x_scaler(); }
    const Scaler& u_scaler() const override { return model_.u_scaler(); }
    const LpvModel& model() const { return model_; }

private:
    LpvModel model_;
};

/// Constant matrices (linear MPC); degenerate scheduling.
class FixedControlModel final : public ControlModel {
public:
    FixedControlModel(FrozenLti lti, Scaler xs, Scaler us)
        : lti_(std::move(lti)), xs_(std::move(xs)), us_(std::move(us)) {}
    FrozenLti freeze(const Eigen::Vector3d&) const override { return lti_; }
    const Scaler& x_scaler() const override { return xs_; }
    const Scaler& u_scaler() const override { return us_; }

private:
    FrozenLti lti_;
    Scaler xs_, us_;
};

struct MpcStepResult {
    Eigen::Vector3d u;
    double slack = 0.0;
    double cost = 0.0;
    double kkt_residual = 0.0;
    bool converged = true;
    double solve_seconds = 0.0;  // wall-clock around the controller step
};

/// Stateful receding-horizon controller; one instance per simulation.
class MpcController {
public:
    MpcController(std::shared_ptr<const ControlModel> model, MpcConfig cfg,
                  const Eigen::Vector3d& u_init);

    /// Reference held constant over the horizon.
    MpcStepResult step(const PlantState& meas, double t_ref);
    /// Preview variant; refs must have Np entries.
    MpcStepResult step(const PlantState& meas, const Eigen::VectorXd& t_refs);

    const Eigen::Vector3d& previous_input() const { return u_prev_; }
    void reset(const Eigen::Vector3d& u_init) { u_prev_ = u_init; }
    const MpcConfig& config() const { return cfg_; }
    const ControlModel& model() const { return *model_; }

private:
    std::shared_ptr<const ControlModel> model_;
    MpcConfig cfg_;
    Eigen::Vector3d u_prev_;
};

// --- Closed loop --------------------------------------------------------------

struct ControlDecision {
    Eigen::Vector3d u;
    double slack = 0.0;
    double cost = 0.0;
    bool converged = true;
};

/// Anything that maps a measurement to actuator settings, once per cycle.
class CycleController {
public:
    virtual ~CycleController() = default;
    virtual ControlDecision decide(const PlantState& meas, double t_ref, double speed) = 0;
};

class MpcCycleController final : public CycleController {
public:
    explicit MpcCycleController(MpcController controller) : mpc_(std::move(controller)) {}
    ControlDecision decide(const PlantState& meas, double t_ref, double speed) override;
    MpcController& controller() { return mpc_; }

private:
    MpcController mpc_;
};

class BenchmarkCycleController final : public CycleController {
public:
    explicit BenchmarkCycleController(SurrogatePlant plant) : plant_(std::move(plant)) {}
    ControlDecision decide(const PlantState& meas, double t_ref, double speed) override;

private:
    SurrogatePlant plant_;
    Eigen::Vector3d last_u_{10.0, -1.0, 85.0};
};

/// Per-cycle closed-loop record. State columns hold the measurement the
/// controller acted on; solve_us is wall clock around the controller only.
struct ClosedLoopLog {
    std::vector<long long> cycle;
    std::vector<double> tref, fq, soi, vgt, tout, pman, nox, slack, cost, solve_us;
    std::vector<int> converged;
    std::vector<double> speed;  // kept in memory; not part of the CSV schema

    std::size_t size() const { return cycle.size(); }
};

ClosedLoopLog closed_loop(SurrogatePlant& plant, CycleController& controller,
                          const Eigen::VectorXd& t_ref_profile,
                          const Eigen::VectorXd& speed_profile, PlantState initial);

/// Fixed point of the surrogate maps under a constant input (used to start
/// closed-loop runs from a settled operating point).
PlantState plant_steady_state(const SurrogatePlant& plant, const Eigen::Vector3d& u, double speed);

void save_log(const std::string& path, const ClosedLoopLog& log);
ClosedLoopLog load_log(const std::string& path);

}  // namespace lpvmpc
