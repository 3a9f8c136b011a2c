#include "lpvmpc/mpc.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lpvmpc/csv.hpp"

namespace lpvmpc {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void BoundSet::validate() const {
    if (!(nox_min < nox_max && fq_min < fq_max && soi_min < soi_max && vgt_min < vgt_max))
        throw std::invalid_argument("BoundSet: every min must be below its max");
}

Eigen::Vector3d BoundSet::clamp_input(const Eigen::Vector3d& u) const {
    return {std::clamp(u[0], fq_min, fq_max), std::clamp(u[1], soi_min, soi_max),
            std::clamp(u[2], vgt_min, vgt_max)};
}

void MpcConfig::validate() const {
    if (!(np >= nc && nc >= 1))
        throw std::invalid_argument("MpcConfig: need Np >= Nc >= 1");
    bounds.validate();
    if (weights.t_out < 0 || weights.nox < 0 || weights.fq < 0 ||
        weights.delta_u.minCoeff() < 0)
        throw std::invalid_argument("MpcConfig: weights must be nonnegative");
    if (!(weights.slack > 0)) throw std::invalid_argument("MpcConfig: slack weight must be positive");
}

Eigen::VectorXd CondensedQp::pack(const Eigen::MatrixXd& u_blocks, double s) const {
    if (u_blocks.rows() != 3 || u_blocks.cols() != cfg.nc)
        throw std::invalid_argument("pack: expected 3 x Nc input blocks");
    Eigen::VectorXd z(3 * cfg.nc + 1);
    for (int j = 0; j < cfg.nc; ++j) z.segment<3>(3 * j) = u_blocks.col(j);
    z[3 * cfg.nc] = s;
    return z;
}

CondensedQp build_qp(const FrozenLti& lti, const Scaler& x_scaler, const Scaler& u_scaler,
                     const Eigen::Vector3d& x0, const Eigen::VectorXd& t_ref,
                     const Eigen::Vector3d& u_prev, const MpcConfig& cfg) {
    cfg.validate();
    if (!x0.allFinite()) throw std::invalid_argument("build_qp: non-finite state");
    if (t_ref.size() != cfg.np)
        throw std::invalid_argument("build_qp: reference length must equal Np");
    if (lti.A.rows() != 3 || lti.A.cols() != 3 || lti.B.rows() != 3 || lti.B.cols() != 3)
        throw std::invalid_argument("build_qp: model must be 3x3 / 3x3");

    const int np = cfg.np, nc = cfg.nc;
    const Eigen::Index d = 3 * nc + 1;

    const Eigen::Vector3d sx = x_scaler.span(), lx = x_scaler.offset();
    const Eigen::Vector3d su = u_scaler.span(), lu = u_scaler.offset();
    const Eigen::Matrix3d B_du = lti.B * su.cwiseInverse().asDiagonal();
    const Eigen::Vector3d b_off = -lti.B * lu.cwiseQuotient(su);

    CondensedQp c;
    c.t_ref = t_ref;
    c.u_prev = u_prev;
    c.cfg = cfg;
    c.G.reserve(np);
    c.h.reserve(np);

    // scaled-space recursion xi_{i+1} = A xi_i + B nu_i, nu from block min(i, Nc-1)
    Eigen::MatrixXd Xi = Eigen::MatrixXd::Zero(3, 3 * nc);
    Eigen::Vector3d xi_off = x_scaler.apply_row(x0);
    for (int i = 0; i < np; ++i) {
        const int blk = std::min(i, nc - 1);
        Xi = (lti.A * Xi).eval();
        Xi.block<3, 3>(0, 3 * blk) += B_du;
        xi_off = lti.A * xi_off + b_off;
        Eigen::MatrixXd Gp = sx.asDiagonal() * Xi;
        Eigen::Vector3d hp = lx + sx.cwiseProduct(xi_off);
        c.G.push_back(std::move(Gp));
        c.h.push_back(hp);
    }

    QpProblem& qp = c.qp;
    qp.H = Eigen::MatrixXd::Zero(d, d);
    qp.g = Eigen::VectorXd::Zero(d);

    auto add_term = [&](const Eigen::VectorXd& a, double b, double w) {
        if (w == 0.0) return;
        qp.H += 2.0 * w * a * a.transpose();
        qp.g += 2.0 * w * b * a;
    };

    Eigen::VectorXd a = Eigen::VectorXd::Zero(d);
    for (int i = 1; i <= np; ++i) {
        const auto& G = c.G[i - 1];
        const auto& h = c.h[i - 1];
        // torque tracking
        a.setZero();
        a.head(3 * nc) = G.row(0);
        add_term(a, h[0] - t_ref[i - 1], cfg.weights.t_out);
        // NOx magnitude
        a.setZero();
        a.head(3 * nc) = G.row(2);
        add_term(a, h[2], cfg.weights.nox);
    }
    // fuel: FQ of the block active at each horizon step
    for (int i = 0; i < np; ++i) {
        const int blk = std::min(i, nc - 1);
        a.setZero();
        a[3 * blk] = 1.0;
        add_term(a, 0.0, cfg.weights.fq);
    }
    // input moves within the control horizon
    for (int i = 0; i < nc; ++i) {
        for (int ch = 0; ch < 3; ++ch) {
            a.setZero();
            a[3 * i + ch] = 1.0;
            double b = 0.0;
            if (i == 0)
                b = -u_prev[ch];
            else
                a[3 * (i - 1) + ch] = -1.0;
            add_term(a, b, cfg.weights.delta_u[ch]);
        }
    }
    // shared slack, penalized at every horizon step
    qp.H(d - 1, d - 1) += 2.0 * np * cfg.weights.slack;

    regularize_hessian(qp.H);

    qp.lb.resize(d);
    qp.ub.resize(d);
    for (int j = 0; j < nc; ++j) {
        qp.lb.segment<3>(3 * j) = cfg.bounds.input_min();
        qp.ub.segment<3>(3 * j) = cfg.bounds.input_max();
    }
    qp.lb[d - 1] = 0.0;
    qp.ub[d - 1] = kInf;

    // softened NOx upper bound: NOx_i - s <= nox_max for i = 1..Np
    qp.C.setZero(np, d);
    qp.d.resize(np);
    for (int i = 1; i <= np; ++i) {
        qp.C.row(i - 1).head(3 * nc) = c.G[i - 1].row(2);
        qp.C(i - 1, d - 1) = -1.0;
        qp.d[i - 1] = cfg.bounds.nox_max - c.h[i - 1][2];
    }
    return c;
}

double mpc_cost(const CondensedQp& c, const Eigen::VectorXd& z) {
    const int np = c.cfg.np, nc = c.cfg.nc;
    const double s = z[3 * nc];
    const auto& w = c.cfg.weights;
    double j = 0.0;
    for (int i = 1; i <= np; ++i) {
        const Eigen::Vector3d x = c.G[i - 1] * z.head(3 * nc) + c.h[i - 1];
        const double te = x[0] - c.t_ref[i - 1];
        j += w.t_out * te * te + w.nox * x[2] * x[2];
    }
    Eigen::Vector3d prev = c.u_prev;
    for (int i = 0; i < np; ++i) {
        const int blk = std::min(i, nc - 1);
        const Eigen::Vector3d u = z.segment<3>(3 * blk);
        j += w.fq * u[0] * u[0];
        const Eigen::Vector3d du = u - prev;
        j += du.cwiseProduct(w.delta_u).dot(du);
        prev = u;
        j += w.slack * s * s;
    }
    return j;
}

MpcSolveResult solve_mpc_qp(const CondensedQp& c) {
    const int nc = c.cfg.nc;
    const Eigen::Index d = 3 * nc + 1;

    Eigen::VectorXd z0(d);
    const Eigen::Vector3d u0 = c.cfg.bounds.clamp_input(c.u_prev);
    for (int j = 0; j < nc; ++j) z0.segment<3>(3 * j) = u0;
    z0[d - 1] = 0.0;
    double needed = 0.0;
    for (Eigen::Index r = 0; r < c.qp.C.rows(); ++r)
        needed = std::max(needed, c.qp.C.row(r).head(d - 1).dot(z0.head(d - 1)) - c.qp.d[r]);
    z0[d - 1] = std::max(0.0, needed);

    const QpSolution sol = solve_qp(c.qp, z0);
    MpcSolveResult out;
    out.u = sol.z.head<3>();
    out.slack = sol.z[d - 1];
    out.cost = mpc_cost(c, sol.z);
    out.kkt_residual = sol.kkt_residual;
    out.converged = sol.converged;
    return out;
}

double zero_slack_infeasibility(const CondensedQp& c) {
    // min t  s.t.  NOx_i(u) - t <= nox_max, u in box   (tiny ridge keeps it a QP)
    const int nc = c.cfg.nc;
    const Eigen::Index du = 3 * nc;
    QpProblem lp;
    lp.H = Eigen::MatrixXd::Identity(du + 1, du + 1) * 2e-9;
    lp.g = Eigen::VectorXd::Zero(du + 1);
    lp.g[du] = 1.0;
    lp.lb = c.qp.lb;
    lp.ub = c.qp.ub;
    lp.lb[du] = -kInf;
    lp.ub[du] = kInf;
    lp.C = c.qp.C;
    lp.d = c.qp.d;

    Eigen::VectorXd z0(du + 1);
    for (int j = 0; j < nc; ++j)
        z0.segment<3>(3 * j) = 0.5 * (c.cfg.bounds.input_min() + c.cfg.bounds.input_max());
    z0[du] = 0.0;
    double needed = 0.0;
    for (Eigen::Index r = 0; r < lp.C.rows(); ++r)
        needed = std::max(needed, lp.C.row(r).head(du).dot(z0.head(du)) - lp.d[r]);
    z0[du] = std::max(0.0, needed) + 1.0;

    return solve_qp(lp, z0).z[du];
}

// --- Controller ----------------------------------------------------------------

FrozenLti LpvControlModel::freeze(const Eigen::Vector3d& u_prev) const {
    const Eigen::VectorXd p = schedule_from_inputs(model_, u_prev[0], u_prev[1], u_prev[2]);
    return model_.eval_matrices(p);
}

MpcController::MpcController(std::shared_ptr<const ControlModel> model, MpcConfig cfg,
                             const Eigen::Vector3d& u_init)
    : model_(std::move(model)), cfg_(cfg), u_prev_(u_init) {
    cfg_.validate();
    if (!model_) throw std::invalid_argument("MpcController: null model");
}

MpcStepResult MpcController::step(const PlantState& meas, double t_ref) {
    return step(meas, Eigen::VectorXd::Constant(cfg_.np, t_ref));
}

MpcStepResult MpcController::step(const PlantState& meas, const Eigen::VectorXd& t_refs) {
    const auto t0 = std::chrono::steady_clock::now();

    const FrozenLti lti = model_->freeze(u_prev_);
    const Eigen::Vector3d x0{meas.t_out, meas.p_man, meas.nox};
    const CondensedQp c =
        build_qp(lti, model_->x_scaler(), model_->u_scaler(), x0, t_refs, u_prev_, cfg_);
    const MpcSolveResult sol = solve_mpc_qp(c);

    MpcStepResult out;
    out.slack = sol.slack;
    out.cost = sol.cost;
    out.kkt_residual = sol.kkt_residual;
    out.converged = sol.converged;
    // fail-operational: hold the previous input if the solver did not converge
    out.u = sol.converged ? sol.u : u_prev_;
    u_prev_ = out.u;

    out.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

ControlDecision MpcCycleController::decide(const PlantState& meas, double t_ref, double) {
    const MpcStepResult r = mpc_.step(meas, t_ref);
    return {r.u, r.slack, r.cost, r.converged};
}

ControlDecision BenchmarkCycleController::decide(const PlantState&, double t_ref, double speed) {
    try {
        last_u_ = feedforward_baseline(t_ref, speed, plant_);
        return {last_u_, 0.0, 0.0, true};
    } catch (const std::exception&) {
        // unreachable request: hold the schedule at full fuel and flag the cycle
        Eigen::Vector3d u = last_u_;
        u[0] = 80.0;
        last_u_ = u;
        return {u, 0.0, 0.0, false};
    }
}

ClosedLoopLog closed_loop(SurrogatePlant& plant, CycleController& controller,
                          const Eigen::VectorXd& t_ref_profile,
                          const Eigen::VectorXd& speed_profile, PlantState initial) {
    if (t_ref_profile.size() != speed_profile.size())
        throw std::invalid_argument("closed_loop: profile length mismatch");

    ClosedLoopLog log;
    PlantState state = initial;
    for (Eigen::Index k = 0; k < t_ref_profile.size(); ++k) {
        const double tref = t_ref_profile[k];
        const double speed = speed_profile[k];

        const auto t0 = std::chrono::steady_clock::now();
        const ControlDecision dec = controller.decide(state, tref, speed);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        log.cycle.push_back(k);
        log.tref.push_back(tref);
        log.fq.push_back(dec.u[0]);
        log.soi.push_back(dec.u[1]);
        log.vgt.push_back(dec.u[2]);
        log.tout.push_back(state.t_out);
        log.pman.push_back(state.p_man);
        log.nox.push_back(state.nox);
        log.slack.push_back(dec.slack);
        log.cost.push_back(dec.cost);
        log.solve_us.push_back(secs * 1e6);
        log.converged.push_back(dec.converged ? 1 : 0);
        log.speed.push_back(speed);

        state = plant.step(state, dec.u, speed);
    }
    return log;
}

PlantState plant_steady_state(const SurrogatePlant& plant, const Eigen::Vector3d& u,
                              double speed) {
    PlantState s;
    s.speed = speed;
    s.turbo_lag = plant.boost_command(u[2]);
    s.p_man = std::max(1.0, s.turbo_lag);
    s.t_out = plant.steady_torque(u[0], u[1], speed);
    s.nox = std::max(0.0, plant.steady_nox(u[0], u[1], s.p_man, speed));
    return s;
}

void save_log(const std::string& path, const ClosedLoopLog& log) {
    csv::Table t;
    t.names = {"cycle", "tref_nm", "fq",    "soi",  "vgt",      "tout",
               "pman",  "nox",     "slack", "cost", "solve_us", "converged"};
    t.cols.resize(t.names.size());
    for (long long c : log.cycle) t.cols[0].push_back(static_cast<double>(c));
    t.cols[1] = log.tref;
    t.cols[2] = log.fq;
    t.cols[3] = log.soi;
    t.cols[4] = log.vgt;
    t.cols[5] = log.tout;
    t.cols[6] = log.pman;
    t.cols[7] = log.nox;
    t.cols[8] = log.slack;
    t.cols[9] = log.cost;
    t.cols[10] = log.solve_us;
    for (int c : log.converged) t.cols[11].push_back(c);
    csv::write(path, t);
}

ClosedLoopLog load_log(const std::string& path) {
    const csv::Table t = csv::read(path);
    ClosedLoopLog log;
    for (double c : t.column("cycle")) log.cycle.push_back(static_cast<long long>(std::llround(c)));
    log.tref = t.column("tref_nm");
    log.fq = t.column("fq");
    log.soi = t.column("soi");
    log.vgt = t.column("vgt");
    log.tout = t.column("tout");
    log.pman = t.column("pman");
    log.nox = t.column("nox");
    log.slack = t.column("slack");
    log.cost = t.column("cost");
    log.solve_us = t.column("solve_us");
    for (double c : t.column("converged")) log.converged.push_back(c != 0.0 ? 1 : 0);
    log.speed.assign(log.size(), 0.0);
    return log;
}

}  // namespace lpvmpc
