#include "lpvmpc/lpv_model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <limits>
#include <cmath>
#include <iostream>
#include <stdexcept>

namespace lpvmpc {

namespace {

// Pairwise RBF Gram matrix between scheduling rows of Pa (n_a x n_p) and Pb.
Eigen::MatrixXd kernel_cross(const Eigen::MatrixXd& Pa, const Eigen::MatrixXd& Pb, double sigma) {
    const Eigen::VectorXd na = Pa.rowwise().squaredNorm();
    const Eigen::VectorXd nb = Pb.rowwise().squaredNorm();
    Eigen::MatrixXd d2 = (-2.0 * Pa * Pb.transpose()).colwise() + na;
    d2.rowwise() += nb.transpose();
    return (d2.cwiseMax(0.0) / (-2.0 * sigma)).array().exp();
}

Eigen::VectorXd kernel_row(const Eigen::MatrixXd& P, const Eigen::VectorXd& p, double sigma) {
    return ((P.rowwise() - p.transpose()).rowwise().squaredNorm() / (-2.0 * sigma))
        .array()
        .exp();
}

Scaler identity_scaler(Eigen::Index n) {
    return Scaler::from_offsets_spans(Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n));
}

// Componentwise relative mismatch of (target - Omega a) against ridge*a. Each
// component carries an absolute floor at the rounding level of evaluating the
// residual itself; below that floor the identity is unresolvable in doubles
// and counts as satisfied.
double identity_metric(const Eigen::MatrixXd& omega, const Eigen::VectorXd& a,
                       const Eigen::VectorXd& target, double ridge) {
    const Eigen::Index n = a.size();
    const Eigen::VectorXd r = target - omega * a - ridge * a;
    const Eigen::VectorXd mag = omega.cwiseAbs() * a.cwiseAbs();
    const double acc = std::max(16.0, 2.0 * std::sqrt(static_cast<double>(n)));
    double worst = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        const double floor_k =
            acc * std::numeric_limits<double>::epsilon() *
            (std::abs(target[k]) + mag[k] + std::abs(ridge * a[k]));
        const double excess = std::abs(r[k]) - floor_k;
        if (excess <= 0.0) continue;
        worst = std::max(worst, excess / std::max(std::abs(ridge * a[k]), 1e-300));
    }
    return worst;
}

}  // namespace

void KernelConfig::validate(Eigen::Index n_x) const {
    if (!(sigma > 0.0)) throw std::invalid_argument("KernelConfig: sigma must be positive");
    if (gamma.size() != n_x)
        throw std::invalid_argument("KernelConfig: gamma must have one entry per state dim");
    for (Eigen::Index i = 0; i < gamma.size(); ++i)
        if (!(gamma[i] > 0.0)) throw std::invalid_argument("KernelConfig: gamma must be positive");
}

double rbf_kernel(const Eigen::VectorXd& p_i, const Eigen::VectorXd& p_j, double sigma) {
    if (p_i.size() != p_j.size())
        throw std::invalid_argument("rbf_kernel: scheduling dimension mismatch");
    if (!(sigma > 0.0)) throw std::invalid_argument("rbf_kernel: sigma must be positive");
    return std::exp(-(p_i - p_j).squaredNorm() / (2.0 * sigma));
}

Eigen::MatrixXd build_omega(const Eigen::MatrixXd& train_x, const Eigen::MatrixXd& train_u,
                            const Eigen::MatrixXd& train_p, double sigma) {
    const Eigen::Index n = train_x.rows();
    if (train_u.rows() != n || train_p.rows() != n)
        throw std::invalid_argument("build_omega: sample count mismatch");
    if (!(sigma > 0.0)) throw std::invalid_argument("build_omega: sigma must be positive");

    Eigen::MatrixXd K = kernel_cross(train_p, train_p, sigma);
    Eigen::MatrixXd omega =
        K.cwiseProduct(train_x * train_x.transpose() + train_u * train_u.transpose());
    // enforce exact symmetry against rounding in the two Gram products
    omega = (0.5 * (omega + omega.transpose())).eval();
    return omega;
}

LpvModel LpvModel::fit(const Eigen::MatrixXd& X0, const Eigen::MatrixXd& U,
                       const Eigen::MatrixXd& P, const Eigen::MatrixXd& X1,
                       const KernelConfig& config, FitDiagnostics* diag) {
    const Eigen::Index n = X0.rows();
    if (n < 2) throw std::invalid_argument("LpvModel::fit: need at least 2 transitions");
    if (U.rows() != n || P.rows() != n || X1.rows() != n || X1.cols() != X0.cols())
        throw std::invalid_argument("LpvModel::fit: inconsistent sample dimensions");
    config.validate(X0.cols());

    LpvModel m;
    m.train_x_ = X0;
    m.train_u_ = U;
    m.train_p_ = P;
    m.train_x1_ = X1;
    m.kernel_ = config;
    m.x_scaler_ = identity_scaler(X0.cols());
    m.u_scaler_ = identity_scaler(U.cols());
    m.p_scaler_ = identity_scaler(P.cols());
    m.alpha_.resize(n, X0.cols());

    const Eigen::MatrixXd omega = build_omega(X0, U, P, config.sigma);

    FitDiagnostics local;
    Eigen::LLT<Eigen::MatrixXd> llt;
    double factored_ridge = -1.0;
    for (Eigen::Index i = 0; i < X0.cols(); ++i) {
        const double ridge = 1.0 / config.gamma[i];
        if (ridge != factored_ridge) {
            Eigen::MatrixXd M = omega;
            M.diagonal().array() += ridge;
            llt.compute(M);
            if (llt.info() != Eigen::Success) {
                std::cerr << "lpvmpc: warning: Gram factorization failed, adding 1e-10 jitter\n";
                M.diagonal().array() += 1e-10;
                llt.compute(M);
                local.jitter_applied = true;
                if (llt.info() != Eigen::Success)
                    throw std::runtime_error("LpvModel::fit: Gram matrix not factorizable");
            }
            factored_ridge = ridge;
        }

        const Eigen::VectorXd target = X1.col(i);
        Eigen::VectorXd a = llt.solve(target);
        // Iterative refinement: drives the solve residual, which is exactly the
        // mismatch in the residual == gamma^-1 alpha identity, to rounding level.
        for (int it = 0; it < 10; ++it) {
            if (identity_metric(omega, a, target, ridge) <= 1e-9) break;
            a += llt.solve(target - omega * a - ridge * a);
            local.refinement_steps++;
        }
        m.alpha_.col(i) = a;
    }

    local.identity_rel_err = m.verify_identity();
    if (diag) *diag = local;
    return m;
}

LpvModel LpvModel::from_parts(Eigen::MatrixXd alpha, Eigen::MatrixXd X0, Eigen::MatrixXd U,
                              Eigen::MatrixXd P, Eigen::MatrixXd X1, KernelConfig kernel) {
    LpvModel m;
    m.alpha_ = std::move(alpha);
    m.train_x_ = std::move(X0);
    m.train_u_ = std::move(U);
    m.train_p_ = std::move(P);
    m.train_x1_ = std::move(X1);
    m.kernel_ = std::move(kernel);
    m.x_scaler_ = identity_scaler(m.train_x_.cols());
    m.u_scaler_ = identity_scaler(m.train_u_.cols());
    m.p_scaler_ = identity_scaler(m.train_p_.cols());
    return m;
}

FrozenLti LpvModel::eval_matrices(const Eigen::VectorXd& p) const {
    if (p.size() != schedule_dim())
        throw std::invalid_argument("eval_matrices: scheduling dimension mismatch");
    const Eigen::VectorXd k = kernel_row(train_p_, p, kernel_.sigma);
    FrozenLti lti;
    lti.A = alpha_.transpose() * (k.asDiagonal() * train_x_);
    lti.B = alpha_.transpose() * (k.asDiagonal() * train_u_);
    lti.p_frozen = p;
    return lti;
}

Eigen::VectorXd LpvModel::predict_one_step(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                           const Eigen::VectorXd& p) const {
    if (x.size() != state_dim() || u.size() != input_dim() || p.size() != schedule_dim())
        throw std::invalid_argument("predict_one_step: dimension mismatch");
    const Eigen::VectorXd k = kernel_row(train_p_, p, kernel_.sigma);
    // alpha' (k o (Xtrain x + Utrain u)) == A(p) x + B(p) u
    const Eigen::VectorXd w = k.cwiseProduct(train_x_ * x + train_u_ * u);
    return alpha_.transpose() * w;
}

Eigen::MatrixXd LpvModel::predict_batch(const Eigen::MatrixXd& X0, const Eigen::MatrixXd& U,
                                        const Eigen::MatrixXd& P) const {
    if (X0.rows() != U.rows() || X0.rows() != P.rows())
        throw std::invalid_argument("predict_batch: sample count mismatch");
    const Eigen::MatrixXd K = kernel_cross(train_p_, P, kernel_.sigma);
    const Eigen::MatrixXd cross =
        K.cwiseProduct(train_x_ * X0.transpose() + train_u_ * U.transpose());
    return cross.transpose() * alpha_;
}

Eigen::MatrixXd LpvModel::simulate(const Eigen::VectorXd& x0, const Eigen::MatrixXd& U,
                                   const Eigen::MatrixXd& P) const {
    if (U.rows() != P.rows()) throw std::invalid_argument("simulate: sequence length mismatch");
    const Eigen::Index steps = U.rows();
    Eigen::MatrixXd X(steps, state_dim());
    Eigen::VectorXd x = x0;
    for (Eigen::Index k = 0; k < steps; ++k) {
        x = predict_one_step(x, U.row(k), P.row(k));
        if (!x.allFinite())
            throw std::runtime_error("simulate: non-finite state at cycle " + std::to_string(k));
        X.row(k) = x;
    }
    return X;
}

double LpvModel::verify_identity() const {
    // The model's prediction at training sample k is sum_j alpha_j Omega_jk;
    // evaluating it through the same Gram matrix the fit refined against keeps
    // the check independent of rounding differences between kernel routes.
    const Eigen::MatrixXd omega = build_omega(train_x_, train_u_, train_p_, kernel_.sigma);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < state_dim(); ++i)
        worst = std::max(worst, identity_metric(omega, alpha_.col(i), train_x1_.col(i),
                                                1.0 / kernel_.gamma[i]));
    return worst;
}

void LpvModel::set_scalers(Scaler x, Scaler u, Scaler p, std::vector<std::string> schedule) {
    x_scaler_ = std::move(x);
    u_scaler_ = std::move(u);
    p_scaler_ = std::move(p);
    schedule_ = std::move(schedule);
}

FrozenLti fit_arx(const Eigen::MatrixXd& X0, const Eigen::MatrixXd& U, const Eigen::MatrixXd& X1,
                  const Eigen::MatrixXd& P) {
    const Eigen::Index n = X0.rows();
    if (U.rows() != n || X1.rows() != n)
        throw std::invalid_argument("fit_arx: sample count mismatch");
    Eigen::MatrixXd Z(n, X0.cols() + U.cols());
    Z << X0, U;
    const Eigen::MatrixXd theta = Z.colPivHouseholderQr().solve(X1);  // (nx+nu) x nx
    FrozenLti lti;
    lti.A = theta.topRows(X0.cols()).transpose();
    lti.B = theta.bottomRows(U.cols()).transpose();
    lti.p_frozen = P.colwise().mean();
    return lti;
}

// --- Engine-signal layer -----------------------------------------------------

namespace {

Eigen::MatrixXd schedule_matrix(const Trajectory& traj, const std::vector<std::string>& channels) {
    Eigen::MatrixXd P(traj.size(), channels.size());
    for (std::size_t c = 0; c < channels.size(); ++c) {
        const std::string& name = channels[c];
        const std::vector<double>* src = nullptr;
        if (name == "fq_mg") src = &traj.fq;
        else if (name == "soi_cad") src = &traj.soi;
        else if (name == "vgt_pct") src = &traj.vgt;
        else if (name == "tout_nm") src = &traj.t_out;
        else if (name == "pman_bar") src = &traj.p_man;
        else if (name == "nox_ppm") src = &traj.nox;
        else throw std::invalid_argument("schedule: unknown channel '" + name + "'");
        for (std::size_t k = 0; k < traj.size(); ++k) P(k, c) = (*src)[k];
    }
    return P;
}

}  // namespace

LpvModel fit_engine_model(const Trajectory& train, const ScheduleConfig& schedule,
                          const KernelConfig& config, FitDiagnostics* diag) {
    train.validate();
    const Eigen::MatrixXd x_raw = train.states();
    const Eigen::MatrixXd u_raw = train.inputs();
    const Eigen::MatrixXd p_raw = schedule_matrix(train, schedule.channels);

    const Scaler xs = Scaler::fit(x_raw);
    const Scaler us = Scaler::fit(u_raw);
    const Scaler ps = Scaler::fit(p_raw);

    const Eigen::Index n = x_raw.rows() - 1;
    const Eigen::MatrixXd xs_all = xs.apply(x_raw);
    LpvModel m = LpvModel::fit(xs_all.topRows(n), us.apply(u_raw.topRows(n)),
                               ps.apply(p_raw.topRows(n)), xs_all.bottomRows(n), config, diag);
    m.set_scalers(xs, us, ps, schedule.channels);
    return m;
}

FittedArx fit_engine_arx(const Trajectory& train) {
    train.validate();
    const Eigen::MatrixXd x_raw = train.states();
    const Eigen::MatrixXd u_raw = train.inputs();
    const Scaler xs = Scaler::fit(x_raw);
    const Scaler us = Scaler::fit(u_raw);

    const Eigen::Index n = x_raw.rows() - 1;
    const Eigen::MatrixXd xs_all = xs.apply(x_raw);
    FittedArx arx;
    arx.lti = fit_arx(xs_all.topRows(n), us.apply(u_raw.topRows(n)), xs_all.bottomRows(n),
                      Eigen::MatrixXd::Zero(n, 2));
    arx.x_scaler = xs;
    arx.u_scaler = us;
    return arx;
}

Eigen::VectorXd schedule_from_inputs(const LpvModel& model, double fq, double soi, double vgt) {
    const auto& channels = model.schedule_channels();
    Eigen::VectorXd p_raw(static_cast<Eigen::Index>(channels.size()));
    for (std::size_t c = 0; c < channels.size(); ++c) {
        if (channels[c] == "fq_mg") p_raw[c] = fq;
        else if (channels[c] == "soi_cad") p_raw[c] = soi;
        else if (channels[c] == "vgt_pct") p_raw[c] = vgt;
        else
            throw std::invalid_argument(
                "schedule_from_inputs: channel '" + channels[c] +
                "' is not an input signal; controller scheduling needs input channels");
    }
    return model.p_scaler().apply_row(p_raw);
}

Eigen::MatrixXd simulate_engine(const LpvModel& model, const Trajectory& traj) {
    traj.validate();
    const Eigen::MatrixXd u_scaled = model.u_scaler().apply(traj.inputs());
    const Eigen::MatrixXd p_scaled =
        model.p_scaler().apply(schedule_matrix(traj, model.schedule_channels()));
    const Eigen::VectorXd x0 = model.x_scaler().apply_row(traj.states().row(0));
    // free run over transitions: state k predicted from inputs up to k-1
    const Eigen::Index n = traj.size() - 1;
    const Eigen::MatrixXd xs = model.simulate(x0, u_scaled.topRows(n), p_scaled.topRows(n));
    return model.x_scaler().invert(xs);
}

Eigen::MatrixXd predict_engine_one_step(const LpvModel& model, const Trajectory& traj) {
    traj.validate();
    const Eigen::Index n = traj.size() - 1;
    const Eigen::MatrixXd x_scaled = model.x_scaler().apply(traj.states());
    const Eigen::MatrixXd u_scaled = model.u_scaler().apply(traj.inputs());
    const Eigen::MatrixXd p_scaled =
        model.p_scaler().apply(schedule_matrix(traj, model.schedule_channels()));
    const Eigen::MatrixXd pred =
        model.predict_batch(x_scaled.topRows(n), u_scaled.topRows(n), p_scaled.topRows(n));
    return model.x_scaler().invert(pred);
}

}  // namespace lpvmpc
