#include "lpvmpc/plant.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

namespace lpvmpc {

namespace {

constexpr double kFqMin = 10.0, kFqMax = 80.0;
constexpr double kSoiMin = -2.0, kSoiMax = 11.0;
constexpr double kVgtMin = 70.0, kVgtMax = 100.0;
constexpr double kAmbientBar = 1.0;

}  // namespace

double SurrogatePlant::boost_command(double vgt) const {
    return params_.boost_base + params_.boost_per_pct * (vgt - 70.0);
}

double SurrogatePlant::torque_efficiency(double soi) const {
    const double d = soi - params_.eta_peak_soi;
    return 1.0 - params_.eta_curvature * d * d;
}

double SurrogatePlant::speed_factor(double speed) const {
    return 1.0 + params_.speed_torque_gain * (1500.0 - speed) / 1500.0;
}

double SurrogatePlant::steady_torque(double fq, double soi, double speed) const {
    return params_.torque_per_mg * fq * torque_efficiency(soi) * speed_factor(speed);
}

double SurrogatePlant::steady_nox(double fq, double soi, double p_man, double speed) const {
    return params_.nox_scale * std::pow(fq, params_.nox_fq_exponent) *
           std::exp(params_.nox_soi_slope * (params_.eta_peak_soi - soi)) /
           std::sqrt(p_man) * std::sqrt(1500.0 / speed);
}

PlantState SurrogatePlant::step(const PlantState& state, const Eigen::Vector3d& u,
                                double speed) const {
    if (!u.allFinite() || !std::isfinite(speed))
        throw std::invalid_argument("surrogate_step: non-finite input");

    double fq = std::clamp(u[0], kFqMin, kFqMax);
    double soi = std::clamp(u[1], kSoiMin, kSoiMax);
    double vgt = std::clamp(u[2], kVgtMin, kVgtMax);
    if ((fq != u[0] || soi != u[1] || vgt != u[2]) && !warned_clamp_) {
        std::cerr << "lpvmpc: warning: surrogate plant input clamped to physical range\n";
        warned_clamp_ = true;
    }

    PlantState next;
    next.speed = speed;
    next.turbo_lag = state.turbo_lag + (boost_command(vgt) - state.turbo_lag) / params_.tau_turbo;
    next.p_man = std::max(kAmbientBar, next.turbo_lag);
    next.t_out = state.t_out + (steady_torque(fq, soi, speed) - state.t_out) / params_.tau_torque;
    const double nox_ss = steady_nox(fq, soi, next.p_man, speed);
    next.nox = std::max(0.0, state.nox + (nox_ss - state.nox) / params_.tau_nox);
    return next;
}

Trajectory SurrogatePlant::simulate(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& speed,
                                    PlantState initial) const {
    if (inputs.cols() != 3) throw std::invalid_argument("simulate: inputs must have 3 columns");
    if (inputs.rows() != speed.size())
        throw std::invalid_argument("simulate: input/speed length mismatch");

    Trajectory traj;
    PlantState s = initial;
    for (Eigen::Index k = 0; k < inputs.rows(); ++k) {
        s = step(s, inputs.row(k), speed[k]);
        traj.cycle.push_back(k);
        traj.fq.push_back(inputs(k, 0));
        traj.soi.push_back(inputs(k, 1));
        traj.vgt.push_back(inputs(k, 2));
        traj.t_out.push_back(s.t_out);
        traj.p_man.push_back(s.p_man);
        traj.nox.push_back(s.nox);
        traj.speed.push_back(speed[k]);
    }
    return traj;
}

ArxModel ArxModel::reference() {
    ArxModel m;
    m.A << 0.7286, 7.1252, -0.0019,
           0.0002, 0.9859, 8.9878e-6,
          -0.6105, 33.94287, 0.9076;
    m.B << 1.2639, -1.0899, 1.0084e-5,
          -0.0007, 0.0014, -1.01397e-5,
           2.9360, -8.2453, -0.0106;
    m.C << 1, 0, 0,
           0, 0, 1;
    return m;
}

std::pair<Eigen::Vector3d, Eigen::Vector2d> arx_step(const ArxModel& model,
                                                     const Eigen::Vector3d& x,
                                                     const Eigen::Vector3d& u) {
    return {model.A * x + model.B * u, model.C * x};
}

Eigen::Vector3d feedforward_baseline(double t_ref, double speed, const SurrogatePlant& plant) {
    if (!(t_ref >= 0.0)) throw std::invalid_argument("feedforward_baseline: negative torque request");
    // production-style schedule: slightly advanced at rated speed, more advanced
    // at lower speeds (the behaviour that costs NOx at 1200 rpm)
    const double soi = std::clamp(1.0 + 0.01 * (speed - 1500.0), kSoiMin, kSoiMax);
    const double per_mg = plant.steady_torque(1.0, soi, speed);
    double fq = 0.98 * t_ref / per_mg;
    if (fq > kFqMax)
        throw std::runtime_error("feedforward_baseline: torque request " + std::to_string(t_ref) +
                                 " N*m unreachable at " + std::to_string(speed) + " rpm");
    fq = std::max(fq, kFqMin);
    return {fq, soi, 85.0};
}

Eigen::Vector3d feedforward_baseline_clamped(double t_ref, double speed,
                                             const SurrogatePlant& plant) {
    const double soi = std::clamp(1.0 + 0.01 * (speed - 1500.0), kSoiMin, kSoiMax);
    const double per_mg = plant.steady_torque(1.0, soi, speed);
    const double fq = per_mg > 0.0 ? std::clamp(0.98 * t_ref / per_mg, kFqMin, kFqMax) : kFqMin;
    return {fq, soi, 85.0};
}

}  // namespace lpvmpc
