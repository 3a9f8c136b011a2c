#pragma once

#include <Eigen/Core>
#include <utility>

#include "lpvmpc/trajectory.hpp"

namespace lpvmpc {

/// Surrogate engine internal state, advanced one engine cycle at a time.
struct PlantState {
    double t_out = 0.0;      // N*m
    double p_man = 1.0;      // bar, >= 1.0 ambient
    double nox = 0.0;        // ppm, >= 0
    double turbo_lag = 1.0;  // bar, first-order boost state
    double speed = 1500.0;   // rpm
};

/// Fixed constants of the surrogate engine maps. The nonlinearities are the
/// point: torque gain scheduled by SOI, exponential NOx sensitivity to SOI,
/// boost dilution of NOx. Mid-range inputs at 1500 rpm land near 200 N*m,
/// 1.8 bar, 300 ppm.
struct SurrogateParams {
    double torque_per_mg = 4.5;      // c1: N*m per mg/cycle at peak efficiency
    double eta_curvature = 0.006;    // quadratic efficiency loss per CAD^2
    double eta_peak_soi = 3.0;       // aTDC CAD of peak torque efficiency
    double nox_scale = 3.5;          // c2: ppm scale
    double nox_soi_slope = 0.12;     // c3: per CAD, NOx rises as SOI advances
    double nox_fq_exponent = 1.3;
    double boost_base = 1.0;         // bar at VGT = 70 %
    double boost_per_pct = 0.055;    // bar per VGT %
    double tau_turbo = 8.0;          // cycles
    double tau_torque = 2.0;         // cycles
    double tau_nox = 3.0;            // cycles
    double speed_torque_gain = 0.1;  // relative torque gain per relative speed drop
};

class SurrogatePlant {
public:
    explicit SurrogatePlant(SurrogateParams params = {}) : params_(params) {}

    const SurrogateParams& params() const { return params_; }

    /// Steady-state maps (used by the feedforward baseline and by tests).
    double boost_command(double vgt) const;
    double torque_efficiency(double soi) const;
    double speed_factor(double speed) const;
    double steady_torque(double fq, double soi, double speed) const;
    double steady_nox(double fq, double soi, double p_man, double speed) const;

    /// Advance one engine cycle. Inputs outside the physical ranges of the
    /// constraint table are clamped (with a one-time warning on stderr).
    PlantState step(const PlantState& state, const Eigen::Vector3d& u, double speed) const;

    /// Run an input/speed profile from a default ambient start, returning the
    /// full trajectory (states logged after each step).
    Trajectory simulate(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& speed,
                        PlantState initial = {}) const;

private:
    SurrogateParams params_;
    mutable bool warned_clamp_ = false;
};

/// The published constant-matrix engine baseline: x' = Ax + Bu, y = Cx with
/// y = (T_out, NOx). Values are fixed; spectral radius of A is < 1.
struct ArxModel {
    Eigen::Matrix3d A;
    Eigen::Matrix3d B;
    Eigen::Matrix<double, 2, 3> C;

    static ArxModel reference();
};

/// One step of the constant baseline model: (x_next, y).
std::pair<Eigen::Vector3d, Eigen::Vector2d> arx_step(const ArxModel& model,
                                                     const Eigen::Vector3d& x,
                                                     const Eigen::Vector3d& u);

/// Static production-style map: fuel from the inverted steady torque curve with
/// a fixed 2 % shortfall, SOI schedule linear in speed (advancing at lower
/// speed), VGT pinned at 85 %. Throws if the requested torque is unreachable.
Eigen::Vector3d feedforward_baseline(double t_ref, double speed,
                                     const SurrogatePlant& plant = SurrogatePlant{});

/// Same map with the fuel command saturated instead of throwing; used to seed
/// controllers and warm-start states for arbitrary reference profiles.
Eigen::Vector3d feedforward_baseline_clamped(double t_ref, double speed,
                                             const SurrogatePlant& plant = SurrogatePlant{});

}  // namespace lpvmpc
