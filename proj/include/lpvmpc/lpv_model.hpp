#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "lpvmpc/scaler.hpp"
#include "lpvmpc/trajectory.hpp"

namespace lpvmpc {

/// Kernel width and per-state regularization weights of the LS-SVM fit.
/// sigma divides the squared scheduling distance directly (exp(-d2 / (2 sigma))),
/// so it carries units of squared scheduling distance.
struct KernelConfig {
    double sigma = 1.0;
    Eigen::VectorXd gamma;  // one positive weight per state dimension

    void validate(Eigen::Index n_x) const;
};

/// State-space matrices frozen at one scheduling point.
struct FrozenLti {
    Eigen::MatrixXd A;         // n_x x n_x
    Eigen::MatrixXd B;         // n_x x n_u
    Eigen::VectorXd p_frozen;  // scheduling vector the matrices were evaluated at
};

/// RBF kernel value in (0, 1]; 1 iff p_i == p_j; symmetric in its arguments.
double rbf_kernel(const Eigen::VectorXd& p_i, const Eigen::VectorXd& p_j, double sigma);

/// N x N Gram matrix: Omega_jk = x(j)' K(p_j,p_k) x(k) + u(j)' K(p_j,p_k) u(k).
/// Symmetric positive semidefinite by construction (Schur products of PSD factors).
Eigen::MatrixXd build_omega(const Eigen::MatrixXd& train_x, const Eigen::MatrixXd& train_u,
                            const Eigen::MatrixXd& train_p, double sigma);

struct FitDiagnostics {
    double identity_rel_err = 0.0;  // max componentwise residual error vs gamma^-1 alpha
    int refinement_steps = 0;
    bool jitter_applied = false;
};

/// Kernel-based LPV model in dual form. All stored arrays and all model-level
/// evaluations are in scaled coordinates; signal-level helpers below handle
/// physical units.
class LpvModel {
public:
    LpvModel() = default;

    /// Solve the dual system per state dimension: alpha_i = (Omega + gamma_i^-1 I)^-1 X1_i.
    /// X0/U/P hold N samples of x(k), u(k), p(k); X1 the matching x(k+1) targets.
    /// The returned model satisfies the self-consistency identity
    /// x(k+1) - prediction(k) == gamma^-1 alpha(k) to solver tolerance (refined
    /// iteratively until below 1e-9 componentwise relative error).
    static LpvModel fit(const Eigen::MatrixXd& X0, const Eigen::MatrixXd& U,
                        const Eigen::MatrixXd& P, const Eigen::MatrixXd& X1,
                        const KernelConfig& config, FitDiagnostics* diag = nullptr);

    /// A(p) = sum_j alpha_j x(j)' K(p_j, p);  B(p) = sum_j alpha_j u(j)' K(p_j, p).
    FrozenLti eval_matrices(const Eigen::VectorXd& p) const;

    /// One-step prediction A(p) x + B(p) u, evaluated in fused kernel form.
    Eigen::VectorXd predict_one_step(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                     const Eigen::VectorXd& p) const;

    /// Row-wise one-step predictions for a batch of samples.
    Eigen::MatrixXd predict_batch(const Eigen::MatrixXd& X0, const Eigen::MatrixXd& U,
                                  const Eigen::MatrixXd& P) const;

    /// Free-run simulation: feeds its own predicted state forward. Throws with
    /// the offending cycle index if the state leaves the finite range.
    Eigen::MatrixXd simulate(const Eigen::VectorXd& x0, const Eigen::MatrixXd& U,
                             const Eigen::MatrixXd& P) const;

    /// Residual identity check: max over samples and state dims of the relative
    /// mismatch between the training residual and gamma^-1 alpha.
    double verify_identity() const;

    Eigen::Index sample_count() const { return alpha_.rows(); }
    Eigen::Index state_dim() const { return train_x_.cols(); }
    Eigen::Index input_dim() const { return train_u_.cols(); }
    Eigen::Index schedule_dim() const { return train_p_.cols(); }

    const Eigen::MatrixXd& alpha() const { return alpha_; }
    const Eigen::MatrixXd& train_x() const { return train_x_; }
    const Eigen::MatrixXd& train_u() const { return train_u_; }
    const Eigen::MatrixXd& train_p() const { return train_p_; }
    const Eigen::MatrixXd& train_x_next() const { return train_x1_; }
    const KernelConfig& kernel() const { return kernel_; }

    // Scalers mapping physical signals to the scaled fit coordinates. Identity
    // (offset 0, span 1) when the model was fitted from already-scaled data.
    const Scaler& x_scaler() const { return x_scaler_; }
    const Scaler& u_scaler() const { return u_scaler_; }
    const Scaler& p_scaler() const { return p_scaler_; }
    const std::vector<std::string>& schedule_channels() const { return schedule_; }

    void set_scalers(Scaler x, Scaler u, Scaler p, std::vector<std::string> schedule);

    /// Reassemble a model from stored arrays (deserialization path).
    static LpvModel from_parts(Eigen::MatrixXd alpha, Eigen::MatrixXd X0, Eigen::MatrixXd U,
                               Eigen::MatrixXd P, Eigen::MatrixXd X1, KernelConfig kernel);

private:
    Eigen::MatrixXd alpha_;     // N x n_x dual coefficients
    Eigen::MatrixXd train_x_;   // N x n_x
    Eigen::MatrixXd train_u_;   // N x n_u
    Eigen::MatrixXd train_p_;   // N x n_p
    Eigen::MatrixXd train_x1_;  // N x n_x next-step targets (for the identity check)
    KernelConfig kernel_;
    Scaler x_scaler_, u_scaler_, p_scaler_;
    std::vector<std::string> schedule_;
};

/// Constant linear model fitted by least squares on the same transition data;
/// the ARX baseline counterpart of LpvModel::fit. p_frozen is set to the
/// column mean of P (a nominal operating point).
FrozenLti fit_arx(const Eigen::MatrixXd& X0, const Eigen::MatrixXd& U, const Eigen::MatrixXd& X1,
                  const Eigen::MatrixXd& P);

// --- Engine-signal layer -----------------------------------------------------

/// Which signals form the scheduling vector p(k). Names refer to CSV columns;
/// the default follows the input-scheduled gain structure (FQ, SOI).
struct ScheduleConfig {
    std::vector<std::string> channels = {"fq_mg", "soi_cad"};
};

/// Min-max scale the training slice, build the transition set and fit.
LpvModel fit_engine_model(const Trajectory& train, const ScheduleConfig& schedule,
                          const KernelConfig& config, FitDiagnostics* diag = nullptr);

/// Least-squares constant (A, B) on the scaled training transitions, bundled
/// with the scalers needed to run it through the same controller pipeline.
struct FittedArx {
    FrozenLti lti;
    Scaler x_scaler, u_scaler;
};
FittedArx fit_engine_arx(const Trajectory& train);

/// Scheduling vector for a physical input row, using the model's p scaler.
Eigen::VectorXd schedule_from_inputs(const LpvModel& model, double fq, double soi, double vgt);

/// Free-run the model over a trajectory's inputs; returns physical-unit state
/// predictions (N x 3), starting from the trajectory's first measured state.
Eigen::MatrixXd simulate_engine(const LpvModel& model, const Trajectory& traj);

/// One-step-ahead predictions over a trajectory, in physical units (N-1 x 3).
Eigen::MatrixXd predict_engine_one_step(const LpvModel& model, const Trajectory& traj);

// --- Serialization -----------------------------------------------------------

void save_model(const std::string& path, const LpvModel& model);
LpvModel load_model(const std::string& path);
void save_arx(const std::string& path, const FittedArx& arx);
FittedArx load_arx(const std::string& path);

}  // namespace lpvmpc
