#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "lpvmpc/mpc.hpp"
#include "lpvmpc/scaler.hpp"

namespace lpvmpc {

/// FC(5->32, tanh) -> LSTM(32) -> FC(32->32, tanh) -> FC(32->3, linear).
/// Weight matrices are stored input-dim x output-dim; batched activations are
/// row-major (batch x dim). LSTM gate order along the 4h axis: i, f, g, o.
struct ImitationNetwork {
    int in = 5, hidden = 32, out = 3;

    Eigen::MatrixXd W1, Wx, Wh, W2, W3;  // in x h, h x 4h, h x 4h, h x h, h x out
    Eigen::VectorXd b1, bl, b2, b3;

    static ImitationNetwork create(int in, int hidden, int out, std::uint64_t seed);
    static ImitationNetwork zeros(int in, int hidden, int out);

    Eigen::Index param_count() const;
    Eigen::VectorXd to_flat() const;
    void from_flat(const Eigen::VectorXd& theta);
    /// Number of weight-matrix entries (bias entries excluded); the L2 penalty
    /// averages over these.
    Eigen::Index weight_count() const;
};

struct LstmCarry {
    Eigen::MatrixXd h, c;  // batch x hidden

    static LstmCarry zeros(Eigen::Index batch, Eigen::Index hidden);
};

/// Stateful batched forward over a window. x_seq holds T matrices (batch x in);
/// returns T matrices (batch x out) and advances the carry in place, so feeding
/// a split sequence through two calls matches a single-shot evaluation.
std::vector<Eigen::MatrixXd> imitation_forward(const ImitationNetwork& net,
                                               const std::vector<Eigen::MatrixXd>& x_seq,
                                               LstmCarry& carry);

/// Mean-squared-error loss over all output entries of a window plus the L2
/// penalty (l2 times the mean of squared weight-matrix entries), with analytic
/// gradients for every parameter. Used by training and by the gradient check.
double imitation_loss_and_grad(const ImitationNetwork& net,
                               const std::vector<Eigen::MatrixXd>& x_seq,
                               const std::vector<Eigen::MatrixXd>& t_seq, double l2,
                               Eigen::VectorXd& grad);

/// Loss only (shared code path with the gradient version).
double imitation_loss(const ImitationNetwork& net, const std::vector<Eigen::MatrixXd>& x_seq,
                      const std::vector<Eigen::MatrixXd>& t_seq, double l2);

// --- Dataset -------------------------------------------------------------------

/// Feature rows (T_out, e_Tout, NOx, P_man, n_rpm) and target rows (FQ, SOI,
/// VGT) in physical units, grouped into contiguous sequences in temporal order.
struct ImitationDataset {
    std::vector<Eigen::MatrixXd> features;  // per sequence: N x 5
    std::vector<Eigen::MatrixXd> targets;   // per sequence: N x 3

    std::size_t total_rows() const;
};

/// Extract the five features and three targets from closed-loop runs. Targets
/// fractionally outside the input bounds are clamped; genuinely out-of-bound
/// rows are rejected (splitting the sequence at the gap).
ImitationDataset collect_dataset(const std::vector<ClosedLoopLog>& runs,
                                 const BoundSet& bounds = {});

void save_dataset(const std::string& path, const ImitationDataset& ds);
ImitationDataset load_dataset(const std::string& path);

/// Contiguous train/validation split over the concatenated row order; the
/// sequence containing the boundary is cut in two.
std::pair<ImitationDataset, ImitationDataset> split_imitation(const ImitationDataset& ds,
                                                              double train_fraction);

// --- Training --------------------------------------------------------------------

struct TrainConfig {
    int minibatch = 512;        // sequence windows per optimizer step
    double learning_rate = 0.01;
    int lr_drop_period = 200;   // epochs
    double lr_drop_factor = 0.5;
    double l2 = 0.8;            // penalty on the mean of squared weights
    int epochs = 300;
    int tbptt_len = 32;         // window length for truncated backprop
    int window_stride = 4;
    double train_fraction = 0.8;
    std::uint64_t seed = 1;

    void validate() const;
};

struct TrainCurves {
    std::vector<int> epoch;
    std::vector<double> learning_rate, train_loss;
    std::vector<Eigen::Vector3d> train_nrmse, val_nrmse;  // percent, per output channel
};

struct TrainedImitation {
    ImitationNetwork net;
    Scaler feature_scaler, target_scaler;  // fitted on the training split
    TrainCurves curves;
};

/// Adaptive-moment gradient descent (beta1 0.9, beta2 0.999, eps 1e-8) on
/// scaled features/targets with the configured TBPTT windowing and learning
/// rate schedule. Deterministic given the seed. Aborts with the last finite
/// checkpoint if the loss diverges.
TrainedImitation train_imitation(const ImitationDataset& dataset, const TrainConfig& cfg);

void save_network(const std::string& path, const TrainedImitation& trained);
TrainedImitation load_network(const std::string& path);

// --- Deployment --------------------------------------------------------------------

/// Stateful clone of the MPC: one forward step per engine cycle, outputs
/// clamped to the input bounds. Carry persists across cycles until reset().
class ImitationController final : public CycleController {
public:
    ImitationController(TrainedImitation trained, BoundSet bounds = {});

    ControlDecision decide(const PlantState& meas, double t_ref, double speed) override;
    Eigen::Vector3d step(const PlantState& meas, double t_ref, double speed);
    void reset();

private:
    ImitationNetwork net_;
    Scaler feature_scaler_, target_scaler_;
    BoundSet bounds_;
    LstmCarry carry_;
};

}  // namespace lpvmpc
