#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace lpvmpc {

/// Per-channel min-max scaling to [0, 1], fitted on training data only.
/// Applying then inverting is the identity to within 1e-12 relative error.
class Scaler {
public:
    Scaler() = default;

    /// Fit from columns of `data` (one channel per column). Throws if any
    /// channel has zero range.
    static Scaler fit(const Eigen::MatrixXd& data);

    /// Like fit, but a constant channel gets span 1 (shift-only) instead of
    /// an error. Used for feature sets that may legitimately hold a channel
    /// constant (e.g. engine speed in a single-speed run).
    static Scaler fit_allow_constant(const Eigen::MatrixXd& data);

    static Scaler from_offsets_spans(Eigen::VectorXd offset, Eigen::VectorXd span);

    Eigen::Index channels() const { return offset_.size(); }
    const Eigen::VectorXd& offset() const { return offset_; }
    const Eigen::VectorXd& span() const { return span_; }

    Eigen::MatrixXd apply(const Eigen::MatrixXd& data) const;
    Eigen::MatrixXd invert(const Eigen::MatrixXd& scaled) const;
    Eigen::VectorXd apply_row(const Eigen::VectorXd& row) const;
    Eigen::VectorXd invert_row(const Eigen::VectorXd& row) const;

    double apply_one(Eigen::Index channel, double v) const;
    double invert_one(Eigen::Index channel, double v) const;

private:
    Eigen::VectorXd offset_;  // per-channel minimum of the fit data
    Eigen::VectorXd span_;    // per-channel max - min, strictly positive
};

}  // namespace lpvmpc
