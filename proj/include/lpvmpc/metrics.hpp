#pragma once

#include <Eigen/Core>

namespace lpvmpc {

/// Normalized root mean square error in percent:
///   100 * RMSE(predicted, measured) / (max(measured) - min(measured)).
/// Requires equal lengths >= 2 and a measured series with nonzero range.
double nrmse(const Eigen::VectorXd& predicted, const Eigen::VectorXd& measured);

}  // namespace lpvmpc
