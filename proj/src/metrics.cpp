#include "lpvmpc/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace lpvmpc {

double nrmse(const Eigen::VectorXd& predicted, const Eigen::VectorXd& measured) {
    if (predicted.size() != measured.size())
        throw std::invalid_argument("nrmse: length mismatch (" + std::to_string(predicted.size()) +
                                    " vs " + std::to_string(measured.size()) + ")");
    if (measured.size() < 2) throw std::invalid_argument("nrmse: need at least 2 samples");
    const double range = measured.maxCoeff() - measured.minCoeff();
    if (!(range > 0.0)) throw std::invalid_argument("nrmse: measured series has zero range");
    const double rmse = std::sqrt((predicted - measured).squaredNorm() /
                                  static_cast<double>(measured.size()));
    return 100.0 * rmse / range;
}

}  // namespace lpvmpc
