#pragma once

// Test-only oracles, independent of the solver paths they check.

#include <random>

#include "lpvmpc/lpv_model.hpp"
#include "lpvmpc/mpc.hpp"

namespace lpvmpc::testing {

/// Exhaustive-grid reference for an Nc = 1 condensed problem: a 41^3 grid over
/// the input box with the per-point optimal slack (the smallest slack that
/// makes every softened NOx row feasible). Cost is evaluated term by term.
struct GridBest {
    double cost;
    Eigen::Vector3d u;
    double slack;
};

inline GridBest grid_oracle(const CondensedQp& c, int points_per_axis = 41) {
    if (c.cfg.nc != 1) throw std::invalid_argument("grid_oracle: needs Nc == 1");
    const Eigen::Vector3d lo = c.cfg.bounds.input_min();
    const Eigen::Vector3d hi = c.cfg.bounds.input_max();
    GridBest best{std::numeric_limits<double>::infinity(), lo, 0.0};
    Eigen::VectorXd z(4);
    for (int i = 0; i < points_per_axis; ++i) {
        for (int j = 0; j < points_per_axis; ++j) {
            for (int k = 0; k < points_per_axis; ++k) {
                z[0] = lo[0] + (hi[0] - lo[0]) * i / (points_per_axis - 1);
                z[1] = lo[1] + (hi[1] - lo[1]) * j / (points_per_axis - 1);
                z[2] = lo[2] + (hi[2] - lo[2]) * k / (points_per_axis - 1);
                double s = 0.0;
                for (int step = 1; step <= c.cfg.np; ++step) {
                    const double nox =
                        c.G[step - 1].row(2).dot(z.head(3)) + c.h[step - 1][2];
                    s = std::max(s, nox - c.cfg.bounds.nox_max);
                }
                z[3] = s;
                const double cost = mpc_cost(c, z);
                if (cost < best.cost) {
                    best.cost = cost;
                    best.u = z.head(3);
                    best.slack = s;
                }
            }
        }
    }
    return best;
}

/// Random but physically plausible condensed problem (stable scaled dynamics,
/// engine-magnitude scalers, Table-1 bounds).
inline CondensedQp random_instance(std::mt19937_64& rng, const MpcConfig& base_cfg = {}) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> sym(-1.0, 1.0);

    FrozenLti lti;
    lti.A = 0.3 * Eigen::Matrix3d::NullaryExpr([&]() { return sym(rng); });
    lti.A.diagonal() = Eigen::Vector3d::NullaryExpr([&]() { return 0.4 + 0.5 * unit(rng); });
    lti.B = 0.4 * Eigen::Matrix3d::NullaryExpr([&]() { return sym(rng); });
    lti.B.diagonal().array() += 0.3;
    lti.p_frozen = Eigen::Vector2d(unit(rng), unit(rng));

    const Scaler xs = Scaler::from_offsets_spans(Eigen::Vector3d(0.0, 1.0, 0.0),
                                                 Eigen::Vector3d(360.0, 1.8, 900.0));
    const Scaler us = Scaler::from_offsets_spans(Eigen::Vector3d(10.0, -2.0, 70.0),
                                                 Eigen::Vector3d(70.0, 13.0, 30.0));

    MpcConfig cfg = base_cfg;
    cfg.nc = 1;
    const Eigen::Vector3d x0(50.0 + 300.0 * unit(rng), 1.0 + 1.5 * unit(rng),
                             80.0 + 700.0 * unit(rng));
    const Eigen::VectorXd refs =
        Eigen::VectorXd::Constant(cfg.np, 60.0 + 280.0 * unit(rng));
    const Eigen::Vector3d u_prev(10.0 + 70.0 * unit(rng), -2.0 + 13.0 * unit(rng),
                                 70.0 + 30.0 * unit(rng));
    return build_qp(lti, xs, us, x0, refs, u_prev, cfg);
}

}  // namespace lpvmpc::testing
