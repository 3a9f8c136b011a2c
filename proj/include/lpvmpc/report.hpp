#pragma once

#include <string>
#include <vector>

#include "lpvmpc/mpc.hpp"

namespace lpvmpc {

/// Table-style comparison of controllers against a benchmark run on the same
/// reference profile.
struct ControllerRow {
    std::string name;
    double nox_change_pct = 0.0;   // 100 * (mean NOx - mean NOx_bm) / mean NOx_bm
    double fuel_change_pct = 0.0;  // analogous on total fuel
    double load_error_pct = 0.0;   // NRMSE of torque vs reference
    double mean_step_ms = 0.0;     // measured controller time per cycle
    long long violation_cycles = 0;  // cycles with NOx above the bound
    double mean_nox_ppm = 0.0;
    double total_fuel_mg = 0.0;
};

struct ImprovementReport {
    int schema_version = 1;
    std::string reference_controller;
    double nox_bound_ppm = 500.0;
    std::vector<ControllerRow> rows;  // benchmark row first, deltas vs itself = 0
};

/// Logs must cover the identical reference profile (checked cycle by cycle).
ImprovementReport compute_report(const ClosedLoopLog& benchmark,
                                 const std::vector<std::string>& names,
                                 const std::vector<const ClosedLoopLog*>& logs,
                                 double nox_bound_ppm = 500.0);

void save_report(const std::string& path, const ImprovementReport& report);
ImprovementReport load_report(const std::string& path);

// --- Seeded profile generators ---------------------------------------------------

/// Piecewise-constant torque targets: uniform levels in [lo, hi] N*m held for a
/// uniform number of cycles in [hold_lo, hold_hi].
Eigen::VectorXd random_step_profile(Eigen::Index cycles, double lo, double hi, int hold_lo,
                                    int hold_hi, std::uint64_t seed);

/// Random actuator excitation within the given bounds (steps with dwell),
/// for identification data generation.
Eigen::MatrixXd random_excitation(Eigen::Index cycles, const BoundSet& bounds, int hold_lo,
                                  int hold_hi, std::uint64_t seed);

/// Speed profile switching among the given levels with uniform dwell.
Eigen::VectorXd random_speed_profile(Eigen::Index cycles, const std::vector<double>& levels,
                                     int hold_lo, int hold_hi, std::uint64_t seed);

}  // namespace lpvmpc
