#pragma once

#include <Eigen/Core>
#include <string>
#include <utility>
#include <vector>

namespace lpvmpc {

/// Time-indexed engine record, one row per engine cycle.
///
/// CSV schema (column order irrelevant, matched by header name):
///   cycle,fq_mg,soi_cad,vgt_pct,tout_nm,pman_bar,nox_ppm,speed_rpm
struct Trajectory {
    std::vector<long long> cycle;  // strictly increasing by 1
    std::vector<double> fq;        // mg/cycle
    std::vector<double> soi;       // crank-angle degrees aTDC
    std::vector<double> vgt;       // percent
    std::vector<double> t_out;     // N*m
    std::vector<double> p_man;     // bar
    std::vector<double> nox;       // ppm
    std::vector<double> speed;     // rpm

    std::size_t size() const { return cycle.size(); }

    /// Validates lengths, cycle monotonicity and finiteness; throws otherwise.
    void validate() const;

    /// N x 3 input matrix [fq soi vgt].
    Eigen::MatrixXd inputs() const;
    /// N x 3 state matrix [t_out p_man nox].
    Eigen::MatrixXd states() const;

    Trajectory slice(std::size_t begin, std::size_t count) const;
};

Trajectory load_trajectory(const std::string& path);
void save_trajectory(const std::string& path, const Trajectory& traj);

/// Contiguous prefix/suffix split; no shuffling (time series).
/// Requires 0 < train_fraction < 1. Both parts are non-empty.
std::pair<Trajectory, Trajectory> split(const Trajectory& traj, double train_fraction);

/// Concatenate in order; cycle indices are preserved.
Trajectory concat(const Trajectory& a, const Trajectory& b);

}  // namespace lpvmpc
