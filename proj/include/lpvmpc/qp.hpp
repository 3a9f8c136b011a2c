#pragma once

#include <Eigen/Core>

namespace lpvmpc {

/// Small dense convex quadratic program
///   min 0.5 z'Hz + g'z   s.t.  lb <= z <= ub,  C z <= d.
/// H must be symmetric positive definite (see regularize_hessian).
struct QpProblem {
    Eigen::MatrixXd H;
    Eigen::VectorXd g;
    Eigen::VectorXd lb, ub;  // +-infinity allowed
    Eigen::MatrixXd C;       // may have zero rows
    Eigen::VectorXd d;

    Eigen::Index dim() const { return g.size(); }
    void validate() const;
};

struct QpSolution {
    Eigen::VectorXd z;
    double objective = 0.0;  // 0.5 z'Hz + g'z at the solution
    // max of stationarity, primal feasibility and complementarity, each
    // normalized by the magnitude of the terms entering it (so the value is
    // meaningful regardless of the physical units of the problem data)
    double kkt_residual = 0.0;
    bool converged = false;
    int iterations = 0;
};

/// Ensure min eigenvalue >= floor by shifting the diagonal; returns the shift.
double regularize_hessian(Eigen::MatrixXd& H, double floor = 1e-9);

/// Primal active-set solve from a feasible starting point. Throws if z0 is
/// infeasible beyond tolerance. Box bounds hold exactly at every iterate.
QpSolution solve_qp(const QpProblem& qp, const Eigen::VectorXd& z0);

}  // namespace lpvmpc
