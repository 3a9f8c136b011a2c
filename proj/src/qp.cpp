#include "lpvmpc/qp.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace lpvmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// All constraints in one homogeneous list a'z <= b: general rows first, then
// box rows (finite bounds only).
struct ConstraintSet {
    Eigen::MatrixXd A;
    Eigen::VectorXd b;

    static ConstraintSet assemble(const QpProblem& qp) {
        const Eigen::Index n = qp.dim();
        std::vector<Eigen::Index> box_rows;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (std::isfinite(qp.ub[j])) box_rows.push_back(2 * j);
            if (std::isfinite(qp.lb[j])) box_rows.push_back(2 * j + 1);
        }
        ConstraintSet cs;
        const Eigen::Index m = qp.C.rows() + static_cast<Eigen::Index>(box_rows.size());
        cs.A.setZero(m, n);
        cs.b.resize(m);
        cs.A.topRows(qp.C.rows()) = qp.C;
        cs.b.head(qp.C.rows()) = qp.d;
        Eigen::Index r = qp.C.rows();
        for (Eigen::Index code : box_rows) {
            const Eigen::Index j = code / 2;
            if (code % 2 == 0) {
                cs.A(r, j) = 1.0;
                cs.b[r] = qp.ub[j];
            } else {
                cs.A(r, j) = -1.0;
                cs.b[r] = -qp.lb[j];
            }
            ++r;
        }
        return cs;
    }
};

// Equality-constrained step: KKT solve with one round of iterative refinement.
// Returns false if the KKT matrix is (numerically) singular.
bool eqp_step(const Eigen::MatrixXd& H, const Eigen::VectorXd& rhs_top,
              const Eigen::MatrixXd& Aw, Eigen::VectorXd& p, Eigen::VectorXd& lambda) {
    const Eigen::Index n = H.rows();
    const Eigen::Index mw = Aw.rows();
    Eigen::MatrixXd kkt(n + mw, n + mw);
    kkt.setZero();
    kkt.topLeftCorner(n, n) = H;
    if (mw > 0) {
        kkt.topRightCorner(n, mw) = Aw.transpose();
        kkt.bottomLeftCorner(mw, n) = Aw;
    }
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + mw);
    rhs.head(n) = rhs_top;

    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (!lu.isInvertible()) return false;
    Eigen::VectorXd sol = lu.solve(rhs);
    for (int it = 0; it < 2; ++it) sol += lu.solve(rhs - kkt * sol);

    p = sol.head(n);
    lambda = sol.tail(mw);
    return true;
}

}  // namespace

void QpProblem::validate() const {
    const Eigen::Index n = dim();
    if (H.rows() != n || H.cols() != n) throw std::invalid_argument("qp: H dimension mismatch");
    if (lb.size() != n || ub.size() != n) throw std::invalid_argument("qp: bound size mismatch");
    if (C.rows() != d.size() || (C.rows() > 0 && C.cols() != n))
        throw std::invalid_argument("qp: inequality dimension mismatch");
    for (Eigen::Index j = 0; j < n; ++j)
        if (!(lb[j] <= ub[j])) throw std::invalid_argument("qp: empty box");
}

double regularize_hessian(Eigen::MatrixXd& H, double floor) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (H + H.transpose()));
    const double lmin = es.eigenvalues().minCoeff();
    if (lmin >= floor) {
        H = 0.5 * (H + H.transpose()).eval();
        return 0.0;
    }
    const double shift = floor - lmin;
    H = (0.5 * (H + H.transpose())).eval();
    H.diagonal().array() += shift;
    return shift;
}

QpSolution solve_qp(const QpProblem& qp, const Eigen::VectorXd& z0) {
    qp.validate();
    const Eigen::Index n = qp.dim();
    if (z0.size() != n) throw std::invalid_argument("solve_qp: start point dimension mismatch");

    const ConstraintSet cs = ConstraintSet::assemble(qp);
    const Eigen::Index m = cs.A.rows();

    const double scale = std::max(1.0, z0.cwiseAbs().maxCoeff());
    const double feas_tol = 1e-9 * scale;
    Eigen::VectorXd z = z0;
    {
        const double viol = m > 0 ? (cs.A * z - cs.b).maxCoeff() : 0.0;
        if (viol > feas_tol)
            throw std::invalid_argument("solve_qp: starting point infeasible by " +
                                        std::to_string(viol));
    }

    std::vector<bool> active(static_cast<std::size_t>(m), false);
    if (m > 0) {
        const Eigen::VectorXd slackness = cs.b - cs.A * z;
        for (Eigen::Index i = 0; i < m; ++i)
            if (slackness[i] <= feas_tol) active[static_cast<std::size_t>(i)] = true;
    }

    QpSolution out;
    Eigen::VectorXd lambda_full = Eigen::VectorXd::Zero(m);
    const int max_iter = 50 + 10 * static_cast<int>(m);
    for (int iter = 0; iter < max_iter; ++iter) {
        out.iterations = iter + 1;

        std::vector<Eigen::Index> wset;
        for (Eigen::Index i = 0; i < m; ++i)
            if (active[static_cast<std::size_t>(i)]) wset.push_back(i);
        Eigen::MatrixXd Aw(static_cast<Eigen::Index>(wset.size()), n);
        for (std::size_t r = 0; r < wset.size(); ++r) Aw.row(static_cast<Eigen::Index>(r)) = cs.A.row(wset[r]);

        Eigen::VectorXd p, lam;
        if (!eqp_step(qp.H, -(qp.H * z + qp.g), Aw, p, lam)) {
            // dependent working set: drop the most recently added row and retry
            if (!wset.empty()) {
                active[static_cast<std::size_t>(wset.back())] = false;
                continue;
            }
            break;
        }

        const double step_norm = p.cwiseAbs().maxCoeff();
        if (step_norm <= 1e-11 * scale) {
            z += p;
            // at a working-set minimizer: check multiplier signs
            double worst = 0.0;
            Eigen::Index worst_row = -1;
            for (std::size_t r = 0; r < wset.size(); ++r) {
                if (lam[static_cast<Eigen::Index>(r)] < worst) {
                    worst = lam[static_cast<Eigen::Index>(r)];
                    worst_row = wset[r];
                }
            }
            if (worst_row < 0 || worst >= -1e-10) {
                lambda_full.setZero();
                for (std::size_t r = 0; r < wset.size(); ++r)
                    lambda_full[wset[r]] = std::max(0.0, lam[static_cast<Eigen::Index>(r)]);
                out.converged = true;
                break;
            }
            active[static_cast<std::size_t>(worst_row)] = false;
            continue;
        }

        // ratio test against inactive constraints
        double alpha = 1.0;
        Eigen::Index blocking = -1;
        for (Eigen::Index i = 0; i < m; ++i) {
            if (active[static_cast<std::size_t>(i)]) continue;
            const double ai_p = cs.A.row(i).dot(p);
            if (ai_p <= 1e-13 * scale) continue;
            const double room = cs.b[i] - cs.A.row(i).dot(z);
            const double a = std::max(0.0, room) / ai_p;
            if (a < alpha) {
                alpha = a;
                blocking = i;
            }
        }
        z += alpha * p;
        if (blocking >= 0) active[static_cast<std::size_t>(blocking)] = true;
    }

    // box bounds hold exactly in the returned point; active-set iterates sit on
    // them only up to rounding
    z = z.cwiseMax(qp.lb).cwiseMin(qp.ub);

    out.z = z;
    out.objective = 0.5 * z.dot(qp.H * z) + qp.g.dot(z);

    const Eigen::VectorXd hz = qp.H * z;
    const Eigen::VectorXd atl = cs.A.transpose() * lambda_full;
    const double stat_scale =
        1.0 + std::max({hz.cwiseAbs().maxCoeff(), qp.g.cwiseAbs().maxCoeff(),
                        m > 0 ? atl.cwiseAbs().maxCoeff() : 0.0});
    const double stat = (hz + qp.g + atl).cwiseAbs().maxCoeff() / stat_scale;

    double primal = 0.0, comp = 0.0;
    if (m > 0) {
        const Eigen::VectorXd az = cs.A * z;
        for (Eigen::Index i = 0; i < m; ++i) {
            const double row_scale = 1.0 + std::max(std::abs(az[i]), std::abs(cs.b[i]));
            primal = std::max(primal, (az[i] - cs.b[i]) / row_scale);
            comp = std::max(comp,
                            std::abs(lambda_full[i] * (az[i] - cs.b[i])) /
                                (row_scale * (1.0 + std::abs(lambda_full[i]))));
        }
        primal = std::max(0.0, primal);
    }
    out.kkt_residual = std::max({stat, primal, comp});
    return out;
}

}  // namespace lpvmpc
