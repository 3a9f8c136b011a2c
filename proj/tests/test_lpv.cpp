#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Eigenvalues>
#include <filesystem>
#include <random>

#include "lpvmpc/lpv_model.hpp"
#include "lpvmpc/metrics.hpp"
#include "lpvmpc/plant.hpp"
#include "lpvmpc/report.hpp"

using namespace lpvmpc;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng,
                              double scale = 1.0) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index k = 0; k < c; ++k) m(i, k) = dist(rng);
    return m;
}

// Data generated from one fixed linear system x+ = Ax + Bu (constant p).
struct LinearSystemData {
    Eigen::MatrixXd X0, U, P, X1;
    Eigen::Matrix3d A;
    Eigen::Matrix3d B;
};

LinearSystemData make_linear_data(Eigen::Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    LinearSystemData d;
    d.A << 0.8, 0.05, 0.0, 0.02, 0.7, 0.1, -0.05, 0.0, 0.6;
    d.B << 0.5, 0.0, 0.1, 0.0, 0.4, 0.0, 0.2, -0.3, 0.5;
    d.X0.resize(n, 3);
    d.U = random_matrix(n, 3, rng, 0.5);
    d.P = Eigen::MatrixXd::Constant(n, 2, 0.3);
    d.X1.resize(n, 3);
    Eigen::Vector3d x = Eigen::Vector3d::Zero();
    for (Eigen::Index k = 0; k < n; ++k) {
        d.X0.row(k) = x;
        x = d.A * x + d.B * d.U.row(k).transpose();
        d.X1.row(k) = x;
    }
    return d;
}

KernelConfig config3(double sigma, double gamma) {
    KernelConfig kc;
    kc.sigma = sigma;
    kc.gamma = Eigen::Vector3d::Constant(gamma);
    return kc;
}

}  // namespace

TEST_CASE("rbf kernel: unit at zero distance, exp(-1) at squared distance 2 sigma") {
    Eigen::VectorXd p(2), q(2);
    p << 0.4, 0.7;
    CHECK(rbf_kernel(p, p, 0.5) == doctest::Approx(1.0));
    const double sigma = 0.35;
    q = p;
    q[0] += std::sqrt(2.0 * sigma);  // squared distance exactly 2 sigma
    CHECK(rbf_kernel(p, q, sigma) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(rbf_kernel(q, p, sigma) == rbf_kernel(p, q, sigma));
}

TEST_CASE("rbf kernel bounds and argument checks") {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 100; ++t) {
        const Eigen::VectorXd a = random_matrix(3, 1, rng, 2.0);
        const Eigen::VectorXd b = random_matrix(3, 1, rng, 2.0);
        const double k = rbf_kernel(a, b, 0.7);
        CHECK(k > 0.0);
        CHECK(k <= 1.0);
        CHECK(k == rbf_kernel(b, a, 0.7));
    }
    Eigen::VectorXd p2(2), p3(3);
    p2.setZero();
    p3.setZero();
    CHECK_THROWS_AS(rbf_kernel(p2, p3, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(rbf_kernel(p2, p2, 0.0), std::invalid_argument);
}

TEST_CASE("omega of a single unit-state sample is [[1]]") {
    Eigen::MatrixXd x(1, 3), u(1, 3), p(1, 2);
    x << 1, 0, 0;
    u.setZero();
    p << 0.2, 0.9;
    const Eigen::MatrixXd omega = build_omega(x, u, p, 0.5);
    REQUIRE(omega.rows() == 1);
    CHECK(omega(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("omega is symmetric and positive semidefinite on random data") {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 25; ++t) {
        const Eigen::Index n = 5 + (t % 4) * 3;
        const Eigen::MatrixXd x = random_matrix(n, 3, rng);
        const Eigen::MatrixXd u = random_matrix(n, 3, rng);
        const Eigen::MatrixXd p = random_matrix(n, 2, rng);
        const Eigen::MatrixXd omega = build_omega(x, u, p, 0.4);
        CHECK((omega - omega.transpose()).cwiseAbs().maxCoeff() == 0.0);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(omega);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    }
}

TEST_CASE("fit on constant-linear-system data predicts held-out data within 1 percent") {
    const LinearSystemData train = make_linear_data(300, 21);
    const LinearSystemData test = make_linear_data(120, 22);

    FitDiagnostics diag;
    const LpvModel model = LpvModel::fit(train.X0, train.U, train.P, train.X1,
                                         config3(0.5, 1e6), &diag);
    CHECK(diag.identity_rel_err < 1e-8);

    const Eigen::MatrixXd pred = model.predict_batch(test.X0, test.U, test.P);
    for (int c = 0; c < 3; ++c) CHECK(nrmse(pred.col(c), test.X1.col(c)) < 1.0);
}

TEST_CASE("huge gamma drives the fit to near interpolation") {
    std::mt19937_64 rng(23);
    const Eigen::MatrixXd x = random_matrix(5, 3, rng);
    const Eigen::MatrixXd u = random_matrix(5, 3, rng);
    const Eigen::MatrixXd p = random_matrix(5, 2, rng);
    const Eigen::MatrixXd x1 = random_matrix(5, 3, rng);
    const LpvModel model = LpvModel::fit(x, u, p, x1, config3(0.8, 1e9));

    const Eigen::MatrixXd pred = model.predict_batch(x, u, p);
    for (int c = 0; c < 3; ++c) {
        const double range = x1.col(c).maxCoeff() - x1.col(c).minCoeff();
        CHECK((pred.col(c) - x1.col(c)).cwiseAbs().maxCoeff() <= 1e-6 * range);
    }
}

TEST_CASE("minimal two-sample fit solves the per-dimension 2x2 systems exactly") {
    std::mt19937_64 rng(24);
    const Eigen::MatrixXd x = random_matrix(2, 3, rng);
    const Eigen::MatrixXd u = random_matrix(2, 3, rng);
    const Eigen::MatrixXd p = random_matrix(2, 2, rng);
    const Eigen::MatrixXd x1 = random_matrix(2, 3, rng);
    const KernelConfig kc = config3(0.6, 50.0);
    const LpvModel model = LpvModel::fit(x, u, p, x1, kc);

    const Eigen::MatrixXd omega = build_omega(x, u, p, kc.sigma);
    for (int i = 0; i < 3; ++i) {
        Eigen::Matrix2d M = omega;
        M.diagonal().array() += 1.0 / kc.gamma[i];
        const Eigen::Vector2d resid = M * model.alpha().col(i) - x1.col(i);
        CHECK(resid.cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("residual identity: training residual equals gamma^-1 alpha") {
    const LinearSystemData d = make_linear_data(100, 31);
    for (double gamma : {1e2, 1e4, 1e6}) {
        const LpvModel m = LpvModel::fit(d.X0, d.U, d.P, d.X1, config3(0.7, gamma));
        CHECK(m.verify_identity() < 1e-8);
    }
}

TEST_CASE("eval_matrices at a training point matches the identity prediction") {
    const LinearSystemData d = make_linear_data(60, 32);
    const KernelConfig kc = config3(0.5, 1e3);
    const LpvModel m = LpvModel::fit(d.X0, d.U, d.P, d.X1, kc);

    for (Eigen::Index k : {0, 17, 59}) {
        const FrozenLti lti = m.eval_matrices(d.P.row(k));
        const Eigen::Vector3d pred = lti.A * d.X0.row(k).transpose() +
                                     lti.B * d.U.row(k).transpose();
        const Eigen::Vector3d expected =
            d.X1.row(k).transpose() -
            (m.alpha().row(k).transpose().array() / kc.gamma.array()).matrix();
        CHECK((pred - expected).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("a very wide kernel flattens the scheduling dependence") {
    std::mt19937_64 rng(33);
    LinearSystemData d = make_linear_data(80, 34);
    d.P = random_matrix(80, 2, rng);  // varied scheduling, same underlying system
    const LpvModel m = LpvModel::fit(d.X0, d.U, d.P, d.X1, config3(1e8, 1e4));

    Eigen::VectorXd pa(2), pb(2);
    pa << -0.9, 0.8;
    pb << 0.7, -0.6;
    const FrozenLti la = m.eval_matrices(pa);
    const FrozenLti lb = m.eval_matrices(pb);
    CHECK((la.A - lb.A).norm() < 1e-6 * la.A.norm());
    CHECK((la.B - lb.B).norm() < 1e-6 * lb.B.norm());
}

TEST_CASE("matrices vary smoothly for nearby scheduling points") {
    std::mt19937_64 rng(35);
    LinearSystemData d = make_linear_data(80, 36);
    d.P = random_matrix(80, 2, rng);
    const LpvModel m = LpvModel::fit(d.X0, d.U, d.P, d.X1, config3(0.5, 1e4));
    Eigen::VectorXd p0(2), p1(2);
    p0 << 0.1, 0.2;
    p1 = p0;
    p1[0] += 1e-4;  // far below the kernel width
    const FrozenLti a = m.eval_matrices(p0);
    const FrozenLti b = m.eval_matrices(p1);
    CHECK((a.A - b.A).norm() < 1e-3 * a.A.norm());
}

TEST_CASE("zero-alpha model predicts the zero vector and simulate matches one step") {
    const LinearSystemData d = make_linear_data(10, 37);
    LpvModel m = LpvModel::from_parts(Eigen::MatrixXd::Zero(10, 3), d.X0, d.U, d.P, d.X1,
                                      config3(0.5, 1.0));
    const Eigen::Vector3d x = Eigen::Vector3d::Ones();
    CHECK(m.predict_one_step(x, x, d.P.row(0)).cwiseAbs().maxCoeff() == 0.0);

    const LpvModel fitted = LpvModel::fit(d.X0, d.U, d.P, d.X1, config3(0.5, 1e4));
    const Eigen::MatrixXd one = fitted.simulate(d.X0.row(3), d.U.row(3), d.P.row(3));
    const Eigen::VectorXd direct =
        fitted.predict_one_step(d.X0.row(3), d.U.row(3), d.P.row(3));
    CHECK((one.row(0).transpose() - direct).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("simulate reports the cycle index when the state diverges") {
    const LinearSystemData d = make_linear_data(10, 38);
    // explosive dual coefficients
    LpvModel m = LpvModel::from_parts(Eigen::MatrixXd::Constant(10, 3, 1e200), d.X0, d.U, d.P,
                                      d.X1, config3(0.5, 1.0));
    const Eigen::MatrixXd U = Eigen::MatrixXd::Ones(5, 3);
    const Eigen::MatrixXd P = Eigen::MatrixXd::Zero(5, 2);
    CHECK_THROWS_WITH_AS(m.simulate(Eigen::Vector3d::Ones(), U, P),
                         doctest::Contains("cycle"), std::runtime_error);
}

TEST_CASE("fit is deterministic and the model file round-trips bit-identically") {
    const LinearSystemData d = make_linear_data(50, 39);
    const LpvModel a = LpvModel::fit(d.X0, d.U, d.P, d.X1, config3(0.4, 1e3));
    const LpvModel b = LpvModel::fit(d.X0, d.U, d.P, d.X1, config3(0.4, 1e3));
    CHECK((a.alpha() - b.alpha()).cwiseAbs().maxCoeff() == 0.0);

    const auto path = (std::filesystem::temp_directory_path() / "lpvmpc_model.json").string();
    save_model(path, a);
    const LpvModel c = load_model(path);
    CHECK((c.alpha() - a.alpha()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((c.train_x() - a.train_x()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(c.kernel().sigma == a.kernel().sigma);

    // loaded model reproduces evaluations exactly
    Eigen::VectorXd p(2);
    p << 0.25, 0.3;
    CHECK((c.eval_matrices(p).A - a.eval_matrices(p).A).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("least-squares baseline recovers a constant linear system exactly") {
    const LinearSystemData d = make_linear_data(200, 40);
    const FrozenLti lti = fit_arx(d.X0, d.U, d.X1, d.P);
    CHECK((lti.A - d.A).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((lti.B - d.B).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("engine-layer fit keeps signals in scaled coordinates and unscales outputs") {
    SurrogatePlant plant;
    const Eigen::MatrixXd u_exc = random_excitation(400, BoundSet{}, 20, 50, 41);
    const Trajectory traj = plant.simulate(u_exc, Eigen::VectorXd::Constant(400, 1500.0));
    const LpvModel m = fit_engine_model(traj, ScheduleConfig{}, config3(0.4, 1e4));
    CHECK(m.schedule_channels() == std::vector<std::string>{"fq_mg", "soi_cad"});
    // scaled training arrays live in [0, 1]
    CHECK(m.train_x().minCoeff() >= -1e-12);
    CHECK(m.train_x().maxCoeff() <= 1.0 + 1e-12);

    const Eigen::MatrixXd pred = predict_engine_one_step(m, traj);
    const Eigen::MatrixXd meas = traj.states().bottomRows(traj.size() - 1);
    for (int c = 0; c < 3; ++c) CHECK(nrmse(pred.col(c), meas.col(c)) < 5.0);

    // same pipeline run twice is bit-identical
    const LpvModel m2 = fit_engine_model(traj, ScheduleConfig{}, config3(0.4, 1e4));
    const Eigen::MatrixXd pred2 = predict_engine_one_step(m2, traj);
    CHECK((pred - pred2).cwiseAbs().maxCoeff() == 0.0);
}
