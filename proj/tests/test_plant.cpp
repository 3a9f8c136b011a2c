#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Eigenvalues>
#include <random>

#include "lpvmpc/mpc.hpp"
#include "lpvmpc/plant.hpp"

using namespace lpvmpc;

TEST_CASE("published baseline matrices: column read-off golden values") {
    const ArxModel m = ArxModel::reference();

    const auto [x1, y1] = arx_step(m, Eigen::Vector3d(1, 0, 0), Eigen::Vector3d::Zero());
    CHECK(x1[0] == doctest::Approx(0.7286).epsilon(1e-15));
    CHECK(x1[1] == doctest::Approx(0.0002).epsilon(1e-15));
    CHECK(x1[2] == doctest::Approx(-0.6105).epsilon(1e-15));

    const auto [x2, y2] = arx_step(m, Eigen::Vector3d::Zero(), Eigen::Vector3d(0, 1, 0));
    CHECK(x2[0] == doctest::Approx(-1.0899).epsilon(1e-15));
    CHECK(x2[1] == doctest::Approx(0.0014).epsilon(1e-15));
    CHECK(x2[2] == doctest::Approx(-8.2453).epsilon(1e-15));

    const auto [x3, y3] = arx_step(m, Eigen::Vector3d(4.0, 5.0, 6.0), Eigen::Vector3d::Zero());
    CHECK(y3[0] == doctest::Approx(4.0));
    CHECK(y3[1] == doctest::Approx(6.0));
    (void)y1;
    (void)y2;
    (void)x3;
}

TEST_CASE("baseline A matrix is Schur stable") {
    const ArxModel m = ArxModel::reference();
    const Eigen::EigenSolver<Eigen::Matrix3d> es(m.A);
    double rho = 0.0;
    for (int i = 0; i < 3; ++i) rho = std::max(rho, std::abs(es.eigenvalues()[i]));
    CHECK(rho < 1.0);
}

TEST_CASE("surrogate converges to a fixed point under a held input") {
    SurrogatePlant plant;
    PlantState s;
    const Eigen::Vector3d u(45.0, 4.5, 85.0);
    PlantState prev = s;
    for (int k = 0; k < 200; ++k) {
        prev = s;
        s = plant.step(s, u, 1500.0);
    }
    CHECK(std::abs(s.t_out - prev.t_out) < 1e-6);
    CHECK(std::abs(s.p_man - prev.p_man) < 1e-6);
    CHECK(std::abs(s.nox - prev.nox) < 1e-6);

    // operating point sits in the intended envelope
    CHECK(s.t_out == doctest::Approx(200.0).epsilon(0.08));
    CHECK(s.p_man == doctest::Approx(1.8).epsilon(0.08));
    CHECK(s.nox == doctest::Approx(300.0).epsilon(0.15));
}

TEST_CASE("plant_steady_state matches the converged simulation") {
    SurrogatePlant plant;
    const Eigen::Vector3d u(52.0, 6.0, 90.0);
    PlantState s;
    for (int k = 0; k < 400; ++k) s = plant.step(s, u, 1500.0);
    const PlantState direct = plant_steady_state(plant, u, 1500.0);
    CHECK(s.t_out == doctest::Approx(direct.t_out).epsilon(1e-8));
    CHECK(s.p_man == doctest::Approx(direct.p_man).epsilon(1e-8));
    CHECK(s.nox == doctest::Approx(direct.nox).epsilon(1e-8));
}

TEST_CASE("fuel raises torque, advanced injection raises NOx") {
    SurrogatePlant plant;
    const PlantState base = plant_steady_state(plant, {45.0, 4.5, 85.0}, 1500.0);
    const PlantState more_fuel = plant_steady_state(plant, {49.5, 4.5, 85.0}, 1500.0);
    CHECK(more_fuel.t_out > base.t_out);
    CHECK(more_fuel.nox > base.nox);

    const PlantState late = plant_steady_state(plant, {45.0, 11.0, 85.0}, 1500.0);
    const PlantState early = plant_steady_state(plant, {45.0, -2.0, 85.0}, 1500.0);
    CHECK(early.nox > late.nox);

    const PlantState low_boost = plant_steady_state(plant, {45.0, 4.5, 75.0}, 1500.0);
    const PlantState high_boost = plant_steady_state(plant, {45.0, 4.5, 95.0}, 1500.0);
    CHECK(high_boost.p_man > low_boost.p_man);
    CHECK(high_boost.nox < low_boost.nox);  // boost dilutes NOx
}

TEST_CASE("surrogate is deterministic and respects state invariants") {
    SurrogatePlant plant;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dfq(10, 80), dsoi(-2, 11), dvgt(70, 100);
    PlantState a, b;
    for (int k = 0; k < 10000; ++k) {
        const Eigen::Vector3d u(dfq(rng), dsoi(rng), dvgt(rng));
        a = plant.step(a, u, 1500.0);
        b = plant.step(b, u, 1500.0);
        CHECK(a.p_man >= 1.0);
        CHECK(a.nox >= 0.0);
        REQUIRE(std::isfinite(a.t_out));
        REQUIRE(a.t_out == b.t_out);
        REQUIRE(a.nox == b.nox);
    }
}

TEST_CASE("surrogate rejects non-finite input and clamps out-of-range input") {
    SurrogatePlant plant;
    PlantState s;
    Eigen::Vector3d bad(std::numeric_limits<double>::quiet_NaN(), 5.0, 85.0);
    CHECK_THROWS_AS(plant.step(s, bad, 1500.0), std::invalid_argument);

    const PlantState clamped = plant.step(s, {200.0, 5.0, 85.0}, 1500.0);
    const PlantState at_max = plant.step(s, {80.0, 5.0, 85.0}, 1500.0);
    CHECK(clamped.t_out == at_max.t_out);
}

TEST_CASE("feedforward baseline lands 2 percent below the requested torque") {
    SurrogatePlant plant;
    for (double t_ref : {120.0, 200.0, 300.0}) {
        const Eigen::Vector3d u = feedforward_baseline(t_ref, 1500.0, plant);
        PlantState s;
        for (int k = 0; k < 300; ++k) s = plant.step(s, u, 1500.0);
        CHECK(s.t_out == doctest::Approx(0.98 * t_ref).epsilon(0.005));
    }
}

TEST_CASE("feedforward schedule advances injection at lower speed") {
    const Eigen::Vector3d u1500 = feedforward_baseline(200.0, 1500.0);
    const Eigen::Vector3d u1200 = feedforward_baseline(200.0, 1200.0);
    CHECK(u1200[1] < u1500[1]);
    CHECK(u1500[2] == doctest::Approx(85.0));
    CHECK(u1200[2] == doctest::Approx(85.0));
}

TEST_CASE("feedforward clamps to the idle fuel floor and rejects unreachable torque") {
    const Eigen::Vector3d idle = feedforward_baseline(0.0, 1500.0);
    CHECK(idle[0] == doctest::Approx(10.0));
    CHECK_THROWS_WITH_AS(feedforward_baseline(1000.0, 1500.0), doctest::Contains("unreachable"),
                         std::runtime_error);
}

TEST_CASE("simulate logs inputs verbatim and states after stepping") {
    SurrogatePlant plant;
    Eigen::MatrixXd u(3, 3);
    u << 40, 5, 85, 41, 5, 85, 42, 5, 85;
    const Trajectory traj = plant.simulate(u, Eigen::VectorXd::Constant(3, 1500.0));
    traj.validate();
    CHECK(traj.size() == 3);
    CHECK(traj.fq[1] == 41.0);
    CHECK(traj.t_out[2] > traj.t_out[0]);  // torque building toward the map value
}
