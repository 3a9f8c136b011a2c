#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "lpvmpc/csv.hpp"
#include "lpvmpc/experiment.hpp"
#include "lpvmpc/report.hpp"

using namespace lpvmpc;
namespace fs = std::filesystem;

namespace {

ClosedLoopLog constant_log(std::size_t n, double tref, double tout, double fq, double nox,
                           double solve_us) {
    ClosedLoopLog log;
    for (std::size_t k = 0; k < n; ++k) {
        log.cycle.push_back(static_cast<long long>(k));
        log.tref.push_back(tref + (k % 7));  // nonconstant reference so NRMSE is defined
        log.tout.push_back(tout + (k % 7));
        log.fq.push_back(fq);
        log.soi.push_back(5.0);
        log.vgt.push_back(85.0);
        log.pman.push_back(1.8);
        log.nox.push_back(nox);
        log.slack.push_back(0.0);
        log.cost.push_back(0.0);
        log.solve_us.push_back(solve_us);
        log.converged.push_back(1);
        log.speed.push_back(1500.0);
    }
    return log;
}

}  // namespace

TEST_CASE("identical logs give zero deltas") {
    const ClosedLoopLog bm = constant_log(100, 200, 195, 45, 300, 50);
    const ImprovementReport rep = compute_report(bm, {"same"}, {&bm});
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.rows[1].nox_change_pct == doctest::Approx(0.0));
    CHECK(rep.rows[1].fuel_change_pct == doctest::Approx(0.0));
    CHECK(rep.rows[0].name == "benchmark");
}

TEST_CASE("halved NOx is reported as exactly -50 percent") {
    const ClosedLoopLog bm = constant_log(100, 200, 195, 45, 300, 50);
    const ClosedLoopLog half = constant_log(100, 200, 195, 45, 150, 50);
    const ImprovementReport rep = compute_report(bm, {"half"}, {&half});
    CHECK(rep.rows[1].nox_change_pct == doctest::Approx(-50.0).epsilon(1e-12));
}

TEST_CASE("report arithmetic on constructed logs") {
    const ClosedLoopLog bm = constant_log(50, 200, 196, 40, 250, 100);
    ClosedLoopLog ctl = constant_log(50, 200, 198, 44, 200, 10);
    ctl.nox[7] = 600.0;  // one violation above the default bound
    const ImprovementReport rep = compute_report(bm, {"ctl"}, {&ctl});
    CHECK(rep.rows[1].fuel_change_pct == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(rep.rows[1].nox_change_pct ==
          doctest::Approx(100.0 * (ctl.nox[0] * 49 + 600.0 - 50 * 250.0) / (50 * 250.0))
              .epsilon(1e-9));
    CHECK(rep.rows[1].violation_cycles == 1);
    CHECK(rep.rows[1].mean_step_ms == doctest::Approx(0.01));
    CHECK(rep.rows[0].mean_step_ms == doctest::Approx(0.1));
    // torque NRMSE: constant offset of 4 against a range of 6
    CHECK(rep.rows[0].load_error_pct == doctest::Approx(100.0 * 4.0 / 6.0).epsilon(1e-9));
}

TEST_CASE("mismatched reference profiles are rejected") {
    const ClosedLoopLog bm = constant_log(50, 200, 195, 45, 300, 50);
    ClosedLoopLog other = constant_log(50, 210, 195, 45, 300, 50);
    CHECK_THROWS_WITH(compute_report(bm, {"x"}, {&other}), doctest::Contains("reference profile"));
    ClosedLoopLog shorter = constant_log(49, 200, 195, 45, 300, 50);
    CHECK_THROWS(compute_report(bm, {"x"}, {&shorter}));
}

TEST_CASE("report json round trips") {
    const ClosedLoopLog bm = constant_log(20, 200, 195, 45, 300, 50);
    const ClosedLoopLog ctl = constant_log(20, 200, 197, 44, 260, 20);
    const ImprovementReport rep = compute_report(bm, {"ctl"}, {&ctl});
    const auto path = (fs::temp_directory_path() / "lpvmpc_report.json").string();
    save_report(path, rep);
    const ImprovementReport back = load_report(path);
    REQUIRE(back.rows.size() == rep.rows.size());
    CHECK(back.rows[1].nox_change_pct == rep.rows[1].nox_change_pct);
    CHECK(back.rows[1].name == "ctl");
    CHECK(back.schema_version == 1);
}

TEST_CASE("random step profiles stay within their ranges and dwell bounds") {
    const Eigen::VectorXd refs = random_step_profile(500, 50, 350, 10, 30, 9);
    CHECK(refs.minCoeff() >= 50.0);
    CHECK(refs.maxCoeff() <= 350.0);
    int run = 1, max_run = 1;
    for (Eigen::Index k = 1; k < refs.size(); ++k) {
        if (refs[k] == refs[k - 1]) {
            max_run = std::max(max_run, ++run);
        } else {
            run = 1;
        }
    }
    CHECK(max_run <= 60);  // two adjacent holds of the same level are possible but bounded
    // determinism
    const Eigen::VectorXd again = random_step_profile(500, 50, 350, 10, 30, 9);
    CHECK((refs - again).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sha256 matches the published test vector") {
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("mpc config json round trips") {
    MpcConfig cfg;
    cfg.np = 7;
    cfg.weights.nox = 123.0;
    cfg.bounds.nox_max = 450.0;
    const auto path = (fs::temp_directory_path() / "lpvmpc_mpc.json").string();
    save_mpc_config(path, cfg);
    const MpcConfig back = load_mpc_config(path);
    CHECK(back.np == 7);
    CHECK(back.weights.nox == 123.0);
    CHECK(back.bounds.nox_max == 450.0);
}
