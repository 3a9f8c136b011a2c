#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lpvmpc/experiment.hpp"

using namespace lpvmpc;
namespace fs = std::filesystem;

namespace {

// scaled-down pipeline: seconds, not minutes
ExperimentRecipe mini_recipe() {
    ExperimentRecipe r;
    r.seed = 7;
    r.ident_cycles = 300;
    r.tune_enabled = true;
    r.tune_budget = 6;  // bumped to >= 5 by the optimizer contract
    r.eval_cycles = 120;
    r.eval_speeds = {1500.0};
    r.collect_cycles = 400;
    r.collect_speeds = {1500.0, 1200.0};
    r.speed_hold_lo = 80;
    r.speed_hold_hi = 160;
    r.train.epochs = 8;
    r.train.minibatch = 64;
    r.train.tbptt_len = 16;
    r.train.window_stride = 4;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("experiment pipeline runs, caches, and invalidates exactly downstream") {
    const fs::path dir = fs::temp_directory_path() / "lpvmpc_exp";
    fs::remove_all(dir);

    ExperimentRecipe recipe = mini_recipe();
    recipe.tune_budget = 5;

    const auto first = run_experiment(recipe, dir.string());
    REQUIRE(first.size() == 6);
    for (const auto& s : first) CHECK_FALSE(s.cache_hit);

    for (const char* f :
         {"train_data.csv", "model_default.json", "arx.json", "model.json", "tune_history.csv",
          "refs_1500.csv", "bench_1500.csv", "lmpc_1500.csv", "lpvmpc_1500.csv",
          "imitation_data.csv", "imitation_net.json", "imitation_curves.csv", "imit_1500.csv",
          "report.json", "report_1500.json", "gain_surface.csv"})
        CHECK(fs::exists(dir / f));

    // rerun without changes: every stage cache-hits, report is byte-identical
    const std::string report_before = slurp(dir / "report.json");
    const auto second = run_experiment(recipe, dir.string());
    for (const auto& s : second) CHECK(s.cache_hit);
    CHECK(slurp(dir / "report.json") == report_before);

    // changing a control-stage knob leaves upstream stages cached and reruns
    // exactly control, imitate and report
    recipe.mpc.weights.nox *= 2.0;
    const auto third = run_experiment(recipe, dir.string());
    REQUIRE(third.size() == 6);
    CHECK(third[0].cache_hit);   // simulate
    CHECK(third[1].cache_hit);   // identify
    CHECK(third[2].cache_hit);   // tune
    CHECK_FALSE(third[3].cache_hit);  // control
    CHECK_FALSE(third[4].cache_hit);  // imitate
    CHECK_FALSE(third[5].cache_hit);  // report
}

TEST_CASE("a failing stage names itself and preserves upstream artifacts") {
    const fs::path dir = fs::temp_directory_path() / "lpvmpc_exp_fail";
    fs::remove_all(dir);
    ExperimentRecipe recipe = mini_recipe();
    recipe.schedule.channels = {"bogus_channel"};
    bool threw = false;
    try {
        run_experiment(recipe, dir.string());
    } catch (const std::exception& e) {
        threw = true;
        CHECK(std::string(e.what()).find("stage 'identify'") != std::string::npos);
    }
    CHECK(threw);
    CHECK(fs::exists(dir / "train_data.csv"));  // upstream output preserved
}

TEST_CASE("recipe json round trips through load/save") {
    const fs::path p = fs::temp_directory_path() / "lpvmpc_recipe.json";
    ExperimentRecipe r = mini_recipe();
    r.mpc.np = 9;
    r.ref_hi = 333.0;
    save_recipe(p.string(), r);
    const ExperimentRecipe back = load_recipe(p.string());
    CHECK(back.mpc.np == 9);
    CHECK(back.ref_hi == 333.0);
    CHECK(back.ident_cycles == r.ident_cycles);
    CHECK(back.train.epochs == r.train.epochs);
    CHECK(back.collect_speeds == r.collect_speeds);
}
