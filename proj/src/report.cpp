#include "lpvmpc/report.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "lpvmpc/metrics.hpp"

namespace lpvmpc {

namespace {

using nlohmann::json;

double mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double total(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

ControllerRow summarize(const std::string& name, const ClosedLoopLog& log, double nox_bound) {
    ControllerRow row;
    row.name = name;
    row.mean_nox_ppm = mean(log.nox);
    row.total_fuel_mg = total(log.fq);
    row.mean_step_ms = mean(log.solve_us) / 1000.0;
    Eigen::Map<const Eigen::VectorXd> tout(log.tout.data(), static_cast<Eigen::Index>(log.size()));
    Eigen::Map<const Eigen::VectorXd> tref(log.tref.data(), static_cast<Eigen::Index>(log.size()));
    row.load_error_pct = nrmse(tout, tref);
    for (double n : log.nox)
        if (n > nox_bound) ++row.violation_cycles;
    return row;
}

}  // namespace

ImprovementReport compute_report(const ClosedLoopLog& benchmark,
                                 const std::vector<std::string>& names,
                                 const std::vector<const ClosedLoopLog*>& logs,
                                 double nox_bound_ppm) {
    if (names.size() != logs.size())
        throw std::invalid_argument("compute_report: names/logs size mismatch");
    if (benchmark.size() == 0) throw std::invalid_argument("compute_report: empty benchmark log");
    for (std::size_t i = 0; i < logs.size(); ++i) {
        if (logs[i]->size() != benchmark.size())
            throw std::invalid_argument("compute_report: '" + names[i] +
                                        "' log length differs from the benchmark");
        for (std::size_t k = 0; k < benchmark.size(); ++k)
            if (logs[i]->tref[k] != benchmark.tref[k])
                throw std::invalid_argument("compute_report: '" + names[i] +
                                            "' was run on a different reference profile (cycle " +
                                            std::to_string(k) + ")");
    }

    ImprovementReport rep;
    rep.reference_controller = "benchmark";
    rep.nox_bound_ppm = nox_bound_ppm;

    ControllerRow bm = summarize("benchmark", benchmark, nox_bound_ppm);
    rep.rows.push_back(bm);
    for (std::size_t i = 0; i < logs.size(); ++i) {
        ControllerRow row = summarize(names[i], *logs[i], nox_bound_ppm);
        row.nox_change_pct = 100.0 * (row.mean_nox_ppm - bm.mean_nox_ppm) / bm.mean_nox_ppm;
        row.fuel_change_pct = 100.0 * (row.total_fuel_mg - bm.total_fuel_mg) / bm.total_fuel_mg;
        rep.rows.push_back(row);
    }
    return rep;
}

void save_report(const std::string& path, const ImprovementReport& report) {
    json rows = json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"name", r.name},
                        {"nox_change_pct", r.nox_change_pct},
                        {"fuel_change_pct", r.fuel_change_pct},
                        {"load_error_pct", r.load_error_pct},
                        {"mean_step_ms", r.mean_step_ms},
                        {"violation_cycles", r.violation_cycles},
                        {"mean_nox_ppm", r.mean_nox_ppm},
                        {"total_fuel_mg", r.total_fuel_mg}});
    }
    json j{{"schema_version", report.schema_version},
           {"reference_controller", report.reference_controller},
           {"nox_bound_ppm", report.nox_bound_ppm},
           {"controllers", rows}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << j.dump(1, '\t') << '\n';
}

ImprovementReport load_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    const json j = json::parse(in);
    ImprovementReport rep;
    rep.schema_version = j.at("schema_version").get<int>();
    rep.reference_controller = j.at("reference_controller").get<std::string>();
    rep.nox_bound_ppm = j.at("nox_bound_ppm").get<double>();
    for (const auto& r : j.at("controllers")) {
        ControllerRow row;
        row.name = r.at("name").get<std::string>();
        row.nox_change_pct = r.at("nox_change_pct").get<double>();
        row.fuel_change_pct = r.at("fuel_change_pct").get<double>();
        row.load_error_pct = r.at("load_error_pct").get<double>();
        row.mean_step_ms = r.at("mean_step_ms").get<double>();
        row.violation_cycles = r.at("violation_cycles").get<long long>();
        row.mean_nox_ppm = r.at("mean_nox_ppm").get<double>();
        row.total_fuel_mg = r.at("total_fuel_mg").get<double>();
        rep.rows.push_back(row);
    }
    return rep;
}

// --- Seeded profile generators ---------------------------------------------------

Eigen::VectorXd random_step_profile(Eigen::Index cycles, double lo, double hi, int hold_lo,
                                    int hold_hi, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> level(lo, hi);
    std::uniform_int_distribution<int> hold(hold_lo, hold_hi);
    Eigen::VectorXd out(cycles);
    Eigen::Index k = 0;
    while (k < cycles) {
        const double v = level(rng);
        const Eigen::Index n = std::min<Eigen::Index>(hold(rng), cycles - k);
        out.segment(k, n).setConstant(v);
        k += n;
    }
    return out;
}

Eigen::MatrixXd random_excitation(Eigen::Index cycles, const BoundSet& bounds, int hold_lo,
                                  int hold_hi, std::uint64_t seed) {
    Eigen::MatrixXd u(cycles, 3);
    u.col(0) = random_step_profile(cycles, bounds.fq_min, bounds.fq_max, hold_lo, hold_hi, seed);
    u.col(1) =
        random_step_profile(cycles, bounds.soi_min, bounds.soi_max, hold_lo, hold_hi, seed ^ 0x1);
    u.col(2) =
        random_step_profile(cycles, bounds.vgt_min, bounds.vgt_max, hold_lo, hold_hi, seed ^ 0x2);
    return u;
}

Eigen::VectorXd random_speed_profile(Eigen::Index cycles, const std::vector<double>& levels,
                                     int hold_lo, int hold_hi, std::uint64_t seed) {
    if (levels.empty()) throw std::invalid_argument("random_speed_profile: no levels");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, levels.size() - 1);
    std::uniform_int_distribution<int> hold(hold_lo, hold_hi);
    Eigen::VectorXd out(cycles);
    Eigen::Index k = 0;
    while (k < cycles) {
        const double v = levels[pick(rng)];
        const Eigen::Index n = std::min<Eigen::Index>(hold(rng), cycles - k);
        out.segment(k, n).setConstant(v);
        k += n;
    }
    return out;
}

}  // namespace lpvmpc
