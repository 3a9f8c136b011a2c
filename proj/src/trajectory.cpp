#include "lpvmpc/trajectory.hpp"

#include <cmath>
#include <stdexcept>

#include "lpvmpc/csv.hpp"

namespace lpvmpc {

namespace {

constexpr const char* kColumns[] = {"cycle",   "fq_mg",    "soi_cad", "vgt_pct",
                                    "tout_nm", "pman_bar", "nox_ppm", "speed_rpm"};

std::vector<double>* channel(Trajectory& t, int i) {
    switch (i) {
        case 1: return &t.fq;
        case 2: return &t.soi;
        case 3: return &t.vgt;
        case 4: return &t.t_out;
        case 5: return &t.p_man;
        case 6: return &t.nox;
        case 7: return &t.speed;
        default: return nullptr;
    }
}

const std::vector<double>* channel(const Trajectory& t, int i) {
    return channel(const_cast<Trajectory&>(t), i);
}

}  // namespace

void Trajectory::validate() const {
    const std::size_t n = cycle.size();
    if (n < 2) throw std::invalid_argument("trajectory: needs at least 2 rows, got " +
                                           std::to_string(n));
    for (int i = 1; i < 8; ++i) {
        const auto* col = channel(*this, i);
        if (col->size() != n)
            throw std::invalid_argument(std::string("trajectory: column '") + kColumns[i] +
                                        "' length mismatch");
    }
    for (std::size_t k = 1; k < n; ++k)
        if (cycle[k] != cycle[k - 1] + 1)
            throw std::invalid_argument("trajectory: cycle index not increasing by 1 at row " +
                                        std::to_string(k + 1));
    for (int i = 1; i < 8; ++i) {
        const auto* col = channel(*this, i);
        for (std::size_t k = 0; k < n; ++k)
            if (!std::isfinite((*col)[k]))
                throw std::invalid_argument(std::string("trajectory: non-finite value in '") +
                                            kColumns[i] + "', row " + std::to_string(k + 1));
    }
}

Eigen::MatrixXd Trajectory::inputs() const {
    Eigen::MatrixXd u(size(), 3);
    for (std::size_t k = 0; k < size(); ++k) u.row(k) << fq[k], soi[k], vgt[k];
    return u;
}

Eigen::MatrixXd Trajectory::states() const {
    Eigen::MatrixXd x(size(), 3);
    for (std::size_t k = 0; k < size(); ++k) x.row(k) << t_out[k], p_man[k], nox[k];
    return x;
}

Trajectory Trajectory::slice(std::size_t begin, std::size_t count) const {
    if (begin + count > size()) throw std::invalid_argument("trajectory: slice out of range");
    Trajectory out;
    auto cut = [&](const std::vector<double>& src, std::vector<double>& dst) {
        dst.assign(src.begin() + begin, src.begin() + begin + count);
    };
    out.cycle.assign(cycle.begin() + begin, cycle.begin() + begin + count);
    cut(fq, out.fq);
    cut(soi, out.soi);
    cut(vgt, out.vgt);
    cut(t_out, out.t_out);
    cut(p_man, out.p_man);
    cut(nox, out.nox);
    cut(speed, out.speed);
    return out;
}

Trajectory load_trajectory(const std::string& path) {
    csv::Table t = csv::read(path);
    for (const char* name : kColumns)
        if (t.find(name) < 0)
            throw std::invalid_argument("trajectory: missing column '" + std::string(name) +
                                        "' in '" + path + "'");
    Trajectory traj;
    const auto& cyc = t.column("cycle");
    traj.cycle.reserve(cyc.size());
    for (double c : cyc) traj.cycle.push_back(static_cast<long long>(std::llround(c)));
    for (int i = 1; i < 8; ++i) *channel(traj, i) = t.column(kColumns[i]);
    traj.validate();
    return traj;
}

void save_trajectory(const std::string& path, const Trajectory& traj) {
    csv::Table t;
    t.names.assign(std::begin(kColumns), std::end(kColumns));
    t.cols.resize(8);
    t.cols[0].reserve(traj.size());
    for (long long c : traj.cycle) t.cols[0].push_back(static_cast<double>(c));
    for (int i = 1; i < 8; ++i) t.cols[i] = *channel(traj, i);
    csv::write(path, t);
}

std::pair<Trajectory, Trajectory> split(const Trajectory& traj, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("split: train_fraction must be in (0, 1), got " +
                                    std::to_string(train_fraction));
    const std::size_t n = traj.size();
    auto n_train = static_cast<std::size_t>(
        std::llround(static_cast<double>(n) * train_fraction));
    if (n_train < 1) n_train = 1;
    if (n_train > n - 1) n_train = n - 1;
    return {traj.slice(0, n_train), traj.slice(n_train, n - n_train)};
}

Trajectory concat(const Trajectory& a, const Trajectory& b) {
    Trajectory out = a;
    out.cycle.insert(out.cycle.end(), b.cycle.begin(), b.cycle.end());
    auto app = [](std::vector<double>& dst, const std::vector<double>& src) {
        dst.insert(dst.end(), src.begin(), src.end());
    };
    app(out.fq, b.fq);
    app(out.soi, b.soi);
    app(out.vgt, b.vgt);
    app(out.t_out, b.t_out);
    app(out.p_man, b.p_man);
    app(out.nox, b.nox);
    app(out.speed, b.speed);
    return out;
}

}  // namespace lpvmpc
