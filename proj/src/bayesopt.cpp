#include "lpvmpc/bayesopt.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "lpvmpc/csv.hpp"

namespace lpvmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double norm_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }
double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Fixed-hyperparameter GP on the unit cube with standardized targets.
class Surrogate {
public:
    Surrogate(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lengthscale,
              double noise)
        : X_(X), ls2_(2.0 * lengthscale * lengthscale) {
        const Eigen::Index n = X.rows();
        y_mean_ = y.mean();
        y_std_ = std::sqrt((y.array() - y_mean_).square().sum() / std::max<Eigen::Index>(1, n - 1));
        if (!(y_std_ > 1e-12)) y_std_ = 1.0;
        ys_ = (y.array() - y_mean_) / y_std_;

        Eigen::MatrixXd K(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j <= i; ++j) {
                const double k = kernel(X.row(i), X.row(j));
                K(i, j) = k;
                K(j, i) = k;
            }
        K.diagonal().array() += noise + 1e-10;
        llt_.compute(K);
        alpha_ = llt_.solve(ys_);
    }

    // posterior mean/stddev on the standardized scale
    void predict(const Eigen::VectorXd& x, double& mu, double& sd) const {
        const Eigen::Index n = X_.rows();
        Eigen::VectorXd k(n);
        for (Eigen::Index i = 0; i < n; ++i) k[i] = kernel(X_.row(i), x.transpose());
        mu = k.dot(alpha_);
        const Eigen::VectorXd v = llt_.solve(k);
        const double var = std::max(1e-18, 1.0 - k.dot(v));
        sd = std::sqrt(var);
    }

    double best_standardized() const { return ys_.minCoeff(); }
    double y_mean() const { return y_mean_; }
    double y_std() const { return y_std_; }

private:
    double kernel(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) const {
        return std::exp(-(a - b).squaredNorm() / ls2_);
    }

    Eigen::MatrixXd X_;
    Eigen::VectorXd ys_, alpha_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    double ls2_, y_mean_ = 0.0, y_std_ = 1.0;
};

double expected_improvement(const Surrogate& gp, const Eigen::VectorXd& x, double best,
                            double jitter) {
    double mu, sd;
    gp.predict(x, mu, sd);
    const double gap = best - mu - jitter;
    if (sd < 1e-14) return std::max(0.0, gap);
    const double z = gap / sd;
    return gap * norm_cdf(z) + sd * norm_pdf(z);
}

}  // namespace

void HyperBounds::validate() const {
    if (low.size() != high.size() || static_cast<std::size_t>(low.size()) != names.size())
        throw std::invalid_argument("HyperBounds: inconsistent sizes");
    for (Eigen::Index i = 0; i < low.size(); ++i)
        if (!(low[i] < high[i])) throw std::invalid_argument("HyperBounds: low must be below high");
}

HyperBounds HyperBounds::defaults(bool shared_gamma, Eigen::Index n_x) {
    HyperBounds b;
    b.names.push_back("log_sigma");
    if (shared_gamma) {
        b.names.push_back("log_gamma");
    } else {
        for (Eigen::Index i = 0; i < n_x; ++i)
            b.names.push_back("log_gamma" + std::to_string(i));
    }
    const Eigen::Index d = static_cast<Eigen::Index>(b.names.size());
    b.low.resize(d);
    b.high.resize(d);
    b.low[0] = -3.0;
    b.high[0] = 3.0;
    for (Eigen::Index i = 1; i < d; ++i) {
        b.low[i] = -1.0;
        b.high[i] = 6.0;
    }
    return b;
}

double OptHistory::best_value() const {
    double best = kInf;
    for (const auto& r : records) best = std::min(best, r.objective);
    return best;
}

Eigen::VectorXd OptHistory::best_point() const {
    if (records.empty()) throw std::runtime_error("OptHistory: empty");
    const OptRecord* best = &records.front();
    for (const auto& r : records)
        if (r.objective < best->objective) best = &r;
    return best->point;
}

std::pair<Eigen::VectorXd, OptHistory> bayesopt_minimize(
    const std::function<double(const Eigen::VectorXd&)>& objective, const HyperBounds& bounds,
    const BayesOptSettings& settings) {
    bounds.validate();
    if (settings.budget < 5) throw std::invalid_argument("bayesopt: budget must be at least 5");

    const Eigen::Index d = bounds.dim();
    const Eigen::VectorXd width = bounds.high - bounds.low;
    std::mt19937_64 rng(settings.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    auto to_point = [&](const Eigen::VectorXd& u) -> Eigen::VectorXd {
        return bounds.low + u.cwiseProduct(width);
    };
    auto to_unit = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return (x - bounds.low).cwiseQuotient(width);
    };

    OptHistory history;
    Eigen::MatrixXd X_unit(settings.budget, d);
    Eigen::VectorXd y(settings.budget);
    double best_seen = kInf;

    auto evaluate = [&](const Eigen::VectorXd& u, int iter) {
        const Eigen::VectorXd x = to_point(u);
        double j = kInf;
        try {
            j = objective(x);
            if (!std::isfinite(j)) j = kInf;
        } catch (const std::exception&) {
            j = kInf;
        }
        X_unit.row(iter) = u;
        y[iter] = j;
        best_seen = std::min(best_seen, j);
        history.records.push_back({iter, x, j, best_seen});
    };

    // Latin hypercube start: one stratum per initial sample and dimension.
    const int n_init = std::min(settings.budget, std::max(5, settings.budget / 10));
    {
        Eigen::MatrixXd lhs(n_init, d);
        for (Eigen::Index c = 0; c < d; ++c) {
            std::vector<int> perm(static_cast<std::size_t>(n_init));
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            for (int r = 0; r < n_init; ++r)
                lhs(r, c) = (perm[static_cast<std::size_t>(r)] + unit(rng)) / n_init;
        }
        for (int r = 0; r < n_init; ++r) evaluate(lhs.row(r), r);
    }

    for (int iter = n_init; iter < settings.budget; ++iter) {
        // pessimistic stand-in for failed evaluations keeps the GP finite
        Eigen::VectorXd y_fit = y.head(iter);
        double worst = -kInf;
        for (int i = 0; i < iter; ++i)
            if (std::isfinite(y_fit[i])) worst = std::max(worst, y_fit[i]);
        if (!std::isfinite(worst)) worst = 0.0;
        for (int i = 0; i < iter; ++i)
            if (!std::isfinite(y_fit[i])) y_fit[i] = worst + 1.0 + std::abs(worst);

        const Surrogate gp(X_unit.topRows(iter), y_fit, settings.gp_lengthscale, settings.noise);
        const double best_std = gp.best_standardized();

        // random multistart on the acquisition
        std::vector<std::pair<double, Eigen::VectorXd>> cands;
        cands.reserve(static_cast<std::size_t>(settings.candidates));
        for (int c = 0; c < settings.candidates; ++c) {
            Eigen::VectorXd u(d);
            for (Eigen::Index k = 0; k < d; ++k) u[k] = unit(rng);
            cands.emplace_back(expected_improvement(gp, u, best_std, settings.ei_jitter), u);
        }
        std::sort(cands.begin(), cands.end(),
                  [](const auto& a, const auto& b) { return a.first > b.first; });

        // compass-search refinement of the leaders
        Eigen::VectorXd best_u = cands.front().second;
        double best_ei = cands.front().first;
        const int top = std::min<int>(settings.refine_top, static_cast<int>(cands.size()));
        for (int c = 0; c < top; ++c) {
            Eigen::VectorXd u = cands[static_cast<std::size_t>(c)].second;
            double ei = cands[static_cast<std::size_t>(c)].first;
            double step = 0.05;
            while (step > 1e-4) {
                bool improved = false;
                for (Eigen::Index k = 0; k < d; ++k) {
                    for (double sgn : {1.0, -1.0}) {
                        Eigen::VectorXd v = u;
                        v[k] = std::clamp(v[k] + sgn * step, 0.0, 1.0);
                        const double e = expected_improvement(gp, v, best_std, settings.ei_jitter);
                        if (e > ei) {
                            ei = e;
                            u = v;
                            improved = true;
                        }
                    }
                }
                if (!improved) step *= 0.5;
            }
            if (ei > best_ei) {
                best_ei = ei;
                best_u = u;
            }
        }

        // acquisition collapse: fall back to a random probe
        if (!(best_ei > 0.0)) {
            for (Eigen::Index k = 0; k < d; ++k) best_u[k] = unit(rng);
        }
        evaluate(best_u, iter);
    }

    (void)to_unit;
    return {history.best_point(), history};
}

void save_history(const std::string& path, const HyperBounds& bounds, const OptHistory& history) {
    csv::Table t;
    t.names.push_back("iter");
    for (const auto& n : bounds.names) t.names.push_back(n);
    t.names.push_back("J");
    t.names.push_back("best_J");
    t.cols.resize(t.names.size());
    for (const auto& r : history.records) {
        t.cols[0].push_back(r.iteration);
        for (Eigen::Index k = 0; k < r.point.size(); ++k)
            t.cols[1 + static_cast<std::size_t>(k)].push_back(r.point[k]);
        t.cols[t.cols.size() - 2].push_back(r.objective);
        t.cols[t.cols.size() - 1].push_back(r.best_so_far);
    }
    csv::write(path, t);
}

// --- Identification objective --------------------------------------------------

namespace {

KernelConfig kernel_from_log10(const Eigen::VectorXd& log10_point, bool shared_gamma,
                               Eigen::Index n_x) {
    KernelConfig kc;
    kc.sigma = std::pow(10.0, log10_point[0]);
    kc.gamma.resize(n_x);
    if (shared_gamma) {
        kc.gamma.setConstant(std::pow(10.0, log10_point[1]));
    } else {
        if (log10_point.size() != 1 + n_x)
            throw std::invalid_argument("hyperopt: point dimension mismatch");
        for (Eigen::Index i = 0; i < n_x; ++i) kc.gamma[i] = std::pow(10.0, log10_point[1 + i]);
    }
    return kc;
}

}  // namespace

double hyperopt_objective(const Trajectory& train, const Trajectory& val,
                          const ScheduleConfig& schedule, const Eigen::VectorXd& log10_point,
                          bool shared_gamma) {
    try {
        const KernelConfig kc = kernel_from_log10(log10_point, shared_gamma, 3);
        const LpvModel model = fit_engine_model(train, schedule, kc);

        // one-step-ahead error on the validation split, scaled coordinates
        const Eigen::MatrixXd pred_phys = predict_engine_one_step(model, val);
        const Eigen::MatrixXd meas_phys = val.states().bottomRows(val.states().rows() - 1);
        const Eigen::MatrixXd err =
            model.x_scaler().apply(pred_phys) - model.x_scaler().apply(meas_phys);
        const double j = err.squaredNorm() / static_cast<double>(err.rows());
        return std::isfinite(j) ? j : kInf;
    } catch (const std::exception&) {
        return kInf;
    }
}

TuneResult tune_hyperparameters(const Trajectory& data, double train_fraction,
                                const ScheduleConfig& schedule, bool shared_gamma,
                                const BayesOptSettings& settings) {
    const auto [train, val] = split(data, train_fraction);
    const HyperBounds bounds = HyperBounds::defaults(shared_gamma);
    auto objective = [&](const Eigen::VectorXd& point) {
        return hyperopt_objective(train, val, schedule, point, shared_gamma);
    };
    auto [best_point, history] = bayesopt_minimize(objective, bounds, settings);

    TuneResult out;
    out.best = kernel_from_log10(best_point, shared_gamma, 3);
    out.history = std::move(history);
    out.bounds = bounds;
    return out;
}

}  // namespace lpvmpc
