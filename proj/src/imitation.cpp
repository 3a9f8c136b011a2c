#include "lpvmpc/imitation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "lpvmpc/csv.hpp"
#include "lpvmpc/metrics.hpp"

namespace lpvmpc {

namespace {

Eigen::MatrixXd tanh_m(const Eigen::MatrixXd& a) { return a.array().tanh().matrix(); }
Eigen::MatrixXd sigmoid_m(const Eigen::MatrixXd& a) {
    return (1.0 / (1.0 + (-a.array()).exp())).matrix();
}

struct StepCache {
    Eigen::MatrixXd x, x1;          // input, FC1 activation
    Eigen::MatrixXd i, f, g, o;     // gate activations
    Eigen::MatrixXd c, tc, h;       // cell, tanh(cell), hidden
    Eigen::MatrixXd h_prev, c_prev;
    Eigen::MatrixXd z2, y;
};

// One LSTM-stack step on a batch; fills the cache when requested.
Eigen::MatrixXd forward_step(const ImitationNetwork& net, const Eigen::MatrixXd& x,
                             LstmCarry& carry, StepCache* cache) {
    const Eigen::Index h = net.hidden;
    const Eigen::MatrixXd x1 = tanh_m((x * net.W1).rowwise() + net.b1.transpose());
    const Eigen::MatrixXd a =
        ((x1 * net.Wx + carry.h * net.Wh).rowwise() + net.bl.transpose());
    const Eigen::MatrixXd gi = sigmoid_m(a.leftCols(h));
    const Eigen::MatrixXd gf = sigmoid_m(a.middleCols(h, h));
    const Eigen::MatrixXd gg = tanh_m(a.middleCols(2 * h, h));
    const Eigen::MatrixXd go = sigmoid_m(a.rightCols(h));
    const Eigen::MatrixXd c = gf.cwiseProduct(carry.c) + gi.cwiseProduct(gg);
    const Eigen::MatrixXd tc = tanh_m(c);
    const Eigen::MatrixXd hh = go.cwiseProduct(tc);
    const Eigen::MatrixXd z2 = tanh_m((hh * net.W2).rowwise() + net.b2.transpose());
    Eigen::MatrixXd y = (z2 * net.W3).rowwise() + net.b3.transpose();

    if (cache) {
        cache->x = x;
        cache->x1 = x1;
        cache->i = gi;
        cache->f = gf;
        cache->g = gg;
        cache->o = go;
        cache->c = c;
        cache->tc = tc;
        cache->h = hh;
        cache->h_prev = carry.h;
        cache->c_prev = carry.c;
        cache->z2 = z2;
        cache->y = y;
    }
    carry.h = hh;
    carry.c = c;
    return y;
}

struct Grads {
    Eigen::MatrixXd W1, Wx, Wh, W2, W3;
    Eigen::VectorXd b1, bl, b2, b3;

    explicit Grads(const ImitationNetwork& n) {
        W1.setZero(n.W1.rows(), n.W1.cols());
        Wx.setZero(n.Wx.rows(), n.Wx.cols());
        Wh.setZero(n.Wh.rows(), n.Wh.cols());
        W2.setZero(n.W2.rows(), n.W2.cols());
        W3.setZero(n.W3.rows(), n.W3.cols());
        b1.setZero(n.b1.size());
        bl.setZero(n.bl.size());
        b2.setZero(n.b2.size());
        b3.setZero(n.b3.size());
    }
};

Eigen::VectorXd flatten_like(const ImitationNetwork& net, const Grads& g) {
    ImitationNetwork tmp = net;
    tmp.W1 = g.W1;
    tmp.Wx = g.Wx;
    tmp.Wh = g.Wh;
    tmp.W2 = g.W2;
    tmp.W3 = g.W3;
    tmp.b1 = g.b1;
    tmp.bl = g.bl;
    tmp.b2 = g.b2;
    tmp.b3 = g.b3;
    return tmp.to_flat();
}

}  // namespace

ImitationNetwork ImitationNetwork::create(int in, int hidden, int out, std::uint64_t seed) {
    ImitationNetwork n = zeros(in, hidden, out);
    std::mt19937_64 rng(seed);
    auto fill = [&rng](Eigen::MatrixXd& m, double fan_in) {
        std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(fan_in),
                                                    1.0 / std::sqrt(fan_in));
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = dist(rng);
    };
    fill(n.W1, in);
    fill(n.Wx, hidden);
    fill(n.Wh, hidden);
    fill(n.W2, hidden);
    fill(n.W3, hidden);
    // forget-gate bias starts open so early gradients flow through time
    n.bl.segment(hidden, hidden).setOnes();
    return n;
}

ImitationNetwork ImitationNetwork::zeros(int in, int hidden, int out) {
    ImitationNetwork n;
    n.in = in;
    n.hidden = hidden;
    n.out = out;
    n.W1.setZero(in, hidden);
    n.b1.setZero(hidden);
    n.Wx.setZero(hidden, 4 * hidden);
    n.Wh.setZero(hidden, 4 * hidden);
    n.bl.setZero(4 * hidden);
    n.W2.setZero(hidden, hidden);
    n.b2.setZero(hidden);
    n.W3.setZero(hidden, out);
    n.b3.setZero(out);
    return n;
}

Eigen::Index ImitationNetwork::param_count() const {
    return W1.size() + b1.size() + Wx.size() + Wh.size() + bl.size() + W2.size() + b2.size() +
           W3.size() + b3.size();
}

Eigen::Index ImitationNetwork::weight_count() const {
    return W1.size() + Wx.size() + Wh.size() + W2.size() + W3.size();
}

Eigen::VectorXd ImitationNetwork::to_flat() const {
    Eigen::VectorXd theta(param_count());
    Eigen::Index at = 0;
    auto put_m = [&](const Eigen::MatrixXd& m) {
        theta.segment(at, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
        at += m.size();
    };
    auto put_v = [&](const Eigen::VectorXd& v) {
        theta.segment(at, v.size()) = v;
        at += v.size();
    };
    put_m(W1);
    put_v(b1);
    put_m(Wx);
    put_m(Wh);
    put_v(bl);
    put_m(W2);
    put_v(b2);
    put_m(W3);
    put_v(b3);
    return theta;
}

void ImitationNetwork::from_flat(const Eigen::VectorXd& theta) {
    if (theta.size() != param_count())
        throw std::invalid_argument("ImitationNetwork: parameter vector size mismatch");
    Eigen::Index at = 0;
    auto get_m = [&](Eigen::MatrixXd& m) {
        Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = theta.segment(at, m.size());
        at += m.size();
    };
    auto get_v = [&](Eigen::VectorXd& v) {
        v = theta.segment(at, v.size());
        at += v.size();
    };
    get_m(W1);
    get_v(b1);
    get_m(Wx);
    get_m(Wh);
    get_v(bl);
    get_m(W2);
    get_v(b2);
    get_m(W3);
    get_v(b3);
}

LstmCarry LstmCarry::zeros(Eigen::Index batch, Eigen::Index hidden) {
    LstmCarry c;
    c.h.setZero(batch, hidden);
    c.c.setZero(batch, hidden);
    return c;
}

std::vector<Eigen::MatrixXd> imitation_forward(const ImitationNetwork& net,
                                               const std::vector<Eigen::MatrixXd>& x_seq,
                                               LstmCarry& carry) {
    std::vector<Eigen::MatrixXd> out;
    out.reserve(x_seq.size());
    for (const auto& x : x_seq) {
        if (x.cols() != net.in) throw std::invalid_argument("imitation_forward: feature dim mismatch");
        if (carry.h.rows() != x.rows() || carry.h.cols() != net.hidden)
            throw std::invalid_argument("imitation_forward: carry dimension mismatch");
        out.push_back(forward_step(net, x, carry, nullptr));
    }
    return out;
}

namespace {

double loss_impl(const ImitationNetwork& net, const std::vector<Eigen::MatrixXd>& x_seq,
                 const std::vector<Eigen::MatrixXd>& t_seq, double l2, Eigen::VectorXd* grad_out) {
    if (x_seq.size() != t_seq.size() || x_seq.empty())
        throw std::invalid_argument("imitation loss: sequence length mismatch");
    const Eigen::Index T = static_cast<Eigen::Index>(x_seq.size());
    const Eigen::Index B = x_seq.front().rows();
    const double denom = static_cast<double>(B * T * net.out);

    std::vector<StepCache> caches(grad_out ? x_seq.size() : 0);
    LstmCarry carry = LstmCarry::zeros(B, net.hidden);
    double data_loss = 0.0;
    std::vector<Eigen::MatrixXd> dy(x_seq.size());
    for (std::size_t t = 0; t < x_seq.size(); ++t) {
        const Eigen::MatrixXd y =
            forward_step(net, x_seq[t], carry, grad_out ? &caches[t] : nullptr);
        const Eigen::MatrixXd e = y - t_seq[t];
        data_loss += e.squaredNorm();
        if (grad_out) dy[t] = (2.0 / denom) * e;
    }
    data_loss /= denom;

    const double wn = static_cast<double>(net.weight_count());
    const double reg = l2 / wn *
                       (net.W1.squaredNorm() + net.Wx.squaredNorm() + net.Wh.squaredNorm() +
                        net.W2.squaredNorm() + net.W3.squaredNorm());
    if (!grad_out) return data_loss + reg;

    Grads g(net);
    const Eigen::Index h = net.hidden;
    Eigen::MatrixXd dh_next = Eigen::MatrixXd::Zero(B, h);
    Eigen::MatrixXd dc_next = Eigen::MatrixXd::Zero(B, h);
    for (Eigen::Index t = T - 1; t >= 0; --t) {
        const StepCache& s = caches[static_cast<std::size_t>(t)];
        // output head
        g.W3 += s.z2.transpose() * dy[static_cast<std::size_t>(t)];
        g.b3 += dy[static_cast<std::size_t>(t)].colwise().sum().transpose();
        const Eigen::MatrixXd dz2 = dy[static_cast<std::size_t>(t)] * net.W3.transpose();
        const Eigen::MatrixXd da2 =
            dz2.cwiseProduct((1.0 - s.z2.array().square()).matrix());
        g.W2 += s.h.transpose() * da2;
        g.b2 += da2.colwise().sum().transpose();

        Eigen::MatrixXd dh = da2 * net.W2.transpose() + dh_next;
        Eigen::MatrixXd dc = dh.cwiseProduct(s.o).cwiseProduct(
                                 (1.0 - s.tc.array().square()).matrix()) +
                             dc_next;

        const Eigen::MatrixXd d_o = dh.cwiseProduct(s.tc);
        const Eigen::MatrixXd d_i = dc.cwiseProduct(s.g);
        const Eigen::MatrixXd d_g = dc.cwiseProduct(s.i);
        const Eigen::MatrixXd d_f = dc.cwiseProduct(s.c_prev);
        dc_next = dc.cwiseProduct(s.f);

        Eigen::MatrixXd da(B, 4 * h);
        da.leftCols(h) = d_i.cwiseProduct(s.i).cwiseProduct((1.0 - s.i.array()).matrix());
        da.middleCols(h, h) = d_f.cwiseProduct(s.f).cwiseProduct((1.0 - s.f.array()).matrix());
        da.middleCols(2 * h, h) = d_g.cwiseProduct((1.0 - s.g.array().square()).matrix());
        da.rightCols(h) = d_o.cwiseProduct(s.o).cwiseProduct((1.0 - s.o.array()).matrix());

        g.Wx += s.x1.transpose() * da;
        g.Wh += s.h_prev.transpose() * da;
        g.bl += da.colwise().sum().transpose();
        dh_next = da * net.Wh.transpose();

        const Eigen::MatrixXd dx1 = da * net.Wx.transpose();
        const Eigen::MatrixXd da1 = dx1.cwiseProduct((1.0 - s.x1.array().square()).matrix());
        g.W1 += s.x.transpose() * da1;
        g.b1 += da1.colwise().sum().transpose();
    }

    const double reg_coef = 2.0 * l2 / wn;
    g.W1 += reg_coef * net.W1;
    g.Wx += reg_coef * net.Wx;
    g.Wh += reg_coef * net.Wh;
    g.W2 += reg_coef * net.W2;
    g.W3 += reg_coef * net.W3;

    *grad_out = flatten_like(net, g);
    return data_loss + reg;
}

}  // namespace

double imitation_loss_and_grad(const ImitationNetwork& net,
                               const std::vector<Eigen::MatrixXd>& x_seq,
                               const std::vector<Eigen::MatrixXd>& t_seq, double l2,
                               Eigen::VectorXd& grad) {
    return loss_impl(net, x_seq, t_seq, l2, &grad);
}

double imitation_loss(const ImitationNetwork& net, const std::vector<Eigen::MatrixXd>& x_seq,
                      const std::vector<Eigen::MatrixXd>& t_seq, double l2) {
    return loss_impl(net, x_seq, t_seq, l2, nullptr);
}

// --- Dataset -------------------------------------------------------------------

std::size_t ImitationDataset::total_rows() const {
    std::size_t n = 0;
    for (const auto& f : features) n += static_cast<std::size_t>(f.rows());
    return n;
}

ImitationDataset collect_dataset(const std::vector<ClosedLoopLog>& runs, const BoundSet& bounds) {
    ImitationDataset ds;
    const Eigen::Vector3d lo = bounds.input_min(), hi = bounds.input_max();
    const Eigen::Vector3d tol = 1e-6 * (hi - lo);

    for (const auto& run : runs) {
        if (run.size() == 0) continue;
        std::vector<Eigen::RowVectorXd> feat_rows, tgt_rows;
        auto flush = [&]() {
            if (feat_rows.empty()) return;
            Eigen::MatrixXd F(feat_rows.size(), 5), Tg(tgt_rows.size(), 3);
            for (std::size_t r = 0; r < feat_rows.size(); ++r) {
                F.row(static_cast<Eigen::Index>(r)) = feat_rows[r];
                Tg.row(static_cast<Eigen::Index>(r)) = tgt_rows[r];
            }
            ds.features.push_back(std::move(F));
            ds.targets.push_back(std::move(Tg));
            feat_rows.clear();
            tgt_rows.clear();
        };
        for (std::size_t k = 0; k < run.size(); ++k) {
            Eigen::Vector3d u{run.fq[k], run.soi[k], run.vgt[k]};
            bool reject = false;
            for (int c = 0; c < 3; ++c) {
                if (u[c] < lo[c] - tol[c] || u[c] > hi[c] + tol[c]) reject = true;
                u[c] = std::clamp(u[c], lo[c], hi[c]);
            }
            if (reject) {
                flush();  // out-of-bound target breaks the sequence
                continue;
            }
            Eigen::RowVectorXd f(5);
            f << run.tout[k], run.tref[k] - run.tout[k], run.nox[k], run.pman[k], run.speed[k];
            feat_rows.push_back(f);
            tgt_rows.push_back(u.transpose());
        }
        flush();
    }
    if (ds.total_rows() == 0) throw std::invalid_argument("collect_dataset: no usable rows");
    return ds;
}

void save_dataset(const std::string& path, const ImitationDataset& ds) {
    csv::Table t;
    t.names = {"seq",      "tout_nm", "etout_nm", "nox_ppm", "pman_bar",
               "speed_rpm", "fq_mg",   "soi_cad",  "vgt_pct"};
    t.cols.resize(t.names.size());
    for (std::size_t s = 0; s < ds.features.size(); ++s) {
        const auto& F = ds.features[s];
        const auto& Tg = ds.targets[s];
        for (Eigen::Index r = 0; r < F.rows(); ++r) {
            t.cols[0].push_back(static_cast<double>(s));
            for (int c = 0; c < 5; ++c) t.cols[1 + c].push_back(F(r, c));
            for (int c = 0; c < 3; ++c) t.cols[6 + c].push_back(Tg(r, c));
        }
    }
    csv::write(path, t);
}

ImitationDataset load_dataset(const std::string& path) {
    const csv::Table t = csv::read(path);
    const auto& seq = t.column("seq");
    ImitationDataset ds;
    std::size_t begin = 0;
    for (std::size_t k = 1; k <= seq.size(); ++k) {
        if (k == seq.size() || seq[k] != seq[begin]) {
            const auto n = static_cast<Eigen::Index>(k - begin);
            Eigen::MatrixXd F(n, 5), Tg(n, 3);
            const char* fnames[5] = {"tout_nm", "etout_nm", "nox_ppm", "pman_bar", "speed_rpm"};
            const char* tnames[3] = {"fq_mg", "soi_cad", "vgt_pct"};
            for (int c = 0; c < 5; ++c) {
                const auto& col = t.column(fnames[c]);
                for (Eigen::Index r = 0; r < n; ++r) F(r, c) = col[begin + r];
            }
            for (int c = 0; c < 3; ++c) {
                const auto& col = t.column(tnames[c]);
                for (Eigen::Index r = 0; r < n; ++r) Tg(r, c) = col[begin + r];
            }
            ds.features.push_back(std::move(F));
            ds.targets.push_back(std::move(Tg));
            begin = k;
        }
    }
    return ds;
}

// --- Training --------------------------------------------------------------------

void TrainConfig::validate() const {
    if (minibatch < 1 || epochs < 1 || tbptt_len < 1 || window_stride < 1)
        throw std::invalid_argument("TrainConfig: counts must be positive");
    if (!(learning_rate > 0) || !(l2 >= 0) || lr_drop_period < 1)
        throw std::invalid_argument("TrainConfig: bad optimizer settings");
    if (!(lr_drop_factor > 0 && lr_drop_factor < 1))
        throw std::invalid_argument("TrainConfig: drop factor must be in (0, 1)");
    if (!(train_fraction > 0 && train_fraction < 1))
        throw std::invalid_argument("TrainConfig: train fraction must be in (0, 1)");
}

std::pair<ImitationDataset, ImitationDataset> split_imitation(const ImitationDataset& ds,
                                                              double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("split_imitation: fraction must be in (0, 1)");
    ImitationDataset train, val;
    const auto total = static_cast<double>(ds.total_rows());
    auto quota = static_cast<std::size_t>(std::llround(total * train_fraction));
    quota = std::clamp<std::size_t>(quota, 1, ds.total_rows() - 1);

    std::size_t used = 0;
    for (std::size_t s = 0; s < ds.features.size(); ++s) {
        const auto n = static_cast<std::size_t>(ds.features[s].rows());
        if (used >= quota) {
            val.features.push_back(ds.features[s]);
            val.targets.push_back(ds.targets[s]);
        } else if (used + n <= quota) {
            train.features.push_back(ds.features[s]);
            train.targets.push_back(ds.targets[s]);
        } else {
            const auto cut = static_cast<Eigen::Index>(quota - used);
            train.features.push_back(ds.features[s].topRows(cut));
            train.targets.push_back(ds.targets[s].topRows(cut));
            val.features.push_back(ds.features[s].bottomRows(ds.features[s].rows() - cut));
            val.targets.push_back(ds.targets[s].bottomRows(ds.targets[s].rows() - cut));
        }
        used += n;
    }
    return {std::move(train), std::move(val)};
}

namespace {

Eigen::MatrixXd vstack(const std::vector<Eigen::MatrixXd>& parts) {
    Eigen::Index rows = 0;
    for (const auto& p : parts) rows += p.rows();
    if (rows == 0) return {};
    Eigen::MatrixXd out(rows, parts.front().cols());
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleRows(at, p.rows()) = p;
        at += p.rows();
    }
    return out;
}

struct Window {
    std::size_t seq;
    Eigen::Index start;
};

// Stateful full-sequence evaluation; returns per-channel NRMSE in percent
// against physical-unit targets.
Eigen::Vector3d evaluate_nrmse(const ImitationNetwork& net, const Scaler& fs, const Scaler& ts,
                               const std::vector<Eigen::MatrixXd>& feats,
                               const std::vector<Eigen::MatrixXd>& tgts) {
    std::vector<Eigen::MatrixXd> preds, meas;
    for (std::size_t s = 0; s < feats.size(); ++s) {
        LstmCarry carry = LstmCarry::zeros(1, net.hidden);
        const Eigen::MatrixXd fsc = fs.apply(feats[s]);
        Eigen::MatrixXd pred(fsc.rows(), 3);
        for (Eigen::Index r = 0; r < fsc.rows(); ++r)
            pred.row(r) = forward_step(net, fsc.row(r), carry, nullptr);
        preds.push_back(ts.invert(pred));
        meas.push_back(tgts[s]);
    }
    const Eigen::MatrixXd P = vstack(preds), M = vstack(meas);
    Eigen::Vector3d out;
    for (int c = 0; c < 3; ++c) out[c] = nrmse(P.col(c), M.col(c));
    return out;
}

}  // namespace

TrainedImitation train_imitation(const ImitationDataset& dataset, const TrainConfig& cfg) {
    cfg.validate();
    if (dataset.total_rows() < static_cast<std::size_t>(cfg.tbptt_len + 1))
        throw std::invalid_argument("train_imitation: dataset smaller than one window");

    const auto [train_ds, val_ds] = split_imitation(dataset, cfg.train_fraction);
    const Eigen::MatrixXd train_f_all = vstack(train_ds.features);
    const Eigen::MatrixXd train_t_all = vstack(train_ds.targets);

    TrainedImitation out;
    out.feature_scaler = Scaler::fit_allow_constant(train_f_all);
    out.target_scaler = Scaler::fit_allow_constant(train_t_all);
    out.net = ImitationNetwork::create(5, 32, 3, cfg.seed);

    // pre-scale sequences once
    std::vector<Eigen::MatrixXd> tf, tt;
    for (std::size_t s = 0; s < train_ds.features.size(); ++s) {
        tf.push_back(out.feature_scaler.apply(train_ds.features[s]));
        tt.push_back(out.target_scaler.apply(train_ds.targets[s]));
    }

    std::vector<Window> windows;
    for (std::size_t s = 0; s < tf.size(); ++s)
        for (Eigen::Index st = 0; st + cfg.tbptt_len <= tf[s].rows(); st += cfg.window_stride)
            windows.push_back({s, st});
    if (windows.empty()) throw std::invalid_argument("train_imitation: no full-length windows");

    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    Eigen::VectorXd theta = out.net.to_flat();
    Eigen::VectorXd adam_m = Eigen::VectorXd::Zero(theta.size());
    Eigen::VectorXd adam_v = Eigen::VectorXd::Zero(theta.size());
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long long step = 0;
    Eigen::VectorXd last_good = theta;

    std::vector<std::size_t> order(windows.size());
    std::iota(order.begin(), order.end(), 0);

    bool diverged = false;
    for (int epoch = 0; epoch < cfg.epochs && !diverged; ++epoch) {
        const double lr =
            cfg.learning_rate * std::pow(cfg.lr_drop_factor, epoch / cfg.lr_drop_period);
        std::shuffle(order.begin(), order.end(), rng);

        double epoch_loss = 0.0;
        int batches = 0;
        for (std::size_t at = 0; at < order.size(); at += cfg.minibatch) {
            const auto bs = std::min<std::size_t>(cfg.minibatch, order.size() - at);
            std::vector<Eigen::MatrixXd> xb(cfg.tbptt_len, Eigen::MatrixXd(bs, 5));
            std::vector<Eigen::MatrixXd> tb(cfg.tbptt_len, Eigen::MatrixXd(bs, 3));
            for (std::size_t r = 0; r < bs; ++r) {
                const Window& w = windows[order[at + r]];
                for (int t = 0; t < cfg.tbptt_len; ++t) {
                    xb[t].row(static_cast<Eigen::Index>(r)) = tf[w.seq].row(w.start + t);
                    tb[t].row(static_cast<Eigen::Index>(r)) = tt[w.seq].row(w.start + t);
                }
            }
            Eigen::VectorXd grad;
            const double loss = imitation_loss_and_grad(out.net, xb, tb, cfg.l2, grad);
            if (!std::isfinite(loss)) {
                diverged = true;
                break;
            }
            epoch_loss += loss;
            ++batches;
            ++step;
            adam_m = beta1 * adam_m + (1.0 - beta1) * grad;
            adam_v = beta2 * adam_v + (1.0 - beta2) * grad.cwiseAbs2();
            const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            theta -= (lr / bc1) * adam_m.cwiseQuotient(
                         ((adam_v / bc2).cwiseSqrt().array() + eps).matrix());
            out.net.from_flat(theta);
        }
        if (diverged) {
            out.net.from_flat(last_good);
            break;
        }
        last_good = theta;

        out.curves.epoch.push_back(epoch);
        out.curves.learning_rate.push_back(lr);
        out.curves.train_loss.push_back(batches ? epoch_loss / batches : 0.0);
        out.curves.train_nrmse.push_back(evaluate_nrmse(out.net, out.feature_scaler,
                                                        out.target_scaler, train_ds.features,
                                                        train_ds.targets));
        out.curves.val_nrmse.push_back(val_ds.features.empty()
                                           ? Eigen::Vector3d::Zero().eval()
                                           : evaluate_nrmse(out.net, out.feature_scaler,
                                                            out.target_scaler, val_ds.features,
                                                            val_ds.targets));
    }
    return out;
}

// --- Deployment --------------------------------------------------------------------

ImitationController::ImitationController(TrainedImitation trained, BoundSet bounds)
    : net_(std::move(trained.net)),
      feature_scaler_(std::move(trained.feature_scaler)),
      target_scaler_(std::move(trained.target_scaler)),
      bounds_(bounds),
      carry_(LstmCarry::zeros(1, net_.hidden)) {}

void ImitationController::reset() { carry_ = LstmCarry::zeros(1, net_.hidden); }

Eigen::Vector3d ImitationController::step(const PlantState& meas, double t_ref, double speed) {
    Eigen::RowVectorXd f(5);
    f << meas.t_out, t_ref - meas.t_out, meas.nox, meas.p_man, speed;
    if (!f.allFinite()) throw std::invalid_argument("imitation_step: non-finite measurement");
    const Eigen::RowVectorXd fs = feature_scaler_.apply_row(f.transpose()).transpose();
    const Eigen::MatrixXd y = forward_step(net_, fs, carry_, nullptr);
    const Eigen::Vector3d u = target_scaler_.invert_row(y.row(0).transpose());
    return bounds_.clamp_input(u);
}

ControlDecision ImitationController::decide(const PlantState& meas, double t_ref, double speed) {
    return {step(meas, t_ref, speed), 0.0, 0.0, true};
}

}  // namespace lpvmpc
