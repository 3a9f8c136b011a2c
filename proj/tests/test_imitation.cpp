#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <random>

#include "lpvmpc/imitation.hpp"

using namespace lpvmpc;

namespace {

std::vector<Eigen::MatrixXd> random_seq(Eigen::Index T, Eigen::Index B, Eigen::Index dim,
                                        std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> d(-scale, scale);
    std::vector<Eigen::MatrixXd> seq;
    for (Eigen::Index t = 0; t < T; ++t)
        seq.push_back(Eigen::MatrixXd::NullaryExpr(B, dim, [&]() { return d(rng); }));
    return seq;
}

// central-difference gradient of the window loss, parameter by parameter
Eigen::VectorXd fd_gradient(ImitationNetwork net, const std::vector<Eigen::MatrixXd>& x,
                            const std::vector<Eigen::MatrixXd>& t, double l2) {
    Eigen::VectorXd theta = net.to_flat();
    Eigen::VectorXd grad(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const double h = 1e-5 * std::max(1.0, std::abs(theta[i]));
        Eigen::VectorXd tp = theta, tm = theta;
        tp[i] += h;
        tm[i] -= h;
        net.from_flat(tp);
        const double lp = imitation_loss(net, x, t, l2);
        net.from_flat(tm);
        const double lm = imitation_loss(net, x, t, l2);
        grad[i] = (lp - lm) / (2.0 * h);
    }
    return grad;
}

ImitationDataset synthetic_dataset(std::size_t rows, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    Eigen::MatrixXd F(rows, 5), T(rows, 3);
    double lag = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        for (int c = 0; c < 5; ++c) F(r, c) = 100.0 * d(rng);
        lag = 0.7 * lag + 0.3 * F(r, 1);
        // smooth recurrent mapping the network has to learn
        T(r, 0) = 10.0 + 0.5 * F(r, 0) + 0.2 * lag;
        T(r, 1) = -2.0 + 0.1 * F(r, 2);
        T(r, 2) = 70.0 + 0.25 * F(r, 3);
    }
    ImitationDataset ds;
    ds.features.push_back(F);
    ds.targets.push_back(T);
    return ds;
}

}  // namespace

TEST_CASE("parameter counts match the published architecture") {
    const ImitationNetwork n = ImitationNetwork::zeros(5, 32, 3);
    CHECK(n.W1.size() + n.b1.size() == 192);                       // FC1 5->32
    CHECK(n.Wx.size() + n.Wh.size() + n.bl.size() == 8320);        // LSTM 32
    CHECK(n.W2.size() + n.b2.size() == 1056);                      // FC2 32->32
    CHECK(n.W3.size() + n.b3.size() == 99);                        // FC3 32->3
    CHECK(n.param_count() == 9667);
}

TEST_CASE("flat parameter vector round-trips exactly") {
    ImitationNetwork n = ImitationNetwork::create(5, 32, 3, 9);
    const Eigen::VectorXd theta = n.to_flat();
    ImitationNetwork m = ImitationNetwork::zeros(5, 32, 3);
    m.from_flat(theta);
    CHECK((m.to_flat() - theta).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero parameters and zero carry produce zero outputs") {
    const ImitationNetwork n = ImitationNetwork::zeros(5, 32, 3);
    std::mt19937_64 rng(91);
    const auto x = random_seq(4, 2, 5, rng);
    LstmCarry carry = LstmCarry::zeros(2, 32);
    const auto y = imitation_forward(n, x, carry);
    for (const auto& yt : y) CHECK(yt.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward is stateful: split-and-thread equals single shot") {
    const ImitationNetwork n = ImitationNetwork::create(5, 32, 3, 10);
    std::mt19937_64 rng(92);
    const auto x = random_seq(20, 3, 5, rng);

    LstmCarry c1 = LstmCarry::zeros(3, 32);
    const auto full = imitation_forward(n, x, c1);

    LstmCarry c2 = LstmCarry::zeros(3, 32);
    const std::vector<Eigen::MatrixXd> first(x.begin(), x.begin() + 12);
    const std::vector<Eigen::MatrixXd> second(x.begin() + 12, x.end());
    const auto ya = imitation_forward(n, first, c2);
    const auto yb = imitation_forward(n, second, c2);

    for (int t = 0; t < 12; ++t)
        CHECK((full[t] - ya[t]).cwiseAbs().maxCoeff() < 1e-12);
    for (int t = 0; t < 8; ++t)
        CHECK((full[12 + t] - yb[t]).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((c1.h - c2.h).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("random finite input gives finite output") {
    const ImitationNetwork n = ImitationNetwork::create(5, 32, 3, 11);
    std::mt19937_64 rng(93);
    const auto x = random_seq(10, 4, 5, rng, 100.0);
    LstmCarry carry = LstmCarry::zeros(4, 32);
    for (const auto& yt : imitation_forward(n, x, carry)) CHECK(yt.allFinite());
}

TEST_CASE("analytic gradients match central finite differences to 1e-5") {
    // small hidden size keeps the parameter sweep quick; the acceptance suite
    // repeats this at the full width
    ImitationNetwork n = ImitationNetwork::create(5, 6, 3, 12);
    std::mt19937_64 rng(94);
    const auto x = random_seq(5, 2, 5, rng);
    const auto t = random_seq(5, 2, 3, rng);
    const double l2 = 0.8;

    Eigen::VectorXd analytic;
    imitation_loss_and_grad(n, x, t, l2, analytic);
    const Eigen::VectorXd numeric = fd_gradient(n, x, t, l2);

    double worst = 0.0;
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-8});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("collect_dataset extracts the documented features and enforces bounds") {
    ClosedLoopLog run;
    for (int k = 0; k < 10; ++k) {
        run.cycle.push_back(k);
        run.tref.push_back(200.0 + k);
        run.tout.push_back(190.0 + k);
        run.fq.push_back(45.0);
        run.soi.push_back(5.0);
        run.vgt.push_back(85.0);
        run.pman.push_back(1.8);
        run.nox.push_back(300.0);
        run.slack.push_back(0.0);
        run.cost.push_back(0.0);
        run.solve_us.push_back(10.0);
        run.converged.push_back(1);
        run.speed.push_back(1500.0);
    }
    run.soi[4] = 25.0;  // far outside the SOI range: row rejected, sequence split

    const ImitationDataset ds = collect_dataset({run});
    CHECK(ds.total_rows() == 9);
    CHECK(ds.features.size() == 2);  // the rejected row broke the sequence
    // e_Tout column is exactly tref - tout
    CHECK(ds.features[0](0, 1) == doctest::Approx(10.0));
    CHECK(ds.features[0](0, 0) == doctest::Approx(190.0));
    CHECK(ds.features[0](0, 4) == doctest::Approx(1500.0));
}

TEST_CASE("dataset split follows the 1600/400 contiguous convention") {
    ClosedLoopLog run;
    for (int k = 0; k < 2000; ++k) {
        run.cycle.push_back(k);
        run.tref.push_back(200.0);
        run.tout.push_back(195.0);
        run.fq.push_back(45.0);
        run.soi.push_back(5.0);
        run.vgt.push_back(85.0);
        run.pman.push_back(1.8);
        run.nox.push_back(300.0);
        run.slack.push_back(0.0);
        run.cost.push_back(0.0);
        run.solve_us.push_back(10.0);
        run.converged.push_back(1);
        run.speed.push_back(1500.0);
    }
    const ImitationDataset ds = collect_dataset({run});
    const auto [train, val] = split_imitation(ds, 0.8);
    CHECK(train.total_rows() == 1600);
    CHECK(val.total_rows() == 400);
}

TEST_CASE("dataset csv round trip preserves sequence structure") {
    const ImitationDataset ds = synthetic_dataset(50, 13);
    const auto path = (std::filesystem::temp_directory_path() / "lpvmpc_ds.csv").string();
    save_dataset(path, ds);
    const ImitationDataset back = load_dataset(path);
    REQUIRE(back.features.size() == ds.features.size());
    CHECK((back.features[0] - ds.features[0]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.targets[0] - ds.targets[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training reduces the loss and is bitwise deterministic") {
    const ImitationDataset ds = synthetic_dataset(400, 14);
    TrainConfig cfg;
    cfg.epochs = 25;
    cfg.minibatch = 64;
    cfg.tbptt_len = 16;
    cfg.window_stride = 2;
    cfg.l2 = 0.01;
    cfg.seed = 5;

    const TrainedImitation a = train_imitation(ds, cfg);
    REQUIRE(a.curves.train_loss.size() == 25);
    CHECK(a.curves.train_loss.back() < a.curves.train_loss.front());

    const TrainedImitation b = train_imitation(ds, cfg);
    for (int e = 0; e < 3; ++e) CHECK(a.curves.train_loss[e] == b.curves.train_loss[e]);
    CHECK((a.net.to_flat() - b.net.to_flat()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("learning rate schedule halves every drop period") {
    const ImitationDataset ds = synthetic_dataset(120, 15);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.lr_drop_period = 2;
    cfg.minibatch = 32;
    cfg.tbptt_len = 8;
    cfg.seed = 6;
    const TrainedImitation t = train_imitation(ds, cfg);
    CHECK(t.curves.learning_rate[0] == doctest::Approx(0.01));
    CHECK(t.curves.learning_rate[2] == doctest::Approx(0.005));
    CHECK(t.curves.learning_rate[4] == doctest::Approx(0.0025));
}

TEST_CASE("network file round trips bit-identically") {
    const ImitationDataset ds = synthetic_dataset(120, 16);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.minibatch = 16;
    cfg.tbptt_len = 8;
    cfg.seed = 7;
    const TrainedImitation t = train_imitation(ds, cfg);
    const auto path = (std::filesystem::temp_directory_path() / "lpvmpc_net.json").string();
    save_network(path, t);
    const TrainedImitation back = load_network(path);
    CHECK((back.net.to_flat() - t.net.to_flat()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.feature_scaler.offset() - t.feature_scaler.offset()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("controller clamps raw outputs into the input bounds") {
    TrainedImitation t;
    t.net = ImitationNetwork::zeros(5, 32, 3);
    t.net.b3 << 100.0, 14.0, 120.0;  // raw outputs far outside the constraint table
    t.feature_scaler = Scaler::from_offsets_spans(Eigen::VectorXd::Zero(5),
                                                  Eigen::VectorXd::Ones(5));
    t.target_scaler = Scaler::from_offsets_spans(Eigen::VectorXd::Zero(3),
                                                 Eigen::VectorXd::Ones(3));
    ImitationController ctl(t);
    PlantState meas;
    meas.t_out = 200;
    meas.p_man = 1.8;
    meas.nox = 300;
    const Eigen::Vector3d u = ctl.step(meas, 210.0, 1500.0);
    CHECK(u[0] == doctest::Approx(80.0));   // FQ ceiling
    CHECK(u[1] == doctest::Approx(11.0));   // SOI ceiling
    CHECK(u[2] == doctest::Approx(100.0));  // VGT ceiling
}

TEST_CASE("controller reset clears the recurrent carry") {
    const ImitationDataset ds = synthetic_dataset(200, 17);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.minibatch = 16;
    cfg.tbptt_len = 8;
    cfg.seed = 8;
    ImitationController ctl(train_imitation(ds, cfg));
    PlantState meas;
    meas.t_out = 50;
    meas.p_man = 40;
    meas.nox = 60;
    const Eigen::Vector3d first = ctl.step(meas, 60.0, 70.0);
    ctl.step(meas, 61.0, 70.0);
    ctl.reset();
    const Eigen::Vector3d again = ctl.step(meas, 60.0, 70.0);
    CHECK((first - again).cwiseAbs().maxCoeff() == 0.0);
}
