#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "lpvmpc/lpv_model.hpp"

namespace lpvmpc {

namespace {

using nlohmann::json;

json to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (rows == 0) return {};
    const auto cols = static_cast<Eigen::Index>(j.at(0).size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j.at(r).size()) != cols)
            throw std::runtime_error("model file: ragged matrix");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
    }
    return m;
}

json to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j.at(i).get<double>();
    return v;
}

json scaler_to_json(const Scaler& s) {
    return json{{"offset", to_json(s.offset())}, {"span", to_json(s.span())}};
}

Scaler scaler_from_json(const json& j) {
    return Scaler::from_offsets_spans(vector_from_json(j.at("offset")),
                                      vector_from_json(j.at("span")));
}

json load_checked(const std::string& path, const char* format) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    json j = json::parse(in);
    if (j.value("format", "") != format)
        throw std::runtime_error("'" + path + "' is not a " + std::string(format) + " file");
    return j;
}

void dump(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << j.dump(1, '\t') << '\n';
}

}  // namespace

void save_model(const std::string& path, const LpvModel& model) {
    json j{{"format", "lpvmpc-model"},
           {"version", 1},
           {"kernel", {{"sigma", model.kernel().sigma}, {"gamma", to_json(model.kernel().gamma)}}},
           {"schedule", model.schedule_channels()},
           {"alpha", to_json(model.alpha())},
           {"train_x", to_json(model.train_x())},
           {"train_u", to_json(model.train_u())},
           {"train_p", to_json(model.train_p())},
           {"train_x_next", to_json(model.train_x_next())},
           {"x_scaler", scaler_to_json(model.x_scaler())},
           {"u_scaler", scaler_to_json(model.u_scaler())},
           {"p_scaler", scaler_to_json(model.p_scaler())}};
    dump(path, j);
}

LpvModel load_model(const std::string& path) {
    const json j = load_checked(path, "lpvmpc-model");
    KernelConfig kc;
    kc.sigma = j.at("kernel").at("sigma").get<double>();
    kc.gamma = vector_from_json(j.at("kernel").at("gamma"));
    LpvModel m = LpvModel::from_parts(matrix_from_json(j.at("alpha")),
                                      matrix_from_json(j.at("train_x")),
                                      matrix_from_json(j.at("train_u")),
                                      matrix_from_json(j.at("train_p")),
                                      matrix_from_json(j.at("train_x_next")), kc);
    m.set_scalers(scaler_from_json(j.at("x_scaler")), scaler_from_json(j.at("u_scaler")),
                  scaler_from_json(j.at("p_scaler")),
                  j.at("schedule").get<std::vector<std::string>>());
    return m;
}

void save_arx(const std::string& path, const FittedArx& arx) {
    json j{{"format", "lpvmpc-arx"},
           {"version", 1},
           {"A", to_json(arx.lti.A)},
           {"B", to_json(arx.lti.B)},
           {"p_frozen", to_json(arx.lti.p_frozen)},
           {"x_scaler", scaler_to_json(arx.x_scaler)},
           {"u_scaler", scaler_to_json(arx.u_scaler)}};
    dump(path, j);
}

FittedArx load_arx(const std::string& path) {
    const json j = load_checked(path, "lpvmpc-arx");
    FittedArx arx;
    arx.lti.A = matrix_from_json(j.at("A"));
    arx.lti.B = matrix_from_json(j.at("B"));
    arx.lti.p_frozen = vector_from_json(j.at("p_frozen"));
    arx.x_scaler = scaler_from_json(j.at("x_scaler"));
    arx.u_scaler = scaler_from_json(j.at("u_scaler"));
    return arx;
}

}  // namespace lpvmpc
