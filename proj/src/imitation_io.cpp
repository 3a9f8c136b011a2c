#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "lpvmpc/imitation.hpp"

namespace lpvmpc {

namespace {

using nlohmann::json;

json vec_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Eigen::VectorXd vec_from(const json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j.at(i).get<double>();
    return v;
}

}  // namespace

void save_network(const std::string& path, const TrainedImitation& trained) {
    const auto& n = trained.net;
    json j{{"format", "lpvmpc-imitation"},
           {"version", 1},
           {"architecture",
            {{"in", n.in}, {"hidden", n.hidden}, {"out", n.out},
             {"layers", {"fc_tanh", "lstm", "fc_tanh", "fc_linear"}}}},
           {"parameters", vec_json(n.to_flat())},
           {"feature_scaler",
            {{"offset", vec_json(trained.feature_scaler.offset())},
             {"span", vec_json(trained.feature_scaler.span())}}},
           {"target_scaler",
            {{"offset", vec_json(trained.target_scaler.offset())},
             {"span", vec_json(trained.target_scaler.span())}}}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << j.dump(1, '\t') << '\n';
}

TrainedImitation load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    const json j = json::parse(in);
    if (j.value("format", "") != "lpvmpc-imitation")
        throw std::runtime_error("'" + path + "' is not an imitation network file");

    const auto& arch = j.at("architecture");
    TrainedImitation t;
    t.net = ImitationNetwork::zeros(arch.at("in").get<int>(), arch.at("hidden").get<int>(),
                                    arch.at("out").get<int>());
    t.net.from_flat(vec_from(j.at("parameters")));
    t.feature_scaler = Scaler::from_offsets_spans(vec_from(j.at("feature_scaler").at("offset")),
                                                  vec_from(j.at("feature_scaler").at("span")));
    t.target_scaler = Scaler::from_offsets_spans(vec_from(j.at("target_scaler").at("offset")),
                                                 vec_from(j.at("target_scaler").at("span")));
    return t;
}

}  // namespace lpvmpc
