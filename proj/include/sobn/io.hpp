#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "sobn/bayes_net.hpp"
#include "sobn/errors.hpp"
#include "sobn/posterior.hpp"

namespace sobn {

// ---------------------------------------------------------------- networks

/// Network JSON: {"nodes":[{"id","cardinality","parents":[...],"cpt":[...]}]}
/// with cpt optional (row-major over parent assignments then values).
inline BayesNet net_from_json(const nlohmann::json& j) try {
    if (!j.contains("nodes") || !j["nodes"].is_array())
        throw StructureError("network file: missing \"nodes\" array");
    std::vector<std::string> names;
    std::vector<int> card;
    std::vector<std::vector<std::string>> parent_names;
    for (const auto& nj : j["nodes"]) {
        names.push_back(nj.at("id").get<std::string>());
        card.push_back(nj.at("cardinality").get<int>());
        std::vector<std::string> ps;
        if (nj.contains("parents"))
            for (const auto& p : nj["parents"]) ps.push_back(p.get<std::string>());
        parent_names.push_back(std::move(ps));
    }
    auto find = [&](const std::string& name) {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return static_cast<int>(i);
        throw StructureError("network file: unknown parent id \"" + name + "\"");
    };
    std::vector<std::vector<int>> parents(names.size());
    for (std::size_t i = 0; i < names.size(); ++i)
        for (const auto& p : parent_names[i]) parents[i].push_back(find(p));

    BayesNet net(names, card, parents);
    std::size_t node_i = 0;
    for (const auto& nj : j["nodes"]) {
        if (nj.contains("cpt")) {
            auto cpt = nj["cpt"].get<std::vector<double>>();
            int begin = net.index.node_begin(static_cast<int>(node_i));
            int len = net.index.node_end(static_cast<int>(node_i)) - begin;
            if (static_cast<int>(cpt.size()) != len)
                throw StructureError("network file: cpt length mismatch at node " +
                                     names[node_i]);
            std::copy(cpt.begin(), cpt.end(), net.theta.begin() + begin);
        }
        ++node_i;
    }
    if (!net.valid_parameters(1e-9))
        throw StructureError("network file: a CPT row is not a probability vector");
    return net;
} catch (const nlohmann::json::exception& e) {
    throw StructureError(std::string("network file: ") + e.what());
}

inline nlohmann::json net_to_json(const BayesNet& net, bool with_cpt = true) {
    nlohmann::json nodes = nlohmann::json::array();
    for (int i = 0; i < net.num_nodes(); ++i) {
        nlohmann::json nj;
        nj["id"] = net.names[i];
        nj["cardinality"] = net.card[i];
        nlohmann::json ps = nlohmann::json::array();
        for (int p : net.parents[i]) ps.push_back(net.names[p]);
        nj["parents"] = ps;
        if (with_cpt) {
            std::vector<double> cpt(net.theta.begin() + net.index.node_begin(i),
                                    net.theta.begin() + net.index.node_end(i));
            nj["cpt"] = cpt;
        }
        nodes.push_back(nj);
    }
    return nlohmann::json{{"nodes", nodes}};
}

inline BayesNet load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StructureError("cannot open network file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw StructureError("network file " + path + ": " + e.what());
    }
    return net_from_json(j);
}

inline void save_network(const BayesNet& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw StructureError("cannot write network file: " + path);
    out << net_to_json(net).dump(2) << "\n";
}

// ---------------------------------------------------------------- datasets

/// Dataset CSV: header row of node ids, one column per node, "?" = missing.
inline void save_dataset(const Dataset& data, const BayesNet& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw StructureError("cannot write dataset file: " + path);
    for (int i = 0; i < net.num_nodes(); ++i)
        out << (i ? "," : "") << net.names[i];
    out << "\n";
    for (const auto& row : data.rows) {
        for (int i = 0; i < net.num_nodes(); ++i) {
            if (i) out << ",";
            if (row[i].has_value()) out << *row[i];
            else out << "?";
        }
        out << "\n";
    }
}

inline Dataset load_dataset(const std::string& path, const BayesNet& net) {
    std::ifstream in(path);
    if (!in) throw StructureError("cannot open dataset file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw StructureError("dataset file is empty: " + path);

    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string tok;
        while (std::getline(ss, tok, ',')) out.push_back(tok);
        if (!s.empty() && s.back() == ',') out.push_back("");
        return out;
    };
    auto header = split(line);
    std::vector<int> col_to_node(header.size());
    for (std::size_t c = 0; c < header.size(); ++c)
        col_to_node[c] = net.node_by_name(header[c]);

    Dataset data;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != header.size())
            throw StructureError(path + ":" + std::to_string(line_no) + ": column count mismatch");
        Observation row(net.num_nodes());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (cells[c] == "?") continue;
            int node = col_to_node[c];
            int v = std::stoi(cells[c]);
            if (v < 0 || v >= net.card[node])
                throw StructureError(path + ":" + std::to_string(line_no) +
                                     ": value out of domain for " + net.names[node]);
            row[node] = v;
        }
        data.rows.push_back(std::move(row));
    }
    return data;
}

// --------------------------------------------------------------- posteriors

inline nlohmann::json dirichlet_to_json(const DirichletProduct& dp) {
    nlohmann::json families = nlohmann::json::array();
    for (int i = 0; i < dp.index.num_nodes(); ++i) {
        for (int pa = 0; pa < dp.index.num_parent_assignments(i); ++pa) {
            int begin = dp.index.family_begin(i, pa);
            std::vector<double> a(dp.alpha.begin() + begin,
                                  dp.alpha.begin() + begin + dp.index.cardinality(i));
            families.push_back({{"node", i}, {"pa_index", pa}, {"alpha", a}});
        }
    }
    return nlohmann::json{{"type", "dirichlet"}, {"families", families}};
}

inline nlohmann::json gaussian_to_json(const GaussianPosterior& g) {
    std::vector<double> mean(g.mean.data(), g.mean.data() + g.mean.size());
    std::vector<double> lower;
    for (int r = 0; r < g.cov.rows(); ++r)
        for (int c = 0; c <= r; ++c) lower.push_back(g.cov(r, c));
    return nlohmann::json{{"type", "gaussian"}, {"mean", mean}, {"cov_lower", lower}};
}

/// Reads either posterior form; Dirichlet form is converted via to_gaussian.
inline GaussianPosterior load_posterior(const std::string& path, const BayesNet& net) {
    std::ifstream in(path);
    if (!in) throw StructureError("cannot open posterior file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw StructureError("posterior file " + path + ": " + e.what());
    }
    std::string type = j.at("type").get<std::string>();
    if (type == "dirichlet") {
        DirichletProduct dp;
        dp.index = net.index;
        dp.alpha.assign(net.num_params(), 0.0);
        for (const auto& fj : j.at("families")) {
            int node = fj.at("node").get<int>();
            int pa = fj.at("pa_index").get<int>();
            auto a = fj.at("alpha").get<std::vector<double>>();
            int begin = net.index.family_begin(node, pa);
            std::copy(a.begin(), a.end(), dp.alpha.begin() + begin);
        }
        return to_gaussian(dp);
    }
    if (type == "gaussian") {
        auto mean = j.at("mean").get<std::vector<double>>();
        auto lower = j.at("cov_lower").get<std::vector<double>>();
        int P = static_cast<int>(mean.size());
        GaussianPosterior g;
        g.mean = Eigen::Map<Eigen::VectorXd>(mean.data(), P);
        g.cov = Eigen::MatrixXd::Zero(P, P);
        std::size_t idx = 0;
        for (int r = 0; r < P; ++r)
            for (int c = 0; c <= r; ++c) {
                g.cov(r, c) = lower.at(idx);
                g.cov(c, r) = lower.at(idx);
                ++idx;
            }
        return g;
    }
    throw StructureError("posterior file: unknown type \"" + type + "\"");
}

// ---------------------------------------------------------------- evidence

/// Parse "X0=1,X2=0"; empty string means no evidence.
inline Observation parse_evidence(const std::string& text, const BayesNet& net) {
    Observation ev(net.num_nodes());
    if (text.empty()) return ev;
    std::stringstream ss(text);
    std::string pair;
    std::size_t pos = 0;
    while (std::getline(ss, pair, ',')) {
        auto eq = pair.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 >= pair.size())
            throw ArgumentError("evidence: malformed pair \"" + pair + "\" at position " +
                                std::to_string(pos));
        int node = net.node_by_name(pair.substr(0, eq));
        int value;
        try {
            value = std::stoi(pair.substr(eq + 1));
        } catch (...) {
            throw ArgumentError("evidence: non-numeric value in \"" + pair + "\"");
        }
        if (value < 0 || value >= net.card[node])
            throw ArgumentError("evidence: value out of domain in \"" + pair + "\"");
        ev[node] = value;
        pos += pair.size() + 1;
    }
    return ev;
}

} // namespace sobn
