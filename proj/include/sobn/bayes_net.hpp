#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sobn/errors.hpp"
#include "sobn/rng.hpp"

namespace sobn {

/// One training row: per-node observed value, or nullopt when missing.
using Observation = std::vector<std::optional<int>>;

struct Dataset {
    std::vector<Observation> rows;

    std::size_t size() const { return rows.size(); }
};

/// Bijection between (node, parent assignment, value) triples and flat
/// parameter positions. One family = one CPT row, contiguous in the flat
/// layout. Parent assignments are mixed-radix encoded, first parent most
/// significant.
class ParamIndex {
public:
    ParamIndex() = default;

    ParamIndex(const std::vector<int>& card, const std::vector<std::vector<int>>& parents)
        : card_(card) {
        int n = static_cast<int>(card.size());
        node_offset_.resize(n + 1, 0);
        n_pa_.resize(n);
        parent_cards_.resize(n);
        for (int i = 0; i < n; ++i) {
            int npa = 1;
            for (int p : parents[i]) {
                parent_cards_[i].push_back(card[p]);
                npa *= card[p];
            }
            n_pa_[i] = npa;
            node_offset_[i + 1] = node_offset_[i] + npa * card[i];
        }
    }

    int total() const { return node_offset_.back(); }
    int num_nodes() const { return static_cast<int>(card_.size()); }
    int cardinality(int node) const { return card_[node]; }
    int num_parent_assignments(int node) const { return n_pa_[node]; }
    int node_begin(int node) const { return node_offset_[node]; }
    int node_end(int node) const { return node_offset_[node + 1]; }

    int flat(int node, int pa_idx, int value) const {
        return node_offset_[node] + pa_idx * card_[node] + value;
    }

    int family_begin(int node, int pa_idx) const { return flat(node, pa_idx, 0); }

    /// Node owning flat position j.
    int node_of(int j) const {
        int lo = 0, hi = num_nodes();
        while (hi - lo > 1) {
            int mid = (lo + hi) / 2;
            if (node_offset_[mid] <= j) lo = mid; else hi = mid;
        }
        return lo;
    }

    int value_of(int j) const {
        int i = node_of(j);
        return (j - node_offset_[i]) % card_[i];
    }

    int pa_index_of(int j) const {
        int i = node_of(j);
        return (j - node_offset_[i]) / card_[i];
    }

    /// Mixed-radix encoding of a concrete parent value tuple.
    int pa_index(int node, std::span<const int> parent_values) const {
        int idx = 0;
        for (std::size_t k = 0; k < parent_values.size(); ++k)
            idx = idx * parent_cards_[node][k] + parent_values[k];
        return idx;
    }

    /// Total number of families across all nodes.
    int num_families() const {
        int f = 0;
        for (int i = 0; i < num_nodes(); ++i) f += n_pa_[i];
        return f;
    }

private:
    std::vector<int> card_;
    std::vector<int> node_offset_;
    std::vector<int> n_pa_;
    std::vector<std::vector<int>> parent_cards_;
};

/// Topological order of a parent-list DAG; throws StructureError on a cycle.
inline std::vector<int> topo_order(const std::vector<std::vector<int>>& parents) {
    int n = static_cast<int>(parents.size());
    std::vector<int> indegree(n, 0);
    std::vector<std::vector<int>> children(n);
    for (int i = 0; i < n; ++i) {
        indegree[i] = static_cast<int>(parents[i].size());
        for (int p : parents[i]) {
            if (p < 0 || p >= n) throw StructureError("parent id out of range");
            children[p].push_back(i);
        }
    }
    std::vector<int> order;
    order.reserve(n);
    std::vector<int> frontier;
    for (int i = 0; i < n; ++i)
        if (indegree[i] == 0) frontier.push_back(i);
    while (!frontier.empty()) {
        // smallest id first, so the order is canonical
        auto it = std::min_element(frontier.begin(), frontier.end());
        int v = *it;
        frontier.erase(it);
        order.push_back(v);
        for (int c : children[v])
            if (--indegree[c] == 0) frontier.push_back(c);
    }
    if (static_cast<int>(order.size()) != n) throw StructureError("parent graph contains a cycle");
    return order;
}

/// Discrete Bayesian network: structure plus a flat CPT parameter vector.
/// Immutable in practice after construction; copy to modify parameters.
struct BayesNet {
    std::vector<std::string> names;
    std::vector<int> card;
    std::vector<std::vector<int>> parents;
    ParamIndex index;
    std::vector<double> theta;

    BayesNet() = default;

    BayesNet(std::vector<std::string> names_, std::vector<int> card_,
             std::vector<std::vector<int>> parents_)
        : names(std::move(names_)), card(std::move(card_)), parents(std::move(parents_)) {
        if (names.size() != card.size() || card.size() != parents.size())
            throw StructureError("node field lengths disagree");
        for (int c : card)
            if (c < 2) throw StructureError("node cardinality must be >= 2");
        topo_order(parents); // validates acyclicity
        index = ParamIndex(card, parents);
        theta.assign(index.total(), 0.0);
        // default to uniform rows so a structure-only net is still valid
        for (int i = 0; i < num_nodes(); ++i)
            for (int pa = 0; pa < index.num_parent_assignments(i); ++pa)
                for (int x = 0; x < card[i]; ++x)
                    theta[index.flat(i, pa, x)] = 1.0 / card[i];
    }

    int num_nodes() const { return static_cast<int>(card.size()); }
    int num_params() const { return index.total(); }

    std::vector<int> order() const { return topo_order(parents); }

    std::vector<int> leaves() const {
        std::vector<bool> has_child(card.size(), false);
        for (const auto& ps : parents)
            for (int p : ps) has_child[p] = true;
        std::vector<int> out;
        for (int i = 0; i < num_nodes(); ++i)
            if (!has_child[i]) out.push_back(i);
        return out;
    }

    int node_by_name(const std::string& name) const {
        for (int i = 0; i < num_nodes(); ++i)
            if (names[i] == name) return i;
        throw ArgumentError("unknown node id: " + name);
    }

    /// Parent assignment index realized by a complete assignment.
    int pa_index_at(int node, std::span<const int> assignment) const {
        std::vector<int> pv;
        pv.reserve(parents[node].size());
        for (int p : parents[node]) pv.push_back(assignment[p]);
        return index.pa_index(node, pv);
    }

    /// Every CPT row in [0,1] and summing to 1 within tol.
    bool valid_parameters(double tol = 1e-12) const {
        for (int i = 0; i < num_nodes(); ++i) {
            for (int pa = 0; pa < index.num_parent_assignments(i); ++pa) {
                double sum = 0.0;
                for (int x = 0; x < card[i]; ++x) {
                    double v = theta[index.flat(i, pa, x)];
                    if (v < 0.0 || v > 1.0) return false;
                    sum += v;
                }
                if (std::abs(sum - 1.0) > tol) return false;
            }
        }
        return true;
    }
};

/// Draw every CPT row from the flat Dirichlet (uniform on the simplex).
inline BayesNet sample_ground_truth(const BayesNet& structure, Rng& rng) {
    BayesNet net = structure;
    for (int i = 0; i < net.num_nodes(); ++i) {
        std::vector<double> ones(net.card[i], 1.0);
        for (int pa = 0; pa < net.index.num_parent_assignments(i); ++pa) {
            auto row = rng.dirichlet(ones);
            for (int x = 0; x < net.card[i]; ++x)
                net.theta[net.index.flat(i, pa, x)] = row[x];
        }
    }
    return net;
}

/// One complete joint draw, values in topological order of dependence.
inline std::vector<int> draw_assignment(const BayesNet& net, const std::vector<int>& order, Rng& rng) {
    std::vector<int> values(net.num_nodes(), -1);
    for (int i : order) {
        int pa = net.pa_index_at(i, values);
        std::span<const double> row(net.theta.data() + net.index.family_begin(i, pa),
                                    static_cast<std::size_t>(net.card[i]));
        values[i] = rng.categorical(row);
    }
    return values;
}

/// count i.i.d. complete rows from the joint distribution.
inline Dataset ancestral_sample(const BayesNet& net, int count, Rng& rng) {
    auto order = net.order();
    Dataset data;
    data.rows.reserve(count);
    for (int t = 0; t < count; ++t) {
        auto values = draw_assignment(net, order, rng);
        Observation row(net.num_nodes());
        for (int i = 0; i < net.num_nodes(); ++i) row[i] = values[i];
        data.rows.push_back(std::move(row));
    }
    return data;
}

/// Keep each cell independently with probability f, otherwise mark missing.
inline Dataset mask_cells(const Dataset& data, double f, Rng& rng) {
    if (f < 0.0 || f > 1.0) throw ArgumentError("retention fraction must be in [0,1]");
    Dataset out;
    out.rows.reserve(data.rows.size());
    for (const auto& row : data.rows) {
        Observation masked(row.size());
        for (std::size_t i = 0; i < row.size(); ++i)
            if (row[i].has_value() && rng.bernoulli(f)) masked[i] = row[i];
        out.rows.push_back(std::move(masked));
    }
    return out;
}

/// Blank every cell outside `keep`.
inline Dataset mask_pattern(const Dataset& data, const std::vector<int>& keep, int num_nodes) {
    std::vector<bool> kept(num_nodes, false);
    for (int k : keep) {
        if (k < 0 || k >= num_nodes) throw ArgumentError("unknown node id in keep set");
        kept[k] = true;
    }
    Dataset out;
    out.rows.reserve(data.rows.size());
    for (const auto& row : data.rows) {
        Observation masked(row.size());
        for (std::size_t i = 0; i < row.size(); ++i)
            if (kept[i]) masked[i] = row[i];
        out.rows.push_back(std::move(masked));
    }
    return out;
}

} // namespace sobn
