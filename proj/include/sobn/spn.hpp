#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "sobn/bayes_net.hpp"
#include "sobn/errors.hpp"

namespace sobn {

/// Evidence likelihood and its full parameter gradient from one backward pass.
struct PassResult {
    double value = 0.0;
    std::vector<double> gradient; // length P, gradient[j] = dp(e)/d theta_j
};

/// Arithmetic circuit for the network polynomial of a BayesNet.
///
/// Compilation follows the classic variable-elimination construction: each
/// CPT becomes a factor whose entries are product nodes over an indicator
/// leaf and a parameter leaf; eliminating a variable multiplies the factors
/// mentioning it and sums the entries along that axis. Sub-circuits are
/// hash-consed so shared structure is built once, which also makes the
/// backward pass accumulate derivatives of shared parameters correctly.
///
/// The circuit depends only on the network structure; parameter values are
/// read from the net at evaluation time, so one Spn serves every parameter
/// setting of the same structure. Immutable after compile; forward/backward
/// write into caller-owned buffers, so concurrent evaluation is safe.
class Spn {
public:
    enum class Kind : std::uint8_t { Sum, Product, Indicator, Param };

    struct Node {
        Kind kind;
        std::vector<int> children; // for Sum/Product
        int var = -1;              // Indicator: BN node id
        int val = -1;              // Indicator: value
        int param = -1;            // Param: flat theta index
    };

    /// Scratch space for one evaluation; reuse across calls to avoid churn.
    struct EvalBuffer {
        std::vector<double> value;
        std::vector<double> adjoint;
    };

    static Spn compile(const BayesNet& net, const std::vector<int>& elimination_order) {
        {
            std::vector<int> sorted = elimination_order;
            std::sort(sorted.begin(), sorted.end());
            for (int i = 0; i < net.num_nodes(); ++i)
                if (i >= static_cast<int>(sorted.size()) || sorted[i] != i)
                    throw ArgumentError("elimination order is not a permutation of the nodes");
        }

        Builder b(net);

        // one factor per CPT: entry(x_i, pa) = indicator(i, x_i) * param(i, pa, x_i)
        std::vector<Factor> factors;
        for (int i = 0; i < net.num_nodes(); ++i) {
            Factor f;
            f.scope = net.parents[i];
            f.scope.push_back(i);
            std::sort(f.scope.begin(), f.scope.end());
            f.entries.resize(b.scope_size(f.scope));
            std::vector<int> values(f.scope.size(), 0);
            for (std::size_t a = 0; a < f.entries.size(); ++a) {
                b.decode(f.scope, a, values);
                int xi = 0;
                std::vector<int> pv;
                pv.reserve(net.parents[i].size());
                for (int p : net.parents[i]) pv.push_back(0);
                for (std::size_t k = 0; k < f.scope.size(); ++k) {
                    int v = f.scope[k];
                    if (v == i) { xi = values[k]; continue; }
                    for (std::size_t q = 0; q < net.parents[i].size(); ++q)
                        if (net.parents[i][q] == v) pv[q] = values[k];
                }
                int flat = net.index.flat(i, net.index.pa_index(i, pv), xi);
                f.entries[a] = b.product({b.indicator(i, xi), b.param(flat)});
            }
            factors.push_back(std::move(f));
        }

        for (int v : elimination_order) {
            // multiply all factors whose scope mentions v, then sum v out
            Factor merged;
            bool have = false;
            std::vector<Factor> rest;
            for (auto& f : factors) {
                if (std::find(f.scope.begin(), f.scope.end(), v) != f.scope.end()) {
                    merged = have ? b.multiply(merged, f) : std::move(f);
                    have = true;
                } else {
                    rest.push_back(std::move(f));
                }
            }
            rest.push_back(b.sum_out(merged, v));
            factors = std::move(rest);
        }

        // remaining factors are scalars; their product is the root
        std::vector<int> tops;
        for (const auto& f : factors) tops.push_back(f.entries.at(0));
        int root = tops.size() == 1 ? tops[0] : b.product(tops);

        Spn spn;
        spn.nodes_ = std::move(b.nodes);
        spn.root_ = root;
        spn.num_params_ = net.num_params();
        spn.param_leaf_.assign(spn.num_params_, -1);
        for (int id = 0; id < static_cast<int>(spn.nodes_.size()); ++id)
            if (spn.nodes_[id].kind == Kind::Param)
                spn.param_leaf_[spn.nodes_[id].param] = id;
        return spn;
    }

    static Spn compile(const BayesNet& net) {
        auto order = net.order();
        std::reverse(order.begin(), order.end());
        return compile(net, order);
    }

    int root() const { return root_; }
    std::size_t size() const { return nodes_.size(); }
    const std::vector<Node>& nodes() const { return nodes_; }

    /// p(e; theta) for the net's current parameters. Missing cells in the
    /// evidence are marginalized; empty evidence gives 1.
    double forward(const BayesNet& net, const Observation& evidence, EvalBuffer& buf) const {
        buf.value.resize(nodes_.size());
        for (std::size_t id = 0; id < nodes_.size(); ++id) {
            const Node& nd = nodes_[id];
            double v;
            switch (nd.kind) {
                case Kind::Indicator:
                    v = (!evidence[nd.var].has_value() || *evidence[nd.var] == nd.val) ? 1.0 : 0.0;
                    break;
                case Kind::Param:
                    v = net.theta[nd.param];
                    break;
                case Kind::Sum: {
                    v = 0.0;
                    for (int c : nd.children) v += buf.value[c];
                    break;
                }
                case Kind::Product: {
                    v = 1.0;
                    for (int c : nd.children) v *= buf.value[c];
                    break;
                }
            }
            buf.value[id] = v;
        }
        return buf.value[root_];
    }

    /// Reverse sweep; requires forward() on the same buffer and evidence.
    /// gradient[j] is exact by multilinearity of the network polynomial.
    PassResult backward(const BayesNet& net, const Observation& evidence, EvalBuffer& buf) const {
        (void)evidence;
        buf.adjoint.assign(nodes_.size(), 0.0);
        buf.adjoint[root_] = 1.0;
        for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
            const Node& nd = nodes_[id];
            double a = buf.adjoint[id];
            if (a == 0.0) continue;
            if (nd.kind == Kind::Sum) {
                for (int c : nd.children) buf.adjoint[c] += a;
            } else if (nd.kind == Kind::Product) {
                // partial product with zero handling
                int zeros = 0;
                double prod_nonzero = 1.0;
                for (int c : nd.children) {
                    double v = buf.value[c];
                    if (v == 0.0) ++zeros;
                    else prod_nonzero *= v;
                }
                if (zeros == 0) {
                    for (int c : nd.children)
                        buf.adjoint[c] += a * (prod_nonzero / buf.value[c]);
                } else if (zeros == 1) {
                    for (int c : nd.children)
                        if (buf.value[c] == 0.0) buf.adjoint[c] += a * prod_nonzero;
                }
            }
        }
        PassResult out;
        out.value = buf.value[root_];
        out.gradient.assign(num_params_, 0.0);
        for (int j = 0; j < num_params_; ++j)
            if (param_leaf_[j] >= 0) out.gradient[j] = buf.adjoint[param_leaf_[j]];
        return out;
    }

    /// One node per line: `id TYPE args`, topological order.
    void dump(std::ostream& os) const {
        for (std::size_t id = 0; id < nodes_.size(); ++id) {
            const Node& nd = nodes_[id];
            os << id;
            switch (nd.kind) {
                case Kind::Indicator: os << " IND " << nd.var << " " << nd.val; break;
                case Kind::Param: os << " PAR " << nd.param; break;
                case Kind::Sum: os << " SUM"; break;
                case Kind::Product: os << " PRD"; break;
            }
            if (nd.kind == Kind::Sum || nd.kind == Kind::Product)
                for (int c : nd.children) os << " " << c;
            os << "\n";
        }
        os << "root " << root_ << "\n";
    }

    struct Counts { int sums = 0, products = 0, indicators = 0, params = 0; };
    Counts counts() const {
        Counts c;
        for (const auto& nd : nodes_) {
            switch (nd.kind) {
                case Kind::Sum: ++c.sums; break;
                case Kind::Product: ++c.products; break;
                case Kind::Indicator: ++c.indicators; break;
                case Kind::Param: ++c.params; break;
            }
        }
        return c;
    }

private:
    struct Factor {
        std::vector<int> scope;   // sorted BN node ids
        std::vector<int> entries; // circuit node id per assignment, mixed radix
    };

    /// Arena with hash-consing so identical sub-circuits are shared.
    struct Builder {
        const BayesNet& net;
        std::vector<Node> nodes;
        std::map<std::pair<int, int>, int> indicator_ids;
        std::map<int, int> param_ids;
        std::map<std::vector<int>, int> sum_ids;  // sorted child lists
        std::map<std::vector<int>, int> prod_ids;

        explicit Builder(const BayesNet& n) : net(n) {}

        int indicator(int var, int val) {
            auto key = std::make_pair(var, val);
            auto it = indicator_ids.find(key);
            if (it != indicator_ids.end()) return it->second;
            Node nd;
            nd.kind = Kind::Indicator;
            nd.var = var;
            nd.val = val;
            nodes.push_back(std::move(nd));
            int id = static_cast<int>(nodes.size()) - 1;
            indicator_ids[key] = id;
            return id;
        }

        int param(int flat) {
            auto it = param_ids.find(flat);
            if (it != param_ids.end()) return it->second;
            Node nd;
            nd.kind = Kind::Param;
            nd.param = flat;
            nodes.push_back(std::move(nd));
            int id = static_cast<int>(nodes.size()) - 1;
            param_ids[flat] = id;
            return id;
        }

        int product(std::vector<int> children) {
            // flatten nested products; keeps the arena shallow
            std::vector<int> flat;
            for (int c : children) {
                if (nodes[c].kind == Kind::Product)
                    flat.insert(flat.end(), nodes[c].children.begin(), nodes[c].children.end());
                else
                    flat.push_back(c);
            }
            if (flat.size() == 1) return flat[0];
            std::sort(flat.begin(), flat.end());
            auto it = prod_ids.find(flat);
            if (it != prod_ids.end()) return it->second;
            Node nd;
            nd.kind = Kind::Product;
            nd.children = flat;
            nodes.push_back(std::move(nd));
            int id = static_cast<int>(nodes.size()) - 1;
            prod_ids[flat] = id;
            return id;
        }

        int sum(std::vector<int> children) {
            if (children.size() == 1) return children[0];
            std::sort(children.begin(), children.end());
            auto it = sum_ids.find(children);
            if (it != sum_ids.end()) return it->second;
            Node nd;
            nd.kind = Kind::Sum;
            nd.children = children;
            nodes.push_back(std::move(nd));
            int id = static_cast<int>(nodes.size()) - 1;
            sum_ids[children] = id;
            return id;
        }

        std::size_t scope_size(const std::vector<int>& scope) const {
            std::size_t s = 1;
            for (int v : scope) s *= net.card[v];
            return s;
        }

        void decode(const std::vector<int>& scope, std::size_t a, std::vector<int>& values) const {
            for (int k = static_cast<int>(scope.size()) - 1; k >= 0; --k) {
                int c = net.card[scope[k]];
                values[k] = static_cast<int>(a % c);
                a /= c;
            }
        }

        std::size_t encode(const std::vector<int>& scope, const std::vector<int>& values) const {
            std::size_t a = 0;
            for (std::size_t k = 0; k < scope.size(); ++k)
                a = a * net.card[scope[k]] + values[k];
            return a;
        }

        Factor multiply(const Factor& f, const Factor& g) {
            Factor out;
            std::set_union(f.scope.begin(), f.scope.end(), g.scope.begin(), g.scope.end(),
                           std::back_inserter(out.scope));
            out.entries.resize(scope_size(out.scope));
            std::vector<int> values(out.scope.size());
            std::vector<int> fv(f.scope.size()), gv(g.scope.size());
            for (std::size_t a = 0; a < out.entries.size(); ++a) {
                decode(out.scope, a, values);
                project(out.scope, values, f.scope, fv);
                project(out.scope, values, g.scope, gv);
                out.entries[a] = product({f.entries[encode(f.scope, fv)],
                                          g.entries[encode(g.scope, gv)]});
            }
            return out;
        }

        Factor sum_out(const Factor& f, int v) {
            Factor out;
            for (int s : f.scope)
                if (s != v) out.scope.push_back(s);
            out.entries.resize(scope_size(out.scope));
            std::vector<int> values(out.scope.size());
            std::vector<int> fv(f.scope.size());
            for (std::size_t a = 0; a < out.entries.size(); ++a) {
                decode(out.scope, a, values);
                std::vector<int> children;
                children.reserve(net.card[v]);
                for (int x = 0; x < net.card[v]; ++x) {
                    std::size_t oi = 0;
                    for (std::size_t k = 0; k < f.scope.size(); ++k)
                        fv[k] = (f.scope[k] == v) ? x : values[oi++];
                    children.push_back(f.entries[encode(f.scope, fv)]);
                }
                out.entries[a] = sum(std::move(children));
            }
            return out;
        }

        static void project(const std::vector<int>& scope, const std::vector<int>& values,
                            const std::vector<int>& sub, std::vector<int>& out) {
            std::size_t j = 0;
            for (std::size_t k = 0; k < scope.size() && j < sub.size(); ++k)
                if (scope[k] == sub[j]) out[j++] = values[k];
        }
    };

    std::vector<Node> nodes_;
    int root_ = -1;
    int num_params_ = 0;
    std::vector<int> param_leaf_;
};

/// p(x_k = v, e) for every v, assembled from backward-pass derivatives:
/// the family-summed theta-weighted partials at node k.
inline std::vector<double> joint_from_derivatives(const PassResult& pass, const BayesNet& net,
                                                  int k, const Observation& evidence) {
    if (evidence[k].has_value()) throw ArgumentError("query node is observed in the evidence");
    std::vector<double> out(net.card[k], 0.0);
    for (int pa = 0; pa < net.index.num_parent_assignments(k); ++pa) {
        for (int x = 0; x < net.card[k]; ++x) {
            int j = net.index.flat(k, pa, x);
            out[x] += pass.gradient[j] * net.theta[j];
        }
    }
    return out;
}

} // namespace sobn
