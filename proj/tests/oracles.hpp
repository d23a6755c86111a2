#pragma once

// Test-only oracles, independent of the circuit implementation: exhaustive
// joint enumeration, finite differences, and tensor-grid quadrature.

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "sobn/bayes_net.hpp"
#include "sobn/rng.hpp"

namespace oracle {

using sobn::BayesNet;
using sobn::Observation;

/// Iterate all complete assignments of the net, most significant node first.
inline void for_each_assignment(const BayesNet& net,
                                const std::function<void(const std::vector<int>&)>& fn) {
    int n = net.num_nodes();
    std::vector<int> a(n, 0);
    for (;;) {
        fn(a);
        int i = n - 1;
        while (i >= 0 && ++a[i] == net.card[i]) a[i--] = 0;
        if (i < 0) break;
    }
}

inline double joint_probability(const BayesNet& net, const std::vector<int>& a) {
    double p = 1.0;
    for (int i = 0; i < net.num_nodes(); ++i) {
        int pa = net.pa_index_at(i, a);
        p *= net.theta[net.index.flat(i, pa, a[i])];
    }
    return p;
}

inline bool consistent(const Observation& e, const std::vector<int>& a) {
    for (std::size_t i = 0; i < e.size(); ++i)
        if (e[i].has_value() && *e[i] != a[i]) return false;
    return true;
}

/// p(e) by brute-force summation over all assignments.
inline double evidence_probability(const BayesNet& net, const Observation& e) {
    double p = 0.0;
    for_each_assignment(net, [&](const std::vector<int>& a) {
        if (consistent(e, a)) p += joint_probability(net, a);
    });
    return p;
}

/// p(x_k = v, e) for every v of node k.
inline std::vector<double> joint_with_value(const BayesNet& net, const Observation& e, int k) {
    std::vector<double> out(net.card[k], 0.0);
    for_each_assignment(net, [&](const std::vector<int>& a) {
        if (consistent(e, a)) out[a[k]] += joint_probability(net, a);
    });
    return out;
}

/// dp(e)/dtheta_j by central finite differences on the raw parameter.
inline double finite_difference(const BayesNet& net, const Observation& e, int j,
                                double h = 1e-6) {
    BayesNet plus = net, minus = net;
    plus.theta[j] += h;
    minus.theta[j] -= h;
    return (evidence_probability(plus, e) - evidence_probability(minus, e)) / (2 * h);
}

/// Random net on a given structure with interior CPT rows.
inline BayesNet random_net(const BayesNet& structure, sobn::Rng& rng) {
    return sobn::sample_ground_truth(structure, rng);
}

/// Random DAG structure on n nodes (parents only among lower ids).
inline BayesNet random_structure(int n, int cardinality, sobn::Rng& rng) {
    std::vector<std::string> names;
    std::vector<int> card(n, cardinality);
    std::vector<std::vector<int>> parents(n);
    for (int i = 0; i < n; ++i) {
        names.push_back("X" + std::to_string(i));
        for (int p = 0; p < i; ++p)
            if (rng.bernoulli(0.5)) parents[i].push_back(p);
        // keep families desk-sized
        while (parents[i].size() > 2) parents[i].erase(parents[i].begin() + rng.uniform_int(static_cast<int>(parents[i].size())));
    }
    return BayesNet(names, card, parents);
}

// ----------------------------------------------------------- quadrature

/// Gauss-Legendre nodes/weights on [0, 1].
inline void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.resize(n);
    weights.resize(n);
    for (int i = 0; i < n; ++i) {
        // Newton from the Chebyshev-based initial guess
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            double dp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        double dp = n * (x * p1 - p0) / (x * x - 1.0);
        nodes[i] = 0.5 * (x + 1.0);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
}

/// Exact posterior moments for the 2-node binary net X0 -> X1 with a uniform
/// prior on the three free parameters (a, b, c) = (p(X0=0), p(X1=0|X0=0),
/// p(X1=0|X0=1)), integrated on a tensor Gauss-Legendre grid.
struct BinaryPairPosterior {
    // index order: a, b, c
    double mean[3];
    double sd[3];
};

inline double binary_pair_likelihood(double a, double b, double c, const Observation& row) {
    double p = 1.0;
    if (row[0].has_value() && row[1].has_value()) {
        double t0 = *row[0] == 0 ? a : 1.0 - a;
        double t1 = *row[0] == 0 ? (*row[1] == 0 ? b : 1.0 - b) : (*row[1] == 0 ? c : 1.0 - c);
        p = t0 * t1;
    } else if (row[0].has_value()) {
        p = *row[0] == 0 ? a : 1.0 - a;
    } else if (row[1].has_value()) {
        double m = a * b + (1.0 - a) * c;
        p = *row[1] == 0 ? m : 1.0 - m;
    }
    return p;
}

inline BinaryPairPosterior binary_pair_posterior(const sobn::Dataset& data, int grid = 48) {
    // sufficient statistics: the likelihood depends on the data only through
    // the joint counts n[x0][x1], the X0-only counts m[x0], and the X1-only
    // (marginal) counts k[x1]
    double n[2][2] = {{0, 0}, {0, 0}}, m[2] = {0, 0}, k[2] = {0, 0};
    for (const auto& row : data.rows) {
        if (row[0].has_value() && row[1].has_value())
            n[*row[0]][*row[1]] += 1.0;
        else if (row[0].has_value())
            m[*row[0]] += 1.0;
        else if (row[1].has_value())
            k[*row[1]] += 1.0;
    }

    std::vector<double> x, w;
    gauss_legendre(grid, x, w);
    // log-space accumulation so long datasets do not underflow the integrand
    std::vector<double> logf(static_cast<std::size_t>(grid) * grid * grid);
    double max_log = -std::numeric_limits<double>::infinity();
    std::size_t idx = 0;
    for (int ia = 0; ia < grid; ++ia)
        for (int ib = 0; ib < grid; ++ib)
            for (int ic = 0; ic < grid; ++ic, ++idx) {
                double a = x[ia], b = x[ib], c = x[ic];
                double marg = a * b + (1.0 - a) * c;
                double ll = (n[0][0] + n[0][1] + m[0]) * std::log(a) +
                            (n[1][0] + n[1][1] + m[1]) * std::log(1.0 - a) +
                            n[0][0] * std::log(b) + n[0][1] * std::log(1.0 - b) +
                            n[1][0] * std::log(c) + n[1][1] * std::log(1.0 - c) +
                            k[0] * std::log(marg) + k[1] * std::log(1.0 - marg);
                logf[idx] = ll;
                max_log = std::max(max_log, ll);
            }

    double z = 0.0, s1[3] = {0, 0, 0}, s2[3] = {0, 0, 0};
    idx = 0;
    for (int ia = 0; ia < grid; ++ia)
        for (int ib = 0; ib < grid; ++ib)
            for (int ic = 0; ic < grid; ++ic, ++idx) {
                double ww = w[ia] * w[ib] * w[ic] * std::exp(logf[idx] - max_log);
                z += ww;
                double v[3] = {x[ia], x[ib], x[ic]};
                for (int j = 0; j < 3; ++j) {
                    s1[j] += ww * v[j];
                    s2[j] += ww * v[j] * v[j];
                }
            }
    BinaryPairPosterior out;
    for (int j = 0; j < 3; ++j) {
        out.mean[j] = s1[j] / z;
        out.sd[j] = std::sqrt(std::max(s2[j] / z - out.mean[j] * out.mean[j], 0.0));
    }
    return out;
}

inline BayesNet binary_pair_net() {
    return BayesNet({"X0", "X1"}, {2, 2}, {{}, {0}});
}

} // namespace oracle
