#pragma once

#include <cmath>
#include <vector>

#include "sobn/bayes_net.hpp"
#include "sobn/posterior.hpp"
#include "sobn/spn.hpp"

namespace sobn {

/// Online Bayesian Moment Matching state: the running product-of-Dirichlets
/// posterior plus bookkeeping.
struct BmmState {
    DirichletProduct posterior;
    int instances = 0;
    int skipped_rows = 0;
};

/// Per-parameter first and second moments of the single-step posterior.
struct BmmMoments {
    std::vector<double> m; // E[theta_j | e]
    std::vector<double> v; // E[theta_j^2 | e]
};

inline BmmState bmm_init(const BayesNet& net) {
    BmmState s;
    s.posterior.index = net.index;
    s.posterior.alpha.assign(net.num_params(), 1.0);
    return s;
}

/// Moments of the posterior after assimilating one row, computed in closed
/// form. Writing d for the backward derivatives at the current posterior
/// means, the evidence likelihood decomposes per node as
/// p(e) = sum_{x',pa'} theta_{x'|pa'} d_{x'|pa'}; the network polynomial
/// carries exactly one factor per family, so expectations across families
/// factor and only the query parameter's own family needs mixed moments.
/// Returns false when the row has zero support under the means (skip it).
inline bool bmm_moments(const BmmState& state, const Spn& spn, const BayesNet& net,
                        const Observation& evidence, Spn::EvalBuffer& buf, BmmMoments& out) {
    BayesNet at_means = net;
    at_means.theta = state.posterior.means();
    double z0 = spn.forward(at_means, evidence, buf);
    if (z0 <= 0.0) return false;
    PassResult pass = spn.backward(at_means, evidence, buf);

    int P = net.num_params();
    out.m.assign(P, 0.0);
    out.v.assign(P, 0.0);
    const ParamIndex& index = net.index;

    for (int i = 0; i < index.num_nodes(); ++i) {
        int k = index.cardinality(i);
        int npa = index.num_parent_assignments(i);
        // theta-weighted derivative mass of the whole node block equals z0
        double node_total = 0.0;
        for (int pa = 0; pa < npa; ++pa) {
            int begin = index.family_begin(i, pa);
            for (int x = 0; x < k; ++x)
                node_total += at_means.theta[begin + x] * pass.gradient[begin + x];
        }
        for (int pa = 0; pa < npa; ++pa) {
            int begin = index.family_begin(i, pa);
            double fam_mass = 0.0;
            for (int x = 0; x < k; ++x)
                fam_mass += at_means.theta[begin + x] * pass.gradient[begin + x];
            double rest = node_total - fam_mass; // other families of node i, at their means

            std::span<const double> alpha(state.posterior.alpha.data() + begin,
                                          static_cast<std::size_t>(k));
            std::vector<int> exps(k, 0);
            for (int x = 0; x < k; ++x) {
                double z1 = 0.0, z2 = 0.0;
                for (int xp = 0; xp < k; ++xp) {
                    double d = pass.gradient[begin + xp];
                    if (d == 0.0) continue;
                    std::fill(exps.begin(), exps.end(), 0);
                    exps[x] += 1;
                    exps[xp] += 1;
                    z1 += dirichlet_mixed_moment(alpha, exps) * d;
                    exps[x] += 1;
                    z2 += dirichlet_mixed_moment(alpha, exps) * d;
                }
                std::fill(exps.begin(), exps.end(), 0);
                exps[x] = 1;
                double e1 = dirichlet_mixed_moment(alpha, exps);
                exps[x] = 2;
                double e2 = dirichlet_mixed_moment(alpha, exps);
                z1 += rest * e1;
                z2 += rest * e2;
                out.m[begin + x] = z1 / z0;
                out.v[begin + x] = z2 / z0;
            }
        }
    }
    return true;
}

/// Moment-match the per-family Dirichlet: means matched exactly, strength
/// chosen to minimize the squared variance mismatch. Degenerate strength
/// denominators keep the previous strength.
inline bool bmm_update(BmmState& state, const Spn& spn, const BayesNet& net,
                       const Observation& evidence, Spn::EvalBuffer& buf) {
    BmmMoments mo;
    if (!bmm_moments(state, spn, net, evidence, buf, mo)) {
        ++state.skipped_rows;
        return false;
    }
    const ParamIndex& index = net.index;
    for (int i = 0; i < index.num_nodes(); ++i) {
        int k = index.cardinality(i);
        for (int pa = 0; pa < index.num_parent_assignments(i); ++pa) {
            int begin = index.family_begin(i, pa);
            double num = 0.0, den = 0.0;
            for (int x = 0; x < k; ++x) {
                double m = mo.m[begin + x], v = mo.v[begin + x];
                num += m * (1.0 - m) * (m - v);
                den += m * (1.0 - m) * (v - m * m);
            }
            double s;
            if (den <= 1e-15 || num <= 0.0)
                s = state.posterior.strength(i, pa);
            else
                s = num / den;
            for (int x = 0; x < k; ++x)
                state.posterior.alpha[begin + x] = std::max(mo.m[begin + x] * s, 1e-12);
        }
    }
    ++state.instances;
    return true;
}

/// Fold the whole dataset through bmm_update in row order.
inline BmmState bmm_fit(const BayesNet& net, const Spn& spn, const Dataset& data) {
    BmmState state = bmm_init(net);
    Spn::EvalBuffer buf;
    for (const auto& row : data.rows) {
        bool any = false;
        for (const auto& cell : row)
            if (cell.has_value()) { any = true; break; }
        if (!any) continue; // likelihood 1, nothing to assimilate
        bmm_update(state, spn, net, row, buf);
    }
    return state;
}

} // namespace sobn
