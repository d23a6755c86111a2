#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sobn/bayes_net.hpp"
#include "sobn/errors.hpp"
#include "sobn/posterior.hpp"
#include "sobn/spn.hpp"

namespace sobn {

/// Second-order answer to p(x_k | e): mean and variance per value of X_k.
struct QueryResult {
    int node = -1;
    std::vector<double> mean;
    std::vector<double> variance;
};

/// Delta-method propagation of the parameter covariance through the
/// conditional-probability quotient. Means come from the SPN at the
/// posterior mean; the quotient gradient is assembled from two backward
/// passes (evidence alone, evidence plus X_k = v) and pushed through R.
inline QueryResult query_second_order(const Spn& spn, const BayesNet& net,
                                      const GaussianPosterior& posterior,
                                      const Observation& evidence, int k,
                                      Spn::EvalBuffer& buf) {
    if (evidence[k].has_value()) throw ArgumentError("query node is observed");
    BayesNet at = net;
    for (int j = 0; j < net.num_params(); ++j) at.theta[j] = posterior.mean(j);

    double pe = spn.forward(at, evidence, buf);
    if (pe <= 0.0) throw NumericError("evidence has zero support under the posterior mean");
    PassResult pass_e = spn.backward(at, evidence, buf);

    int P = net.num_params();
    QueryResult out;
    out.node = k;
    out.mean.resize(net.card[k]);
    out.variance.resize(net.card[k]);
    Eigen::VectorXd g(P);
    Observation extended = evidence;
    for (int v = 0; v < net.card[k]; ++v) {
        extended[k] = v;
        double pv = spn.forward(at, extended, buf);
        PassResult pass_v = spn.backward(at, extended, buf);
        double mu = pv / pe;
        for (int j = 0; j < P; ++j)
            g(j) = (pass_v.gradient[j] * pe - pv * pass_e.gradient[j]) / (pe * pe);
        double var = g.dot(posterior.cov * g);
        if (var < 0.0) var = 0.0;
        // a probability-valued variable cannot exceed the Bernoulli bound
        double bound = mu * (1.0 - mu);
        if (var > bound) var = bound;
        out.mean[v] = mu;
        out.variance[v] = var;
    }
    extended[k].reset();
    return out;
}

/// One QueryResult per unobserved node.
inline std::vector<QueryResult> query_all(const Spn& spn, const BayesNet& net,
                                          const GaussianPosterior& posterior,
                                          const Observation& evidence) {
    Spn::EvalBuffer buf;
    std::vector<QueryResult> out;
    for (int k = 0; k < net.num_nodes(); ++k)
        if (!evidence[k].has_value())
            out.push_back(query_second_order(spn, net, posterior, evidence, k, buf));
    return out;
}

} // namespace sobn
