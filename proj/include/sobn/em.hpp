#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "sobn/bayes_net.hpp"
#include "sobn/posterior.hpp"
#include "sobn/rng.hpp"
#include "sobn/spn.hpp"

namespace sobn {

struct EmConfig {
    double prior_shape = 1.0;     // flat Dirichlet by default
    int max_iterations = 200;
    double tolerance = 1e-8;      // on log-posterior change
    double theta_clamp = 1e-6;
    int fisher_weighting = 1;     // exponent of 1/p(e') in the FIM sum
    std::uint64_t init_seed = 0;  // jitter for symmetry breaking
};

struct EmTrace {
    std::vector<double> log_posterior;
    int iterations = 0;
    bool converged = false;
    int skipped_rows = 0;
};

/// Symmetric information matrix (outer-product Hessian or Fisher), with the
/// prior curvature term J0 = K diag(1/theta) kept separately for diagnostics.
struct InfoMatrix {
    enum class Kind { Hessian, Fisher };
    Kind kind;
    Eigen::MatrixXd matrix; // P x P, includes J0
    Eigen::VectorXd j0_diag;
};

/// Expected sufficient-statistic increments for one row:
/// inc(x_i, pa_i) = theta * dp(e)/dtheta / p(e) = p(x_i, pa_i | e).
/// Returns false (skip) when the row has zero support.
inline bool em_expected_counts(const Spn& spn, const BayesNet& net, const Observation& row,
                               Spn::EvalBuffer& buf, std::vector<double>& inc) {
    double p = spn.forward(net, row, buf);
    if (p <= 0.0) return false;
    PassResult pass = spn.backward(net, row, buf);
    inc.resize(net.num_params());
    for (int j = 0; j < net.num_params(); ++j)
        inc[j] = net.theta[j] * pass.gradient[j] / p;
    return true;
}

inline double log_posterior(const Spn& spn, const BayesNet& net, const Dataset& data,
                            const EmConfig& cfg, Spn::EvalBuffer& buf) {
    double lp = 0.0;
    for (const auto& row : data.rows) {
        double p = spn.forward(net, row, buf);
        if (p > 0.0) lp += std::log(p);
    }
    if (cfg.prior_shape != 1.0)
        for (double t : net.theta) lp += (cfg.prior_shape - 1.0) * std::log(std::max(t, 1e-300));
    return lp;
}

/// MAP EM: E-step via SPN expected counts, M-step the closed-form Dirichlet
/// MAP update per family, clamped away from the simplex boundary.
inline std::pair<std::vector<double>, EmTrace> em_fit(const BayesNet& net, const Spn& spn,
                                                      const Dataset& data, const EmConfig& cfg) {
    BayesNet work = net;
    const ParamIndex& index = net.index;

    // start from available-case smoothed frequencies (rows where the node and
    // all its parents are observed); keeps the search near well-supported
    // estimates instead of the flat-likelihood ridge a uniform start sits on
    std::vector<double> seed_counts(net.num_params(), 0.0);
    for (const auto& row : data.rows)
        for (int i = 0; i < index.num_nodes(); ++i) {
            if (!row[i].has_value()) continue;
            bool parents_seen = true;
            for (int p : net.parents[i])
                if (!row[p].has_value()) { parents_seen = false; break; }
            if (!parents_seen) continue;
            std::vector<int> pa_vals;
            pa_vals.reserve(net.parents[i].size());
            for (int p : net.parents[i]) pa_vals.push_back(*row[p]);
            seed_counts[index.flat(i, index.pa_index(i, pa_vals), *row[i])] += 1.0;
        }
    // small seeded jitter on top breaks latent-value symmetries for families
    // with no direct observations
    std::uint64_t jitter_seed = cfg.init_seed ^ 0x5eed5eed5eed5eedULL;
    Rng jitter(splitmix64(jitter_seed));
    for (int i = 0; i < index.num_nodes(); ++i) {
        int k = index.cardinality(i);
        for (int pa = 0; pa < index.num_parent_assignments(i); ++pa) {
            int begin = index.family_begin(i, pa);
            double fam_total = 0.0;
            for (int x = 0; x < k; ++x) fam_total += seed_counts[begin + x];
            double sum = 0.0;
            for (int x = 0; x < k; ++x) {
                double laplace = (seed_counts[begin + x] + 1.0) / (fam_total + k);
                work.theta[begin + x] = laplace * (1.0 + 0.01 * (2.0 * jitter.uniform() - 1.0));
                sum += work.theta[begin + x];
            }
            for (int x = 0; x < k; ++x) work.theta[begin + x] /= sum;
        }
    }

    EmTrace trace;
    Spn::EvalBuffer buf;
    std::vector<double> counts(net.num_params());
    std::vector<double> inc;
    double prev_lp = -std::numeric_limits<double>::infinity();

    for (int it = 0; it < cfg.max_iterations; ++it) {
        std::fill(counts.begin(), counts.end(), 0.0);
        int used = 0;
        trace.skipped_rows = 0;
        for (const auto& row : data.rows) {
            if (!em_expected_counts(spn, work, row, buf, inc)) {
                ++trace.skipped_rows;
                continue;
            }
            ++used;
            for (int j = 0; j < net.num_params(); ++j) counts[j] += inc[j];
        }
        if (used == 0 && !data.rows.empty())
            throw NumericError("EM: every training row has zero support");

        for (int i = 0; i < index.num_nodes(); ++i) {
            int k = index.cardinality(i);
            for (int pa = 0; pa < index.num_parent_assignments(i); ++pa) {
                int begin = index.family_begin(i, pa);
                double den = 0.0;
                for (int x = 0; x < k; ++x)
                    den += counts[begin + x] + cfg.prior_shape - 1.0;
                if (den <= 1e-12) continue; // family unseen: keep current row
                double renorm = 0.0;
                for (int x = 0; x < k; ++x) {
                    double v = (counts[begin + x] + cfg.prior_shape - 1.0) / den;
                    v = std::clamp(v, cfg.theta_clamp, 1.0 - cfg.theta_clamp);
                    work.theta[begin + x] = v;
                    renorm += v;
                }
                for (int x = 0; x < k; ++x) work.theta[begin + x] /= renorm;
            }
        }

        double lp = log_posterior(spn, work, data, cfg, buf);
        trace.log_posterior.push_back(lp);
        trace.iterations = it + 1;
        if (it > 0 && std::abs(lp - prev_lp) < cfg.tolerance) {
            trace.converged = true;
            break;
        }
        prev_lp = lp;
    }
    return {work.theta, trace};
}

namespace detail {

inline Eigen::VectorXd j0_diagonal(const BayesNet& net, const std::vector<double>& theta_hat,
                                   double clamp) {
    Eigen::VectorXd d(net.num_params());
    for (int j = 0; j < net.num_params(); ++j) {
        int i = net.index.node_of(j);
        d(j) = net.card[i] / std::max(theta_hat[j], clamp);
    }
    return d;
}

} // namespace detail

/// Gaussian-approximation Hessian at theta_hat:
/// H = J0 + sum_t p(e_t)^{-2} grad p(e_t) grad^T p(e_t), rows grouped by content.
inline InfoMatrix build_hessian_ga(const Spn& spn, const BayesNet& net,
                                   const std::vector<double>& theta_hat, const Dataset& data,
                                   const EmConfig& cfg) {
    BayesNet at = net;
    at.theta = theta_hat;
    int P = net.num_params();

    std::map<std::vector<int>, int> groups; // row content (missing = -1) -> multiplicity
    for (const auto& row : data.rows) {
        std::vector<int> key(row.size());
        for (std::size_t i = 0; i < row.size(); ++i) key[i] = row[i].value_or(-1);
        ++groups[key];
    }

    InfoMatrix out;
    out.kind = InfoMatrix::Kind::Hessian;
    out.j0_diag = detail::j0_diagonal(net, theta_hat, cfg.theta_clamp);
    out.matrix = out.j0_diag.asDiagonal();

    Spn::EvalBuffer buf;
    Eigen::VectorXd g(P);
    for (const auto& [key, mult] : groups) {
        Observation row(key.size());
        for (std::size_t i = 0; i < key.size(); ++i)
            if (key[i] >= 0) row[i] = key[i];
        double p = spn.forward(at, row, buf);
        if (p <= 0.0) continue;
        PassResult pass = spn.backward(at, row, buf);
        for (int j = 0; j < P; ++j) g(j) = pass.gradient[j];
        out.matrix.selfadjointView<Eigen::Lower>().rankUpdate(g, mult / (p * p));
    }
    out.matrix = out.matrix.selfadjointView<Eigen::Lower>();
    return out;
}

/// Fisher information at theta_hat. Each distinct observation pattern (the
/// set of observed nodes) contributes a sum over all joint assignments of
/// that set; the contribution depends only on the set, so patterns are
/// grouped and scaled by multiplicity. Weight is 1/p(e') by default
/// (fisher_weighting = 1) or 1/p^2(e') (fisher_weighting = 2).
inline InfoMatrix build_fisher(const Spn& spn, const BayesNet& net,
                               const std::vector<double>& theta_hat,
                               const std::vector<std::pair<std::vector<int>, int>>& patterns,
                               const EmConfig& cfg) {
    BayesNet at = net;
    at.theta = theta_hat;
    int P = net.num_params();

    std::map<std::vector<int>, long> grouped; // sorted observed-node set -> multiplicity
    for (const auto& [obs, mult] : patterns) {
        std::vector<int> key = obs;
        std::sort(key.begin(), key.end());
        grouped[key] += mult;
    }

    InfoMatrix out;
    out.kind = InfoMatrix::Kind::Fisher;
    out.j0_diag = detail::j0_diagonal(net, theta_hat, cfg.theta_clamp);
    out.matrix = out.j0_diag.asDiagonal();

    Spn::EvalBuffer buf;
    Eigen::VectorXd g(P);
    for (const auto& [obs, mult] : grouped) {
        if (obs.empty()) continue; // p(e') = 1 for all-latent rows, gradient of a constant
        long completions = 1;
        for (int i : obs) completions *= net.card[i];
        Observation row(net.num_nodes());
        for (long a = 0; a < completions; ++a) {
            long rem = a;
            for (auto it = obs.rbegin(); it != obs.rend(); ++it) {
                row[*it] = static_cast<int>(rem % net.card[*it]);
                rem /= net.card[*it];
            }
            double p = spn.forward(at, row, buf);
            if (p <= 0.0) continue;
            PassResult pass = spn.backward(at, row, buf);
            for (int j = 0; j < P; ++j) g(j) = pass.gradient[j];
            double w = cfg.fisher_weighting == 2 ? 1.0 / (p * p) : 1.0 / p;
            out.matrix.selfadjointView<Eigen::Lower>().rankUpdate(g, mult * w);
        }
    }
    out.matrix = out.matrix.selfadjointView<Eigen::Lower>();
    return out;
}

inline std::vector<std::pair<std::vector<int>, int>> observation_patterns(const Dataset& data) {
    std::map<std::vector<int>, int> grouped;
    for (const auto& row : data.rows) {
        std::vector<int> obs;
        for (std::size_t i = 0; i < row.size(); ++i)
            if (row[i].has_value()) obs.push_back(static_cast<int>(i));
        ++grouped[obs];
    }
    std::vector<std::pair<std::vector<int>, int>> out(grouped.begin(), grouped.end());
    return out;
}

/// R = D^T (D M D^T)^{-1} D: invert the information in free coordinates and
/// pull the covariance back to the full constrained parameterization.
inline Eigen::MatrixXd covariance_from_info(const InfoMatrix& info, const FreeTransform& ft) {
    const Eigen::MatrixXd& D = ft.D;
    Eigen::MatrixXd A = D * info.matrix * D.transpose();
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) {
        double ridge = 1e-10 * A.trace() / static_cast<double>(A.rows());
        A.diagonal().array() += ridge;
        llt.compute(A);
        if (llt.info() != Eigen::Success) {
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
            double cond = svd.singularValues()(0) /
                          svd.singularValues()(svd.singularValues().size() - 1);
            throw NumericError("information matrix singular in free coordinates (cond ~= " +
                               std::to_string(cond) + ")");
        }
    }
    Eigen::MatrixXd Ainv = llt.solve(Eigen::MatrixXd::Identity(A.rows(), A.cols()));
    Eigen::MatrixXd R = D.transpose() * Ainv * D;
    return 0.5 * (R + R.transpose());
}

} // namespace sobn
