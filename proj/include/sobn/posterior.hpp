#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <span>
#include <vector>

#include "sobn/bayes_net.hpp"
#include "sobn/errors.hpp"

namespace sobn {

/// Product-of-Dirichlets posterior: one shape vector per CPT family, laid
/// out exactly like the flat parameter vector.
struct DirichletProduct {
    ParamIndex index;
    std::vector<double> alpha; // length P, all > 0

    double strength(int node, int pa_idx) const {
        double s = 0.0;
        int begin = index.family_begin(node, pa_idx);
        for (int x = 0; x < index.cardinality(node); ++x) s += alpha[begin + x];
        return s;
    }

    double mean(int flat) const {
        int i = index.node_of(flat);
        int pa = index.pa_index_of(flat);
        return alpha[flat] / strength(i, pa);
    }

    std::vector<double> means() const {
        std::vector<double> m(alpha.size());
        for (int i = 0; i < index.num_nodes(); ++i) {
            for (int pa = 0; pa < index.num_parent_assignments(i); ++pa) {
                double s = strength(i, pa);
                int begin = index.family_begin(i, pa);
                for (int x = 0; x < index.cardinality(i); ++x)
                    m[begin + x] = alpha[begin + x] / s;
            }
        }
        return m;
    }
};

/// Gaussian parameter posterior: full mean vector plus a covariance whose
/// family blocks respect the sum-to-one constraint (rows sum to zero).
struct GaussianPosterior {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// E[prod_j theta_j^{n_j}] under Dirichlet(alpha): rising-factorial ratio.
inline double dirichlet_mixed_moment(std::span<const double> alpha, std::span<const int> exponents) {
    double strength = 0.0;
    int total_exp = 0;
    for (std::size_t j = 0; j < alpha.size(); ++j) {
        if (alpha[j] <= 0.0) throw ArgumentError("Dirichlet shape must be positive");
        strength += alpha[j];
        total_exp += exponents[j];
    }
    double num = 1.0;
    for (std::size_t j = 0; j < alpha.size(); ++j)
        for (int m = 0; m < exponents[j]; ++m) num *= alpha[j] + m;
    double den = 1.0;
    for (int m = 0; m < total_exp; ++m) den *= strength + m;
    return num / den;
}

/// Maps full-parameter gradients to free-parameter gradients: per family of
/// size k, one (k-1) x k block [I | -1] dropping the last parameter.
struct FreeTransform {
    Eigen::MatrixXd D; // F x P
    int free_dim() const { return static_cast<int>(D.rows()); }
};

inline FreeTransform build_D(const ParamIndex& index) {
    int P = index.total();
    int F = P - index.num_families();
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(F, P);
    int row = 0;
    for (int i = 0; i < index.num_nodes(); ++i) {
        int k = index.cardinality(i);
        for (int pa = 0; pa < index.num_parent_assignments(i); ++pa) {
            int begin = index.family_begin(i, pa);
            for (int j = 0; j < k - 1; ++j) {
                D(row, begin + j) = 1.0;
                D(row, begin + k - 1) = -1.0;
                ++row;
            }
        }
    }
    FreeTransform out;
    out.D = std::move(D);
    return out;
}

inline FreeTransform build_D(const BayesNet& net) { return build_D(net.index); }

/// Dirichlet product as a Gaussian: exact means, block-diagonal covariance
/// Cov(theta_a, theta_b) = m_a (delta_ab - m_b) / (S + 1) per family.
inline GaussianPosterior to_gaussian(const DirichletProduct& dp) {
    const ParamIndex& index = dp.index;
    int P = index.total();
    GaussianPosterior g;
    g.mean = Eigen::VectorXd::Zero(P);
    g.cov = Eigen::MatrixXd::Zero(P, P);
    for (int i = 0; i < index.num_nodes(); ++i) {
        int k = index.cardinality(i);
        for (int pa = 0; pa < index.num_parent_assignments(i); ++pa) {
            double s = dp.strength(i, pa);
            int begin = index.family_begin(i, pa);
            for (int a = 0; a < k; ++a) {
                double ma = dp.alpha[begin + a] / s;
                g.mean(begin + a) = ma;
                for (int b = 0; b < k; ++b) {
                    double mb = dp.alpha[begin + b] / s;
                    g.cov(begin + a, begin + b) = ma * ((a == b ? 1.0 : 0.0) - mb) / (s + 1.0);
                }
            }
        }
    }
    return g;
}

enum class IntervalMethod { BetaMatched, TruncatedGaussian };

/// Equal-tailed confidence interval of coverage gamma for a probability-
/// valued quantity with the given mean and variance. Default fits a Beta by
/// moment matching; the alternative truncates a Gaussian to [0,1].
inline std::pair<double, double> beta_interval(double mean, double variance, double gamma,
                                               IntervalMethod method = IntervalMethod::BetaMatched) {
    if (mean < 0.0 || mean > 1.0) throw ArgumentError("mean outside [0,1]");
    if (variance < 0.0) throw ArgumentError("negative variance");
    if (gamma < 0.0 || gamma > 1.0) throw ArgumentError("gamma outside [0,1]");
    if (gamma == 0.0) return {mean, mean};
    if (gamma == 1.0) return {0.0, 1.0};
    if (variance == 0.0) return {mean, mean};

    double p_lo = (1.0 - gamma) / 2.0;
    double p_hi = (1.0 + gamma) / 2.0;
    double lo, hi;
    if (method == IntervalMethod::TruncatedGaussian) {
        boost::math::normal_distribution<double> nd(mean, std::sqrt(variance));
        lo = boost::math::quantile(nd, p_lo);
        hi = boost::math::quantile(nd, p_hi);
        lo = std::clamp(lo, 0.0, 1.0);
        hi = std::clamp(hi, 0.0, 1.0);
    } else {
        double nu;
        if (mean <= 0.0 || mean >= 1.0) {
            // degenerate mean with positive variance: maximally diffuse
            nu = 1e-6;
            mean = std::clamp(mean, 1e-12, 1.0 - 1e-12);
        } else {
            nu = mean * (1.0 - mean) / variance - 1.0;
            if (nu <= 0.0) nu = 1e-6; // variance at/over the Bernoulli bound
        }
        boost::math::beta_distribution<double> bd(mean * nu, (1.0 - mean) * nu);
        lo = boost::math::quantile(bd, p_lo);
        hi = boost::math::quantile(bd, p_hi);
    }
    // keep intervals nested across gamma and containing the mean
    lo = std::min(lo, mean);
    hi = std::max(hi, mean);
    return {lo, hi};
}

} // namespace sobn
