#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "sobn/harness.hpp"
#include "sobn/infer2.hpp"

using namespace sobn;

namespace {

// conditional p(x_k | e) by enumeration for a concrete theta vector
std::vector<double> exact_conditional(const BayesNet& structure, const std::vector<double>& theta,
                                      const Observation& e, int k) {
    BayesNet net = structure;
    net.theta = theta;
    auto joint = oracle::joint_with_value(net, e, k);
    double pe = oracle::evidence_probability(net, e);
    for (double& v : joint) v /= pe;
    return joint;
}

DirichletProduct random_dirichlet_posterior(const BayesNet& net, Rng& rng, double min_strength,
                                            double max_strength) {
    DirichletProduct dp;
    dp.index = net.index;
    dp.alpha.resize(net.num_params());
    for (int i = 0; i < net.num_nodes(); ++i)
        for (int pa = 0; pa < net.index.num_parent_assignments(i); ++pa) {
            double s = min_strength + (max_strength - min_strength) * rng.uniform();
            std::vector<double> ones(net.card[i], 1.0);
            auto mean = rng.dirichlet(ones);
            int begin = net.index.family_begin(i, pa);
            for (int x = 0; x < net.card[i]; ++x)
                dp.alpha[begin + x] = std::max(mean[x] * s, 0.2);
        }
    return dp;
}

} // namespace

TEST_CASE("zero covariance collapses to first-order inference") {
    Rng rng(60);
    BayesNet net = sample_ground_truth(make_chain3(), rng);
    Spn spn = Spn::compile(net);
    GaussianPosterior posterior;
    posterior.mean = Eigen::Map<Eigen::VectorXd>(net.theta.data(), net.theta.size());
    posterior.cov = Eigen::MatrixXd::Zero(net.num_params(), net.num_params());
    Observation e(3);
    e[0] = 2;
    auto results = query_all(spn, net, posterior, e);
    REQUIRE(results.size() == 2);
    for (const auto& r : results) {
        auto expected = exact_conditional(net, net.theta, e, r.node);
        for (int v = 0; v < 3; ++v) {
            CHECK_THAT(r.mean[v], Catch::Matchers::WithinAbs(expected[v], 1e-10));
            CHECK(r.variance[v] == 0.0);
        }
    }
}

TEST_CASE("single node: query equals the parameter posterior itself") {
    BayesNet net({"A"}, {3}, {{}});
    Spn spn = Spn::compile(net);
    DirichletProduct dp;
    dp.index = net.index;
    dp.alpha = {1.0, 1.0, 1.0};
    GaussianPosterior posterior = to_gaussian(dp);
    Spn::EvalBuffer buf;
    Observation e(1);
    QueryResult r = query_second_order(spn, net, posterior, e, 0, buf);
    for (int v = 0; v < 3; ++v) {
        CHECK_THAT(r.mean[v], Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));
        CHECK_THAT(r.variance[v], Catch::Matchers::WithinAbs(1.0 / 18.0, 1e-12));
    }
}

TEST_CASE("means equal exact conditionals at the posterior mean") {
    Rng rng(62);
    for (int rep = 0; rep < 10; ++rep) {
        BayesNet structure = oracle::random_structure(4, 2, rng);
        BayesNet net = sample_ground_truth(structure, rng);
        Spn spn = Spn::compile(net);
        DirichletProduct dp = random_dirichlet_posterior(net, rng, 20.0, 100.0);
        GaussianPosterior posterior = to_gaussian(dp);
        Observation e(4);
        e[0] = rng.uniform_int(2);
        std::vector<double> at_mean(posterior.mean.data(),
                                    posterior.mean.data() + posterior.mean.size());
        auto results = query_all(spn, structure, posterior, e);
        for (const auto& r : results) {
            auto expected = exact_conditional(structure, at_mean, e, r.node);
            for (std::size_t v = 0; v < r.mean.size(); ++v)
                CHECK_THAT(r.mean[v], Catch::Matchers::WithinAbs(expected[v], 1e-10));
        }
    }
}

TEST_CASE("variance is invariant to constraint-direction shifts of the gradient") {
    // R annihilates the all-ones direction per family, so adding any multiple
    // of a family's ones vector to g cannot change g^T R g
    Rng rng(64);
    BayesNet net = sample_ground_truth(make_chain3(), rng);
    DirichletProduct dp = random_dirichlet_posterior(net, rng, 10.0, 50.0);
    GaussianPosterior posterior = to_gaussian(dp);
    Eigen::VectorXd g = Eigen::VectorXd::Random(net.num_params());
    double base = g.dot(posterior.cov * g);
    for (int i = 0; i < net.num_nodes(); ++i)
        for (int pa = 0; pa < net.index.num_parent_assignments(i); ++pa) {
            Eigen::VectorXd shifted = g;
            int begin = net.index.family_begin(i, pa);
            for (int x = 0; x < net.card[i]; ++x) shifted(begin + x) += 3.7;
            CHECK_THAT(shifted.dot(posterior.cov * shifted),
                       Catch::Matchers::WithinAbs(base, 1e-9));
        }
}

TEST_CASE("delta variance matches Monte Carlo propagation") {
    Rng rng(66);
    int checked = 0;
    for (int rep = 0; rep < 8; ++rep) {
        BayesNet structure = rep % 2 == 0 ? oracle::binary_pair_net()
                                          : oracle::random_structure(3, 3, rng);
        Spn spn = Spn::compile(structure);
        DirichletProduct dp = random_dirichlet_posterior(structure, rng, 60.0, 300.0);
        GaussianPosterior posterior = to_gaussian(dp);
        Observation e(structure.num_nodes());
        e[0] = 0;
        int k = structure.num_nodes() - 1;
        Spn::EvalBuffer buf;
        QueryResult r = query_second_order(spn, structure, posterior, e, k, buf);

        const int n = 100000;
        std::vector<double> mc_mean(structure.card[k], 0.0), mc_sq(structure.card[k], 0.0);
        std::vector<double> theta(structure.num_params());
        for (int t = 0; t < n; ++t) {
            for (int i = 0; i < structure.num_nodes(); ++i)
                for (int pa = 0; pa < structure.index.num_parent_assignments(i); ++pa) {
                    int begin = structure.index.family_begin(i, pa);
                    std::span<const double> alpha(dp.alpha.data() + begin,
                                                  static_cast<std::size_t>(structure.card[i]));
                    auto draw = rng.dirichlet(alpha);
                    for (int x = 0; x < structure.card[i]; ++x) theta[begin + x] = draw[x];
                }
            auto cond = exact_conditional(structure, theta, e, k);
            for (int v = 0; v < structure.card[k]; ++v) {
                mc_mean[v] += cond[v];
                mc_sq[v] += cond[v] * cond[v];
            }
        }
        for (int v = 0; v < structure.card[k]; ++v) {
            double mu = mc_mean[v] / n;
            double var = mc_sq[v] / n - mu * mu;
            if (var < 1e-8) continue;
            CHECK_THAT(r.variance[v] / var, Catch::Matchers::WithinAbs(1.0, 0.15));
            ++checked;
        }
    }
    CHECK(checked >= 10);
}

TEST_CASE("query_all shape") {
    Rng rng(68);
    BayesNet net = sample_ground_truth(make_chain3(), rng);
    Spn spn = Spn::compile(net);
    GaussianPosterior posterior = to_gaussian(random_dirichlet_posterior(net, rng, 10.0, 20.0));

    Observation empty(3);
    CHECK(query_all(spn, net, posterior, empty).size() == 3);

    Observation all(3);
    all[0] = 0;
    all[1] = 1;
    all[2] = 2;
    CHECK(query_all(spn, net, posterior, all).empty());

    // per-result invariants: means sum to 1, variance below the Bernoulli bound
    for (const auto& r : query_all(spn, net, posterior, empty)) {
        double sum = 0.0;
        for (std::size_t v = 0; v < r.mean.size(); ++v) {
            sum += r.mean[v];
            CHECK(r.variance[v] <= r.mean[v] * (1.0 - r.mean[v]) + 1e-9);
            CHECK(r.variance[v] >= 0.0);
        }
        CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
}

TEST_CASE("observed query node is rejected") {
    Rng rng(70);
    BayesNet net = sample_ground_truth(make_chain3(), rng);
    Spn spn = Spn::compile(net);
    GaussianPosterior posterior = to_gaussian(random_dirichlet_posterior(net, rng, 10.0, 20.0));
    Observation e(3);
    e[1] = 0;
    Spn::EvalBuffer buf;
    CHECK_THROWS_AS(query_second_order(spn, net, posterior, e, 1, buf), ArgumentError);
}
