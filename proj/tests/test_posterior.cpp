#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "sobn/harness.hpp"
#include "sobn/posterior.hpp"

using namespace sobn;

TEST_CASE("build_D blocks") {
    SECTION("one family of size 3") {
        BayesNet net({"A"}, {3}, {{}});
        auto ft = build_D(net);
        REQUIRE(ft.D.rows() == 2);
        REQUIRE(ft.D.cols() == 3);
        CHECK(ft.D(0, 0) == 1.0);
        CHECK(ft.D(0, 2) == -1.0);
        CHECK(ft.D(1, 1) == 1.0);
        CHECK(ft.D(1, 2) == -1.0);
        CHECK(ft.D(0, 1) == 0.0);
    }
    SECTION("binary family") {
        BayesNet net({"A"}, {2}, {{}});
        auto ft = build_D(net);
        REQUIRE(ft.D.rows() == 1);
        CHECK(ft.D(0, 0) == 1.0);
        CHECK(ft.D(0, 1) == -1.0);
    }
    SECTION("full row rank and annihilates family ones") {
        BayesNet net = make_chain3();
        auto ft = build_D(net);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(ft.D);
        CHECK(lu.rank() == ft.D.rows());
        for (int i = 0; i < net.num_nodes(); ++i)
            for (int pa = 0; pa < net.index.num_parent_assignments(i); ++pa) {
                Eigen::VectorXd ones = Eigen::VectorXd::Zero(net.num_params());
                int begin = net.index.family_begin(i, pa);
                for (int x = 0; x < net.card[i]; ++x) ones(begin + x) = 1.0;
                CHECK((ft.D * ones).norm() < 1e-14);
            }
    }
}

TEST_CASE("D maps gradients to constrained directional derivatives") {
    Rng rng(20);
    BayesNet net = sample_ground_truth(make_chain3(), rng);
    Spn spn = Spn::compile(net);
    Spn::EvalBuffer buf;
    Observation e(3);
    e[2] = 1;
    spn.forward(net, e, buf);
    PassResult pass = spn.backward(net, e, buf);
    auto ft = build_D(net);
    Eigen::VectorXd g =
        Eigen::Map<Eigen::VectorXd>(pass.gradient.data(), pass.gradient.size());
    Eigen::VectorXd free_g = ft.D * g;

    // finite differences along the simplex: theta_j += h, theta_last -= h
    double h = 1e-6;
    int row = 0;
    for (int i = 0; i < net.num_nodes(); ++i) {
        int k = net.card[i];
        for (int pa = 0; pa < net.index.num_parent_assignments(i); ++pa) {
            int begin = net.index.family_begin(i, pa);
            for (int j = 0; j < k - 1; ++j, ++row) {
                BayesNet plus = net, minus = net;
                plus.theta[begin + j] += h;
                plus.theta[begin + k - 1] -= h;
                minus.theta[begin + j] -= h;
                minus.theta[begin + k - 1] += h;
                double fd = (oracle::evidence_probability(plus, e) -
                             oracle::evidence_probability(minus, e)) /
                            (2 * h);
                CHECK_THAT(free_g(row), Catch::Matchers::WithinAbs(fd, 1e-5));
            }
        }
    }
}

TEST_CASE("dirichlet_mixed_moment closed form") {
    std::vector<double> flat2 = {1.0, 1.0};
    CHECK_THAT(dirichlet_mixed_moment(flat2, std::vector<int>{1, 0}),
               Catch::Matchers::WithinAbs(0.5, 1e-15));
    CHECK_THAT(dirichlet_mixed_moment(flat2, std::vector<int>{2, 0}),
               Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-15));
    std::vector<double> a = {2.0, 3.0, 1.0};
    CHECK_THAT(dirichlet_mixed_moment(a, std::vector<int>{1, 1, 0}),
               Catch::Matchers::WithinAbs(1.0 / 7.0, 1e-15));
    CHECK_THROWS_AS(dirichlet_mixed_moment(std::vector<double>{0.0, 1.0}, std::vector<int>{1, 0}),
                    ArgumentError);
}

TEST_CASE("mixed moment with total exponent 1 is the mean") {
    Rng rng(22);
    for (int rep = 0; rep < 20; ++rep) {
        int k = 2 + rng.uniform_int(3);
        std::vector<double> alpha(k);
        double s = 0.0;
        for (double& v : alpha) {
            v = 0.2 + 5.0 * rng.uniform();
            s += v;
        }
        std::vector<int> exps(k, 0);
        int j = rng.uniform_int(k);
        exps[j] = 1;
        CHECK_THAT(dirichlet_mixed_moment(alpha, exps),
                   Catch::Matchers::WithinAbs(alpha[j] / s, 1e-14));
    }
}

TEST_CASE("to_gaussian: flat Beta block") {
    DirichletProduct dp;
    BayesNet net({"A"}, {2}, {{}});
    dp.index = net.index;
    dp.alpha = {1.0, 1.0};
    GaussianPosterior g = to_gaussian(dp);
    CHECK_THAT(g.mean(0), Catch::Matchers::WithinAbs(0.5, 1e-15));
    CHECK_THAT(g.cov(0, 0), Catch::Matchers::WithinAbs(1.0 / 12.0, 1e-15));
    CHECK_THAT(g.cov(0, 1), Catch::Matchers::WithinAbs(-1.0 / 12.0, 1e-15));
    // block rows sum to zero
    CHECK_THAT(g.cov.row(0).sum(), Catch::Matchers::WithinAbs(0.0, 1e-15));
}

TEST_CASE("to_gaussian matches sampled Dirichlet covariance") {
    BayesNet net({"A"}, {3}, {{}});
    DirichletProduct dp;
    dp.index = net.index;
    dp.alpha = {2.0, 3.0, 5.0};
    GaussianPosterior g = to_gaussian(dp);

    Rng rng(24);
    const int n = 1000000;
    double mean[3] = {0, 0, 0};
    double cov[3][3] = {};
    for (int t = 0; t < n; ++t) {
        auto draw = rng.dirichlet(dp.alpha);
        for (int a = 0; a < 3; ++a) mean[a] += draw[a];
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) cov[a][b] += draw[a] * draw[b];
    }
    for (int a = 0; a < 3; ++a) mean[a] /= n;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            double c = cov[a][b] / n - mean[a] * mean[b];
            CHECK_THAT(c / g.cov(a, b), Catch::Matchers::WithinAbs(1.0, 0.02));
        }
}

TEST_CASE("beta_interval endpoints") {
    CHECK(beta_interval(0.3, 0.01, 0.0) == std::make_pair(0.3, 0.3));
    CHECK(beta_interval(0.3, 0.01, 1.0) == std::make_pair(0.0, 1.0));
    auto [lo, hi] = beta_interval(0.5, 1.0 / 12.0, 0.5); // flat Beta
    CHECK_THAT(lo, Catch::Matchers::WithinAbs(0.25, 1e-9));
    CHECK_THAT(hi, Catch::Matchers::WithinAbs(0.75, 1e-9));
    // degenerate point posterior
    CHECK(beta_interval(1.0, 0.0, 0.5) == std::make_pair(1.0, 1.0));
    CHECK_THROWS_AS(beta_interval(-0.1, 0.01, 0.5), ArgumentError);
}

TEST_CASE("beta_interval is nested in gamma") {
    Rng rng(26);
    for (int rep = 0; rep < 50; ++rep) {
        double mean = 0.05 + 0.9 * rng.uniform();
        double variance = rng.uniform() * mean * (1.0 - mean); // may hit the diffuse fallback
        auto method = rng.bernoulli(0.5) ? IntervalMethod::BetaMatched
                                         : IntervalMethod::TruncatedGaussian;
        double prev_lo = mean, prev_hi = mean;
        for (int g = 0; g <= 100; ++g) {
            auto [lo, hi] = beta_interval(mean, variance, g / 100.0, method);
            CHECK(lo <= prev_lo + 1e-12);
            CHECK(hi >= prev_hi - 1e-12);
            CHECK(lo >= 0.0);
            CHECK(hi <= 1.0);
            prev_lo = lo;
            prev_hi = hi;
        }
    }
}
