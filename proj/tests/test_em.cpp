// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "mixreg/em.hpp"
#include "mixreg/regression.hpp"
#include "mixreg/rng.hpp"

using namespace mixreg;

namespace {

FeatureMap quartic_map() { return FeatureMap::parse({"1", "t", "t^4", "t^7"}, 1); }

MixParams permuted(const MixParams& p, const std::vector<int>& perm) {
    MixParams q;
    q.pi.resize(p.k());
    q.B.resize(p.d(), p.k());
    for (int j = 0; j < p.k(); ++j) {
        q.pi[j] = p.pi[perm[static_cast<std::size_t>(j)]];
        q.B.col(j) = p.B.col(perm[static_cast<std::size_t>(j)]);
    }
    return q;
}

}  // namespace

TEST_CASE("em_fit fixed point at the truth") {
    // components offset in the constant feature, so their predictions never
    // cross and the noiseless responsibilities are exactly hard
    MixParams truth = sample_ground_truth(2, 4, 1001);
    truth.B.col(1) = truth.B.col(0);
    truth.B(0, 1) += 10.0;
    Dataset data =
        sample_dataset(truth, quartic_map(), NoiseSpec::gaussian(0.0), 4000, 3);
    // the finite-sample fixed point has the empirical component frequencies
    MixParams init = truth;
    init.pi.setZero();
    for (int h : data.component) init.pi[h] += 1.0 / static_cast<double>(data.n());
    EMConfig cfg;
    cfg.sigma2 = 1e-6;  // assumed noise scale; data itself is clean
    EMResult res = em_fit(data, 2, init, cfg);
    CHECK(res.converged);
    CHECK(res.iterations <= 2);
    CHECK((res.params.B - truth.B).norm() < 1e-9);
    CHECK((res.params.pi - init.pi).norm() < 1e-12);
}

TEST_CASE("k=1 EM is ordinary least squares") {
    MixParams truth = sample_ground_truth(1, 4, 1003);
    Dataset data =
        sample_dataset(truth, quartic_map(), NoiseSpec::gaussian(0.1), 5000, 5);
    EMConfig cfg;
    cfg.sigma2 = 0.1;
    EMResult res = em_fit(data, 1, init_random(1, 4, 9), cfg);
    Eigen::VectorXd ols = estimate_moment1(data);
    CHECK((res.params.B.col(0) - ols).norm() < 1e-10);
    CHECK(res.params.pi[0] == 1.0);
}

TEST_CASE("loglik") {
    MixParams truth = sample_ground_truth(3, 4, 1005);
    Dataset data =
        sample_dataset(truth, quartic_map(), NoiseSpec::gaussian(0.1), 100, 7);

    SUBCASE("closed form for a single component") {
        MixParams single;
        single.pi.resize(1);
        single.pi << 1.0;
        single.B = truth.B.col(0);
        const double sigma2 = 0.25;
        double expect = 0.0;
        for (Eigen::Index i = 0; i < data.n(); ++i) {
            const double r = data.y[i] - single.B.col(0).dot(data.X.row(i));
            expect += -0.5 * std::log(2.0 * M_PI * sigma2) - r * r / (2.0 * sigma2);
        }
        CHECK(loglik(data, single, sigma2) == doctest::Approx(expect).epsilon(1e-12));
    }

    SUBCASE("invariant under component relabeling") {
        const double a = loglik(data, truth, 0.1);
        const double b = loglik(data, permuted(truth, {2, 0, 1}), 0.1);
        CHECK(a == b);  // canonical summation makes this exact
    }

    SUBCASE("matches extended-precision oracle") {
        const double sigma2 = 0.1;
        long double total = 0.0L;
        for (Eigen::Index i = 0; i < data.n(); ++i) {
            long double mix = 0.0L;
            for (int h = 0; h < truth.k(); ++h) {
                const long double r = data.y[i] - truth.B.col(h).dot(data.X.row(i));
                mix += static_cast<long double>(truth.pi[h]) *
                       expl(-r * r / (2.0L * sigma2)) /
                       sqrtl(2.0L * static_cast<long double>(M_PI) * sigma2);
            }
            total += logl(mix);
        }
        CHECK(loglik(data, truth, sigma2) ==
              doctest::Approx(static_cast<double>(total)).epsilon(1e-10));
    }

    SUBCASE("rejects non-positive variance") {
        CHECK_THROWS_AS(loglik(data, truth, 0.0), NumericError);
    }
}

TEST_CASE("init_random") {
    MixParams a = init_random(3, 5, 42);
    MixParams b = init_random(3, 5, 42);
    CHECK((a.B - b.B).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.pi - b.pi).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.B.rows() == 5);
    CHECK(a.B.cols() == 3);

    // perturbed-uniform weights stay near 1/k
    for (int k = 2; k <= 5; ++k) {
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            MixParams p = init_random(k, 3, seed);
            for (int h = 0; h < k; ++h)
                CHECK(std::abs(p.pi[h] - 1.0 / k) < 0.05);
        }
    }
}

TEST_CASE("EM invariants") {
    MixParams truth = sample_ground_truth(3, 4, 1007);
    Dataset data =
        sample_dataset(truth, quartic_map(), NoiseSpec::gaussian(0.1), 3000, 11);
    EMConfig cfg;
    cfg.sigma2 = 0.1;
    cfg.max_iter = 150;

    SUBCASE("log-likelihood trace is monotone") {
        EMResult res = em_fit(data, 3, init_random(3, 4, 13), cfg);
        for (std::size_t i = 0; i + 1 < res.loglik_trace.size(); ++i)
            CHECK(res.loglik_trace[i + 1] >= res.loglik_trace[i] - 1e-8);
    }

    SUBCASE("responsibility rows sum to one") {
        Eigen::MatrixXd g = responsibilities(data, truth, 0.1);
        for (Eigen::Index i = 0; i < g.rows(); ++i)
            CHECK(std::abs(g.row(i).sum() - 1.0) <= 1e-12);
        CHECK(g.minCoeff() >= 0.99e-12);
    }

    SUBCASE("permutation equivariance is exact") {
        MixParams init = init_random(3, 4, 17);
        const std::vector<int> perm{1, 2, 0};
        EMResult base = em_fit(data, 3, init, cfg);
        EMResult swapped = em_fit(data, 3, permuted(init, perm), cfg);
        for (int j = 0; j < 3; ++j) {
            CHECK((swapped.params.B.col(j) -
                   base.params.B.col(perm[static_cast<std::size_t>(j)]))
                      .cwiseAbs()
                      .maxCoeff() == 0.0);
            CHECK(swapped.params.pi[j] ==
                  base.params.pi[perm[static_cast<std::size_t>(j)]]);
        }
    }

    SUBCASE("estimated sigma2 tracks the generating noise") {
        EMConfig est = cfg;
        est.estimate_sigma2 = true;
        est.sigma2 = 1.0;  // deliberately wrong start
        est.max_iter = 400;
        EMResult res = em_fit(data, 3, truth, est);
        CHECK(res.sigma2 == doctest::Approx(0.1).epsilon(0.15));
    }
}

TEST_CASE("EM error paths") {
    SUBCASE("singular weighted design names the component") {
        Dataset data;
        data.X.resize(50, 2);
        Rng rng(19);
        for (int i = 0; i < 50; ++i) {
            const double t = rng.uniform(-1, 1);
            data.X(i, 0) = t;
            data.X(i, 1) = t;  // exact collinearity for every component
        }
        data.y = data.X.col(0);
        EMConfig cfg;
        cfg.sigma2 = 0.1;
        CHECK_THROWS_WITH_AS(em_fit(data, 2, init_random(2, 2, 3), cfg),
                             doctest::Contains("component 1"),
                             ComponentCollapseError);
    }

    SUBCASE("non-finite data raises a numeric error") {
        MixParams truth = sample_ground_truth(2, 4, 1011);
        Dataset data =
            sample_dataset(truth, quartic_map(), NoiseSpec::gaussian(0.1), 100, 23);
        data.y[0] = std::numeric_limits<double>::quiet_NaN();
        EMConfig cfg;
        cfg.sigma2 = 0.1;
        CHECK_THROWS_AS(em_fit(data, 2, init_random(2, 4, 5), cfg), NumericError);
    }
}
