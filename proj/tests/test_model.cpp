// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "mixreg/model.hpp"
#include "mixreg/rng.hpp"

using namespace mixreg;

namespace {

FeatureMap quartic_map() {
    return FeatureMap::parse({"1", "t", "t^4", "t^7"}, 1);
}

MixParams two_component(int d = 4) {
    MixParams p;
    p.pi.resize(2);
    p.pi << 0.5, 0.5;
    p.B.resize(d, 2);
    Rng rng(99);
    for (int j = 0; j < 2; ++j)
        for (int i = 0; i < d; ++i) p.B(i, j) = rng.normal();
    return p;
}

}  // namespace

TEST_CASE("feature expression parser") {
    FeatureMap m = quartic_map();
    CHECK(m.out_dim() == 4);
    Eigen::VectorXd t(1);
    t << 0.5;
    Eigen::VectorXd x = m.apply(t);
    CHECK(x[0] == 1.0);
    CHECK(x[1] == 0.5);
    CHECK(x[2] == doctest::Approx(std::pow(0.5, 4)).epsilon(1e-15));
    CHECK(x[3] == doctest::Approx(std::pow(0.5, 7)).epsilon(1e-15));

    FeatureMap multi = FeatureMap::parse({"1", "t1", "t2^3", "2*t1*t2^2"}, 2);
    Eigen::VectorXd u(2);
    u << -0.5, 0.25;
    Eigen::VectorXd v = multi.apply(u);
    CHECK(v[2] == doctest::Approx(std::pow(0.25, 3)));
    CHECK(v[3] == doctest::Approx(2 * -0.5 * 0.25 * 0.25));

    CHECK_THROWS(FeatureMap::parse({"t5"}, 2));
    CHECK_THROWS(FeatureMap::parse({"t^"}, 1));
    CHECK_THROWS(FeatureMap::parse({"t"}, 2));  // needs index when b > 1
    CHECK_THROWS(FeatureMap::parse({}, 1));
}

TEST_CASE("noise specs carry the right moments") {
    NoiseSpec g = NoiseSpec::gaussian(0.1);
    CHECK(g.m2() == doctest::Approx(0.1));
    CHECK(g.m3() == 0.0);

    NoiseSpec u = NoiseSpec::uniform(0.3);
    CHECK(u.m2() == doctest::Approx(0.09 / 3.0));
    CHECK(u.m3() == 0.0);

    // skewed two-point distribution: P(2a) = 1/3, P(-a) = 2/3, mean 0
    NoiseSpec c = NoiseSpec::custom({2.0, -1.0}, {1.0 / 3.0, 2.0 / 3.0});
    CHECK(c.m2() == doctest::Approx(2.0));
    CHECK(c.m3() == doctest::Approx(2.0));
    CHECK_THROWS(NoiseSpec::custom({1.0, 1.0}, {0.5, 0.5}));  // nonzero mean

    Rng rng(5);
    NoiseSpec silent = NoiseSpec::gaussian(0.0);
    for (int i = 0; i < 10; ++i) CHECK(silent.sample(rng) == 0.0);
}

TEST_CASE("sample_dataset basics") {
    MixParams p = two_component();
    FeatureMap fmap = quartic_map();

    SUBCASE("degenerate mixture with zero noise is exact") {
        MixParams single;
        single.pi.resize(1);
        single.pi << 1.0;
        single.B = p.B.col(0);
        Dataset data = sample_dataset(single, fmap, NoiseSpec::gaussian(0.0), 200, 42);
        for (Eigen::Index i = 0; i < data.n(); ++i)
            CHECK(data.y[i] == single.B.col(0).dot(data.X.row(i)));
    }

    SUBCASE("shape and component frequency") {
        Dataset data = sample_dataset(p, fmap, NoiseSpec::gaussian(0.1), 100000, 7);
        CHECK(data.n() == 100000);
        CHECK(data.d() == 4);
        double freq = 0;
        for (int h : data.component) freq += h;
        freq /= static_cast<double>(data.n());
        // binomial concentration: 3 sigma around 1/2
        CHECK(std::abs(freq - 0.5) <= 3.0 * std::sqrt(0.25 / 100000.0));
    }

    SUBCASE("trace reproduces the generative identity exactly") {
        Dataset data = sample_dataset(p, fmap, NoiseSpec::gaussian(0.1), 500, 11);
        for (Eigen::Index i = 0; i < data.n(); ++i) {
            const int h = data.component[static_cast<std::size_t>(i)];
            const double eps = data.noise[static_cast<std::size_t>(i)];
            CHECK(data.y[i] == p.B.col(h).dot(data.X.row(i)) + eps);
        }
    }

    SUBCASE("same seed gives bit-identical datasets") {
        Dataset a = sample_dataset(p, fmap, NoiseSpec::gaussian(0.1), 300, 123);
        Dataset b = sample_dataset(p, fmap, NoiseSpec::gaussian(0.1), 300, 123);
        CHECK((a.X - b.X).cwiseAbs().maxCoeff() == 0.0);
        CHECK((a.y - b.y).cwiseAbs().maxCoeff() == 0.0);
        CHECK(a.component == b.component);
    }

    SUBCASE("excluded region is respected; covering region is an error") {
        FeatureMap mis = fmap;
        mis.excluded = FeatureMap::misspecification_region();
        Dataset data = sample_dataset(p, mis, NoiseSpec::gaussian(0.1), 2000, 3);
        for (Eigen::Index i = 0; i < data.n(); ++i) {
            const double t = data.X(i, 1);  // second feature is t itself
            CHECK_FALSE((t >= -0.5 && t <= -0.25));
            CHECK_FALSE((t >= 0.25 && t <= 0.5));
        }
        FeatureMap all = fmap;
        all.excluded = {{-1.0, 1.0}};
        CHECK_THROWS_AS(sample_dataset(p, all, NoiseSpec::gaussian(0.1), 10, 3),
                        NumericError);
    }
}

TEST_CASE("compound moments") {
    SUBCASE("single component is the pure tensor power") {
        MixParams p;
        p.pi.resize(1);
        p.pi << 1.0;
        p.B.resize(3, 1);
        p.B << 0.5, -1.0, 2.0;
        for (int order : {1, 2, 3}) {
            SymTensor m = compound_moment(p, order);
            SymTensor expect = tensor_power(p.B.col(0), order);
            for (Eigen::Index i = 0; i < m.size(); ++i)
                CHECK(m.data()[i] == doctest::Approx(expect.data()[i]).epsilon(1e-14));
        }
    }

    SUBCASE("first moment equals B*pi") {
        MixParams p = sample_ground_truth(3, 5, 2024);
        SymTensor m1 = compound_moment(p, 1);
        Eigen::VectorXd expect = p.B * p.pi;
        for (int i = 0; i < 5; ++i)
            CHECK(m1(i) == doctest::Approx(expect[i]).epsilon(1e-14));
    }

    SUBCASE("orthonormal columns and uniform weights give a 1/k eigenvalue") {
        MixParams p;
        p.pi = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
        p.B = Eigen::MatrixXd::Identity(5, 3);
        SymTensor m2 = compound_moment(p, 2);
        Eigen::Map<const Eigen::MatrixXd> m(m2.data(), 5, 5);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(m)};
        int third = 0;
        for (int i = 0; i < 5; ++i)
            if (std::abs(es.eigenvalues()[i] - 1.0 / 3.0) < 1e-12) ++third;
        CHECK(third == 3);
    }

    SUBCASE("third moment unfolding has rank k") {
        MixParams p = sample_ground_truth(3, 5, 77);
        SymTensor m3 = compound_moment(p, 3);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(unfold(m3, 1));
        const auto& sv = svd.singularValues();
        for (int i = 3; i < 5; ++i) CHECK(sv[i] <= 1e-10 * sv[0]);
        CHECK(sv[2] > 1e-10 * sv[0]);
    }
}

TEST_CASE("identifiability diagnostics") {
    SUBCASE("trivial one-feature map") {
        FeatureMap one = FeatureMap::parse({"1"}, 1);
        for (int p : {1, 2, 3}) {
            auto res = identifiability_check(one, 100, p, 9);
            CHECK(res.sigma_min == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(res.pass);
        }
    }

    SUBCASE("polynomial basis (1,t,t^2) is singular at order 2") {
        // cvec(x^2) contains both t*t and 1*t^2: linearly dependent columns
        FeatureMap quad = FeatureMap::parse({"1", "t", "t^2"}, 1);
        auto res = identifiability_check(quad, 10000, 2, 17);
        CHECK(res.sigma_min < 1e-6);
        CHECK_FALSE(res.pass);
        // order 1 is fine: three monomials of distinct degree
        CHECK(identifiability_check(quad, 10000, 1, 17).pass);
    }

    SUBCASE("reference map (1,t,t^4,t^7) passes only at order 1") {
        // exponent sums collide at higher orders (1+7 = 4+4), which makes
        // two collapsed components proportional; the diagnostic must report
        // an exact rank deficiency there
        FeatureMap fmap = quartic_map();
        CHECK(identifiability_check(fmap, 10000, 1, 21).pass);
        auto r2 = identifiability_check(fmap, 10000, 2, 21);
        CHECK_FALSE(r2.pass);
        CHECK(r2.sigma_min < 1e-12);
        auto r3 = identifiability_check(fmap, 10000, 3, 21);
        CHECK_FALSE(r3.pass);
        CHECK(r3.sigma_min < 1e-12);
    }

    SUBCASE("dataset overload agrees with the Monte-Carlo overload") {
        MixParams p = two_component();
        Dataset data = sample_dataset(p, quartic_map(), NoiseSpec::gaussian(0.1),
                                      5000, 31);
        auto res = identifiability_check(data, 1);
        CHECK(res.pass);
        CHECK(res.sigma_min > 1e-3);
    }
}

TEST_CASE("large-sample response moment matches population prediction") {
    // (1/n) sum y_i x_i should approach E[x x^T] M1 for noiseless data
    MixParams p = two_component();
    FeatureMap fmap = quartic_map();
    const Eigen::Index n = 1000000;
    Dataset data = sample_dataset(p, fmap, NoiseSpec::gaussian(0.0), n, 2718, false);
    Eigen::VectorXd emp = data.X.transpose() * data.y / static_cast<double>(n);

    // population E[x x^T] via dense quadrature over t in [-1,1]
    Eigen::MatrixXd exx = Eigen::MatrixXd::Zero(4, 4);
    const int q = 20000;
    for (int g = 0; g < q; ++g) {
        const double t = -1.0 + 2.0 * (g + 0.5) / q;
        Eigen::VectorXd x(4);
        x << 1, t, std::pow(t, 4), std::pow(t, 7);
        exx += x * x.transpose();
    }
    exx /= q;
    Eigen::VectorXd m1 = p.B * p.pi;
    Eigen::VectorXd pop = exx * m1;
    for (int j = 0; j < 4; ++j) {
        // crude 3-sigma band: per-record terms are bounded by |y| |x| <= ~10
        const double se = 3.0 * 10.0 / std::sqrt(static_cast<double>(n));
        CHECK(std::abs(emp[j] - pop[j]) <= se);
    }
}

TEST_CASE("dataset CSV round-trip") {
    MixParams p = two_component();
    Dataset data = sample_dataset(p, quartic_map(), NoiseSpec::gaussian(0.1), 50, 8);
    const std::string path =
        (std::filesystem::temp_directory_path() / "mixreg_test_data.csv").string();
    data.save_csv(path);
    Dataset back = Dataset::load_csv(path);
    REQUIRE(back.n() == data.n());
    REQUIRE(back.d() == data.d());
    CHECK((back.X - data.X).cwiseAbs().maxCoeff() == 0.0);  // %.17g is lossless
    CHECK((back.y - data.y).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.component == data.component);
    CHECK(back.noise == data.noise);
    std::remove(path.c_str());
}

TEST_CASE("ground truth sampling") {
    MixParams p = sample_ground_truth(3, 4, 555);
    p.validate(true);
    CHECK(p.pi.sum() == doctest::Approx(1.0).epsilon(1e-12));
    // Dirichlet(100) concentrates near uniform
    for (int h = 0; h < 3; ++h) CHECK(std::abs(p.pi[h] - 1.0 / 3.0) < 0.15);
    MixParams q = sample_ground_truth(3, 4, 555);
    CHECK((p.B - q.B).cwiseAbs().maxCoeff() == 0.0);
}
