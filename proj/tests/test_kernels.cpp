// SPDX-License-Identifier: Apache-2.0
//
// Every SIMD backend must agree with the scalar reference on the same
// inputs. FMA contraction reorders roundoff, so comparisons are relative
// to the magnitude of the accumulated terms rather than exact.

#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <vector>

#include "mixreg/kernels.hpp"
#include "mixreg/rng.hpp"

using mixreg::kernels::Ops;

namespace {

const std::size_t kSizes[] = {0, 1, 2, 3, 4, 7, 8, 9, 15, 16, 17, 20, 64, 219, 1000};

std::vector<double> random_vec(mixreg::Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal() * 3.0;
    return v;
}

}  // namespace

TEST_CASE("kernel backends agree with the scalar reference") {
    const Ops* backends[4];
    const std::size_t nb = mixreg::kernels::available_backends(backends, 4);
    REQUIRE(nb >= 1);
    const Ops& ref = mixreg::kernels::scalar_ops();

    mixreg::Rng rng(20240811);
    for (std::size_t bi = 0; bi < nb; ++bi) {
        const Ops& ops = *backends[bi];
        CAPTURE(ops.name);
        for (std::size_t n : kSizes) {
            auto a = random_vec(rng, n);
            auto b = random_vec(rng, n);

            double mag = 0.0;
            for (std::size_t i = 0; i < n; ++i) mag += std::abs(a[i] * b[i]);
            const double tol = 1e-13 * (mag + 1.0);

            CHECK(std::abs(ops.dot(a.data(), b.data(), n) -
                           ref.dot(a.data(), b.data(), n)) <= tol);

            auto y1 = random_vec(rng, n);
            auto y2 = y1;
            ops.axpy(1.7, a.data(), y1.data(), n);
            ref.axpy(1.7, a.data(), y2.data(), n);
            for (std::size_t i = 0; i < n; ++i)
                CHECK(std::abs(y1[i] - y2[i]) <= 1e-13 * (std::abs(y2[i]) + 1.0));
        }

        // rank-1 symmetric accumulate, including ld > m
        for (std::size_t m : {1u, 2u, 5u, 8u, 20u, 57u}) {
            const std::size_t ld = m + 3;
            auto v = random_vec(rng, m);
            std::vector<double> g1(ld * m, 0.25), g2(g1);
            ops.syr_upper(0.8, v.data(), m, g1.data(), ld);
            ref.syr_upper(0.8, v.data(), m, g2.data(), ld);
            for (std::size_t j = 0; j < m; ++j)
                for (std::size_t i = 0; i < ld; ++i) {
                    const double got = g1[i + j * ld], want = g2[i + j * ld];
                    CHECK(std::abs(got - want) <= 1e-13 * (std::abs(want) + 1.0));
                    if (i > j && i < m)  // strictly-lower part untouched
                        CHECK(got == 0.25);
                }
        }
    }
}

TEST_CASE("backend selection") {
    const std::string prev(mixreg::kernels::active_name());
    CHECK_FALSE(mixreg::kernels::set_backend("not-a-backend"));
    CHECK(mixreg::kernels::active_name() == prev);
    CHECK(mixreg::kernels::set_backend("scalar"));
    CHECK(mixreg::kernels::active_name() == "scalar");
    CHECK(mixreg::kernels::set_backend(prev));
}
