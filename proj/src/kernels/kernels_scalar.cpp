// SPDX-License-Identifier: Apache-2.0
//
// Reference kernels. These define the semantics the SIMD variants are
// tested against; keep them obvious.

#include "mixreg/kernels.hpp"

namespace mixreg::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void syr_upper_scalar(double w, const double* v, std::size_t m, double* g,
                      std::size_t ld) {
    for (std::size_t j = 0; j < m; ++j) {
        const double wj = w * v[j];
        double* col = g + j * ld;
        for (std::size_t i = 0; i <= j; ++i) col[i] += wj * v[i];
    }
}

}  // namespace

const Ops& scalar_ops() {
    static const Ops ops{dot_scalar, axpy_scalar, syr_upper_scalar, "scalar"};
    return ops;
}

}  // namespace mixreg::kernels
