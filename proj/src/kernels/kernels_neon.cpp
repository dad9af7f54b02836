// SPDX-License-Identifier: Apache-2.0
//
// NEON kernels for aarch64, where 128-bit SIMD is baseline.

#include "mixreg/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

namespace mixreg::kernels {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
        acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
    }
    double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
        vst1q_f64(y + i + 2, vfmaq_f64(vld1q_f64(y + i + 2), va, vld1q_f64(x + i + 2)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void syr_upper_neon(double w, const double* v, std::size_t m, double* g,
                    std::size_t ld) {
    for (std::size_t j = 0; j < m; ++j) {
        axpy_neon(w * v[j], v, g + j * ld, j + 1);
    }
}

}  // namespace

const Ops* neon_ops() {
    static const Ops ops{dot_neon, axpy_neon, syr_upper_neon, "neon"};
    return &ops;
}

}  // namespace mixreg::kernels

#else

namespace mixreg::kernels {
const Ops* neon_ops() { return nullptr; }
}  // namespace mixreg::kernels

#endif
