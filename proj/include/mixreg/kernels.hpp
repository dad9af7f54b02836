// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string_view>

namespace mixreg::kernels {

// Data-parallel primitives behind the moment accumulations and EM updates.
// Each entry has a scalar reference implementation plus SIMD variants
// (AVX2+FMA on x86-64, NEON on aarch64) selected once at startup.
struct Ops {
    // sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // Upper-triangular rank-1 accumulate: g[i + j*ld] += w * v[i] * v[j]
    // for all i <= j < m. g is column-major with leading dimension ld >= m.
    void (*syr_upper)(double w, const double* v, std::size_t m, double* g,
                      std::size_t ld);
    const char* name;
};

const Ops& scalar_ops();

// Currently active backend. Resolution order: MIXREG_KERNELS environment
// variable ("scalar", "avx2", "neon"), then the best variant the CPU
// supports, then scalar.
const Ops& active();
std::string_view active_name();

// Force a backend by name; returns false (and leaves the active backend
// unchanged) if it is unknown or unsupported on this CPU.
bool set_backend(std::string_view name);

// Variants compiled into this binary and usable on this CPU (always
// includes "scalar").
std::size_t available_backends(const Ops** out, std::size_t cap);

inline double dot(const double* a, const double* b, std::size_t n) {
    return active().dot(a, b, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
    active().axpy(alpha, x, y, n);
}
inline void syr_upper(double w, const double* v, std::size_t m, double* g,
                      std::size_t ld) {
    active().syr_upper(w, v, m, g, ld);
}

}  // namespace mixreg::kernels
