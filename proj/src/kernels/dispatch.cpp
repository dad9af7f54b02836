// SPDX-License-Identifier: Apache-2.0

#include "mixreg/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace mixreg::kernels {

const Ops* avx2_ops();  // null when not compiled in / unsupported arch
const Ops* neon_ops();

namespace {

bool cpu_supports(const Ops* ops) {
    if (!ops) return false;
#if defined(__x86_64__) || defined(_M_X64)
    if (std::strcmp(ops->name, "avx2") == 0)
        return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#endif
    return true;  // scalar and baseline-ISA variants
}

const Ops* find_backend(std::string_view name) {
    if (name == "scalar") return &scalar_ops();
    const Ops* candidates[] = {avx2_ops(), neon_ops()};
    for (const Ops* c : candidates) {
        if (c && name == c->name && cpu_supports(c)) return c;
    }
    return nullptr;
}

const Ops* pick_default() {
    if (const char* env = std::getenv("MIXREG_KERNELS")) {
        if (const Ops* forced = find_backend(env)) return forced;
    }
    if (cpu_supports(avx2_ops())) return avx2_ops();
    if (cpu_supports(neon_ops())) return neon_ops();
    return &scalar_ops();
}

std::atomic<const Ops*>& active_slot() {
    static std::atomic<const Ops*> slot{pick_default()};
    return slot;
}

}  // namespace

const Ops& active() { return *active_slot().load(std::memory_order_relaxed); }

std::string_view active_name() { return active().name; }

bool set_backend(std::string_view name) {
    const Ops* ops = find_backend(name);
    if (!ops) return false;
    active_slot().store(ops, std::memory_order_relaxed);
    return true;
}

std::size_t available_backends(const Ops** out, std::size_t cap) {
    std::size_t n = 0;
    const Ops* candidates[] = {&scalar_ops(), avx2_ops(), neon_ops()};
    for (const Ops* c : candidates) {
        if (c && cpu_supports(c) && n < cap) out[n++] = c;
    }
    return n;
}

}  // namespace mixreg::kernels
