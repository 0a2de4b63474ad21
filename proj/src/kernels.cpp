// SPDX-License-Identifier: Apache-2.0

#include "ropim/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace ropim::kernels {

namespace detail {

bool avx2_cpu() {
#if (defined(__x86_64__) || defined(__i386__)) && defined(__GNUC__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

}  // namespace detail

namespace {

struct Dispatch {
    Table<float> f = detail::scalar_table<float>();
    Table<double> d = detail::scalar_table<double>();
    Isa isa = Isa::Scalar;

    void apply(Isa which) {
        if (which == Isa::Avx2) {
            f = detail::avx2_table<float>();
            d = detail::avx2_table<double>();
        } else {
            f = detail::scalar_table<float>();
            d = detail::scalar_table<double>();
        }
        isa = which;
    }
};

// Thread-safe first-use initialization; select() reconfigures afterwards
// (single-threaded callers only: program startup and tests).
Dispatch& dispatch() {
    static Dispatch d = [] {
        Dispatch init;
        init.apply(detect());
        return init;
    }();
    return d;
}

}  // namespace

const char* isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

bool supported(Isa isa) {
    if (isa == Isa::Scalar) return true;
    return detail::avx2_built() && detail::avx2_cpu();
}

Isa detect() {
    if (const char* env = std::getenv("ROPIM_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return Isa::Scalar;
        if (std::strcmp(env, "avx2") == 0 && supported(Isa::Avx2)) return Isa::Avx2;
    }
    return supported(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar;
}

void select(Isa isa) {
    if (!supported(isa)) throw std::runtime_error("kernel ISA not supported on this CPU/build");
    dispatch().apply(isa);
}

Isa active() { return dispatch().isa; }

template <>
const Table<float>& table<float>() {
    return dispatch().f;
}

template <>
const Table<double>& table<double>() {
    return dispatch().d;
}

}  // namespace ropim::kernels
