// SPDX-License-Identifier: Apache-2.0
//
// The scalar table is the reference; the AVX2 table must agree on every
// operation (tolerances absorb fused-multiply-add reassociation).

#include <doctest.h>

#include <cmath>
#include <vector>

#include "ropim/kernels.hpp"
#include "ropim/rng.hpp"

using namespace ropim;
namespace k = ropim::kernels;

namespace {

template <typename T>
std::vector<T> random_vec(Rng& rng, size_t n, double lo = -2.0, double hi = 2.0) {
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(lo + (hi - lo) * rng.uniform01());
    return v;
}

template <typename T>
T rel_tol() {
    return std::is_same_v<T, float> ? T(2e-5) : T(1e-12);
}

template <typename T>
void check_close(const std::vector<T>& a, const std::vector<T>& b) {
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(double(a[i])), std::abs(double(b[i])), 1.0});
        CHECK(std::abs(double(a[i]) - double(b[i])) <= double(rel_tol<T>()) * scale);
    }
}

struct IsaGuard {
    k::Isa saved = k::active();
    ~IsaGuard() { k::select(saved); }
};

template <typename T>
void gemm_equivalence_case(size_t M, size_t N, size_t K, uint64_t seed) {
    Rng rng(seed);
    const auto A = random_vec<T>(rng, M * K);
    const auto B = random_vec<T>(rng, K * N);
    const auto Bt = random_vec<T>(rng, N * K);
    const auto At = random_vec<T>(rng, K * M);
    const auto C0 = random_vec<T>(rng, M * N);

    auto run = [&](k::Isa isa) {
        k::select(isa);
        const auto& t = k::table<T>();
        std::vector<std::vector<T>> out;
        std::vector<T> c;
        c = C0;
        t.gemm_nn(M, N, K, A.data(), B.data(), c.data(), false);
        out.push_back(c);
        c = C0;
        t.gemm_nn(M, N, K, A.data(), B.data(), c.data(), true);
        out.push_back(c);
        c = C0;
        t.gemm_nt(M, N, K, A.data(), Bt.data(), c.data(), false);
        out.push_back(c);
        c = C0;
        t.gemm_nt(M, N, K, A.data(), Bt.data(), c.data(), true);
        out.push_back(c);
        c = C0;
        t.gemm_tn(M, N, K, At.data(), B.data(), c.data(), false);
        out.push_back(c);
        c = C0;
        t.gemm_tn(M, N, K, At.data(), B.data(), c.data(), true);
        out.push_back(c);
        return out;
    };

    const auto scalar = run(k::Isa::Scalar);
    const auto simd = run(k::Isa::Avx2);
    for (size_t i = 0; i < scalar.size(); ++i) check_close(scalar[i], simd[i]);
}

}  // namespace

TEST_SUITE("kernels") {
    TEST_CASE("gemm_nn matches a hand-rolled triple loop") {
        Rng rng(100);
        const size_t M = 7, N = 13, K = 9;
        const auto A = random_vec<double>(rng, M * K);
        const auto B = random_vec<double>(rng, K * N);
        std::vector<double> expect(M * N, 0.0);
        for (size_t i = 0; i < M; ++i)
            for (size_t j = 0; j < N; ++j)
                for (size_t kk = 0; kk < K; ++kk) expect[i * N + j] += A[i * K + kk] * B[kk * N + j];
        std::vector<double> got(M * N);
        k::table<double>().gemm_nn(M, N, K, A.data(), B.data(), got.data(), false);
        check_close(expect, got);
    }

    TEST_CASE("transpose variants agree with explicit transposition") {
        Rng rng(101);
        const size_t M = 5, N = 6, K = 8;
        const auto A = random_vec<double>(rng, M * K);
        const auto B = random_vec<double>(rng, K * N);
        // Bt[j*K+k] = B[k*N+j]; nt(A, Bt) must equal nn(A, B)
        std::vector<double> Bt(N * K);
        for (size_t kk = 0; kk < K; ++kk)
            for (size_t j = 0; j < N; ++j) Bt[j * K + kk] = B[kk * N + j];
        std::vector<double> via_nn(M * N), via_nt(M * N);
        k::table<double>().gemm_nn(M, N, K, A.data(), B.data(), via_nn.data(), false);
        k::table<double>().gemm_nt(M, N, K, A.data(), Bt.data(), via_nt.data(), false);
        check_close(via_nn, via_nt);

        // At[k*M+i] = A[i*K+k]; tn(At, B) must equal nn(A, B)
        std::vector<double> At(K * M);
        for (size_t i = 0; i < M; ++i)
            for (size_t kk = 0; kk < K; ++kk) At[kk * M + i] = A[i * K + kk];
        std::vector<double> via_tn(M * N);
        k::table<double>().gemm_tn(M, N, K, At.data(), B.data(), via_tn.data(), false);
        check_close(via_nn, via_tn);
    }

    TEST_CASE("scalar and simd tables agree" * doctest::skip(!k::supported(k::Isa::Avx2))) {
        IsaGuard guard;

        SUBCASE("gemm shapes, both precisions") {
            for (uint64_t s = 0; s < 4; ++s) {
                gemm_equivalence_case<double>(1 + s, 5 + 3 * s, 2 + 7 * s, 200 + s);
                gemm_equivalence_case<float>(3 + 2 * s, 1 + 9 * s, 8 + s, 300 + s);
            }
        }

        SUBCASE("elementwise and reductions") {
            Rng rng(400);
            // sizes straddle the vector width and its tail
            for (const size_t n : {1u, 3u, 8u, 15u, 64u, 1001u}) {
                auto x = random_vec<double>(rng, n);
                auto y = random_vec<double>(rng, n);
                auto run = [&](k::Isa isa) {
                    k::select(isa);
                    const auto& t = k::table<double>();
                    std::vector<std::vector<double>> out;
                    std::vector<double> r;
                    r = y;
                    t.axpy(n, 1.7, x.data(), r.data());
                    out.push_back(r);
                    r.assign(n, 0);
                    t.scale(n, -0.3, x.data(), r.data());
                    out.push_back(r);
                    r.assign(n, 0);
                    t.vadd(n, x.data(), y.data(), r.data());
                    out.push_back(r);
                    r.assign(n, 0);
                    t.vsub(n, x.data(), y.data(), r.data());
                    out.push_back(r);
                    r.assign(n, 0);
                    t.vmul(n, x.data(), y.data(), r.data());
                    out.push_back(r);
                    r = y;
                    t.sign_axpy(n, 0.25, x.data(), r.data());
                    out.push_back(r);
                    out.push_back({t.abs_sum(n, x.data())});
                    return out;
                };
                const auto scalar = run(k::Isa::Scalar);
                const auto simd = run(k::Isa::Avx2);
                for (size_t i = 0; i < scalar.size(); ++i) check_close(scalar[i], simd[i]);
            }
        }

        SUBCASE("adamw update") {
            Rng rng(500);
            const size_t n = 67;
            const auto g = random_vec<double>(rng, n);
            const auto p0 = random_vec<double>(rng, n);
            auto run = [&](k::Isa isa) {
                k::select(isa);
                std::vector<double> p = p0, m(n, 0.0), v(n, 0.0);
                for (int step = 1; step <= 3; ++step) {
                    const double bc1 = 1.0 - std::pow(0.9, step);
                    const double bc2 = 1.0 - std::pow(0.95, step);
                    k::table<double>().adamw(n, p.data(), g.data(), m.data(), v.data(), 0.01, 0.9,
                                             0.95, 0.05, 1e-8, bc1, bc2);
                }
                return p;
            };
            check_close(run(k::Isa::Scalar), run(k::Isa::Avx2));
        }
    }

    TEST_CASE("sign convention: zero input moves nothing") {
        std::vector<double> x = {0.0, -0.0, 1.0, -1.0};
        std::vector<double> y(4, 5.0);
        k::table<double>().sign_axpy(4, 2.0, x.data(), y.data());
        CHECK(y[0] == 5.0);
        CHECK(y[1] == 5.0);
        CHECK(y[2] == 7.0);
        CHECK(y[3] == 3.0);
    }
}
