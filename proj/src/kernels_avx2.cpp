// SPDX-License-Identifier: Apache-2.0
//
// AVX2/FMA kernels. This translation unit is the only one built with
// -mavx2 -mfma; nothing here runs unless detect()/select() chose Avx2 on a
// CPU that reports the feature bits.

#include "ropim/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#define ROPIM_AVX2_BUILD 1
#include <immintrin.h>
#else
#define ROPIM_AVX2_BUILD 0
#endif

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace ropim::kernels {

#if ROPIM_AVX2_BUILD

namespace {

template <typename T>
struct VecOf;
template <>
struct VecOf<float> {
    using type = __m256;
    static constexpr size_t lanes = 8;
};
template <>
struct VecOf<double> {
    using type = __m256d;
    static constexpr size_t lanes = 4;
};

inline __m256 vload(const float* p) { return _mm256_loadu_ps(p); }
inline __m256d vload(const double* p) { return _mm256_loadu_pd(p); }
inline void vstore(float* p, __m256 v) { _mm256_storeu_ps(p, v); }
inline void vstore(double* p, __m256d v) { _mm256_storeu_pd(p, v); }
inline __m256 vset1(float x) { return _mm256_set1_ps(x); }
inline __m256d vset1(double x) { return _mm256_set1_pd(x); }
inline __m256 vzero(float) { return _mm256_setzero_ps(); }
inline __m256d vzero(double) { return _mm256_setzero_pd(); }
inline __m256 vadd_(__m256 a, __m256 b) { return _mm256_add_ps(a, b); }
inline __m256d vadd_(__m256d a, __m256d b) { return _mm256_add_pd(a, b); }
inline __m256 vsub_(__m256 a, __m256 b) { return _mm256_sub_ps(a, b); }
inline __m256d vsub_(__m256d a, __m256d b) { return _mm256_sub_pd(a, b); }
inline __m256 vmul_(__m256 a, __m256 b) { return _mm256_mul_ps(a, b); }
inline __m256d vmul_(__m256d a, __m256d b) { return _mm256_mul_pd(a, b); }
inline __m256 vdiv_(__m256 a, __m256 b) { return _mm256_div_ps(a, b); }
inline __m256d vdiv_(__m256d a, __m256d b) { return _mm256_div_pd(a, b); }
inline __m256 vfma_(__m256 a, __m256 b, __m256 c) { return _mm256_fmadd_ps(a, b, c); }
inline __m256d vfma_(__m256d a, __m256d b, __m256d c) { return _mm256_fmadd_pd(a, b, c); }
inline __m256 vsqrt_(__m256 a) { return _mm256_sqrt_ps(a); }
inline __m256d vsqrt_(__m256d a) { return _mm256_sqrt_pd(a); }
inline __m256 vabs_(__m256 a) { return _mm256_andnot_ps(_mm256_set1_ps(-0.0f), a); }
inline __m256d vabs_(__m256d a) { return _mm256_andnot_pd(_mm256_set1_pd(-0.0), a); }
inline __m256 vgt_(__m256 a, __m256 b) { return _mm256_cmp_ps(a, b, _CMP_GT_OQ); }
inline __m256d vgt_(__m256d a, __m256d b) { return _mm256_cmp_pd(a, b, _CMP_GT_OQ); }
inline __m256 vlt_(__m256 a, __m256 b) { return _mm256_cmp_ps(a, b, _CMP_LT_OQ); }
inline __m256d vlt_(__m256d a, __m256d b) { return _mm256_cmp_pd(a, b, _CMP_LT_OQ); }
inline __m256 vand_(__m256 a, __m256 b) { return _mm256_and_ps(a, b); }
inline __m256d vand_(__m256d a, __m256d b) { return _mm256_and_pd(a, b); }

inline float hsum(__m256 v) {
    alignas(32) float t[8];
    _mm256_store_ps(t, v);
    return ((t[0] + t[1]) + (t[2] + t[3])) + ((t[4] + t[5]) + (t[6] + t[7]));
}
inline double hsum(__m256d v) {
    alignas(32) double t[4];
    _mm256_store_pd(t, v);
    return (t[0] + t[1]) + (t[2] + t[3]);
}

template <typename T>
void gemm_nn(size_t M, size_t N, size_t K, const T* A, const T* B, T* C, bool acc) {
    constexpr size_t L = VecOf<T>::lanes;
    if (!acc) std::memset(C, 0, M * N * sizeof(T));
    const size_t nv = N - N % L;
    for (size_t i = 0; i < M; ++i) {
        T* c = C + i * N;
        for (size_t k = 0; k < K; ++k) {
            const T a = A[i * K + k];
            const T* b = B + k * N;
            const auto av = vset1(a);
            size_t j = 0;
            for (; j < nv; j += L) vstore(c + j, vfma_(av, vload(b + j), vload(c + j)));
            for (; j < N; ++j) c[j] += a * b[j];
        }
    }
}

template <typename T>
void gemm_nt(size_t M, size_t N, size_t K, const T* A, const T* B, T* C, bool acc) {
    constexpr size_t L = VecOf<T>::lanes;
    const size_t kv = K - K % L;
    for (size_t i = 0; i < M; ++i) {
        const T* a = A + i * K;
        T* c = C + i * N;
        for (size_t j = 0; j < N; ++j) {
            const T* b = B + j * K;
            auto accv = vzero(T(0));
            size_t k = 0;
            for (; k < kv; k += L) accv = vfma_(vload(a + k), vload(b + k), accv);
            T s = hsum(accv);
            for (; k < K; ++k) s += a[k] * b[k];
            c[j] = acc ? c[j] + s : s;
        }
    }
}

template <typename T>
void gemm_tn(size_t M, size_t N, size_t K, const T* A, const T* B, T* C, bool acc) {
    constexpr size_t L = VecOf<T>::lanes;
    if (!acc) std::memset(C, 0, M * N * sizeof(T));
    const size_t nv = N - N % L;
    for (size_t k = 0; k < K; ++k) {
        const T* a = A + k * M;
        const T* b = B + k * N;
        for (size_t i = 0; i < M; ++i) {
            const T ai = a[i];
            const auto av = vset1(ai);
            T* c = C + i * N;
            size_t j = 0;
            for (; j < nv; j += L) vstore(c + j, vfma_(av, vload(b + j), vload(c + j)));
            for (; j < N; ++j) c[j] += ai * b[j];
        }
    }
}

template <typename T>
void axpy(size_t n, T a, const T* x, T* y) {
    constexpr size_t L = VecOf<T>::lanes;
    const auto av = vset1(a);
    size_t i = 0;
    for (; i + L <= n; i += L) vstore(y + i, vfma_(av, vload(x + i), vload(y + i)));
    for (; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void scale(size_t n, T a, const T* x, T* y) {
    constexpr size_t L = VecOf<T>::lanes;
    const auto av = vset1(a);
    size_t i = 0;
    for (; i + L <= n; i += L) vstore(y + i, vmul_(av, vload(x + i)));
    for (; i < n; ++i) y[i] = a * x[i];
}

template <typename T>
void vadd(size_t n, const T* a, const T* b, T* y) {
    constexpr size_t L = VecOf<T>::lanes;
    size_t i = 0;
    for (; i + L <= n; i += L) vstore(y + i, vadd_(vload(a + i), vload(b + i)));
    for (; i < n; ++i) y[i] = a[i] + b[i];
}

template <typename T>
void vsub(size_t n, const T* a, const T* b, T* y) {
    constexpr size_t L = VecOf<T>::lanes;
    size_t i = 0;
    for (; i + L <= n; i += L) vstore(y + i, vsub_(vload(a + i), vload(b + i)));
    for (; i < n; ++i) y[i] = a[i] - b[i];
}

template <typename T>
void vmul(size_t n, const T* a, const T* b, T* y) {
    constexpr size_t L = VecOf<T>::lanes;
    size_t i = 0;
    for (; i + L <= n; i += L) vstore(y + i, vmul_(vload(a + i), vload(b + i)));
    for (; i < n; ++i) y[i] = a[i] * b[i];
}

template <typename T>
T abs_sum(size_t n, const T* x) {
    constexpr size_t L = VecOf<T>::lanes;
    auto accv = vzero(T(0));
    size_t i = 0;
    for (; i + L <= n; i += L) accv = vadd_(accv, vabs_(vload(x + i)));
    T s = hsum(accv);
    for (; i < n; ++i) s += std::abs(x[i]);
    return s;
}

template <typename T>
void sign_axpy(size_t n, T a, const T* x, T* y) {
    constexpr size_t L = VecOf<T>::lanes;
    const auto av = vset1(a);
    const auto z = vzero(T(0));
    size_t i = 0;
    for (; i + L <= n; i += L) {
        const auto xv = vload(x + i);
        const auto pos = vand_(vgt_(xv, z), av);
        const auto neg = vand_(vlt_(xv, z), av);
        vstore(y + i, vsub_(vadd_(vload(y + i), pos), neg));
    }
    for (; i < n; ++i) {
        if (x[i] > T(0))
            y[i] += a;
        else if (x[i] < T(0))
            y[i] -= a;
    }
}

template <typename T>
void adamw(size_t n, T* p, const T* g, T* m, T* v, T lr, T beta1, T beta2, T wd, T eps, T bc1,
           T bc2) {
    constexpr size_t L = VecOf<T>::lanes;
    const auto b1 = vset1(beta1), ob1 = vset1(T(1) - beta1);
    const auto b2 = vset1(beta2), ob2 = vset1(T(1) - beta2);
    const auto lrv = vset1(lr), wdv = vset1(wd), epsv = vset1(eps);
    const auto ibc1 = vset1(T(1) / bc1), ibc2 = vset1(T(1) / bc2);
    size_t i = 0;
    for (; i + L <= n; i += L) {
        const auto gv = vload(g + i);
        auto mv = vfma_(b1, vload(m + i), vmul_(ob1, gv));
        auto vv = vfma_(b2, vload(v + i), vmul_(ob2, vmul_(gv, gv)));
        vstore(m + i, mv);
        vstore(v + i, vv);
        const auto mhat = vmul_(mv, ibc1);
        const auto vhat = vmul_(vv, ibc2);
        const auto step = vdiv_(mhat, vadd_(vsqrt_(vhat), epsv));
        auto pv = vload(p + i);
        pv = vsub_(pv, vmul_(lrv, vfma_(wdv, pv, step)));
        vstore(p + i, pv);
    }
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
        v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
        const T mhat = m[i] * (T(1) / bc1);
        const T vhat = v[i] * (T(1) / bc2);
        p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p[i]);
    }
}

}  // namespace

namespace detail {

template <typename T>
Table<T> avx2_table() {
    Table<T> t;
    t.gemm_nn = &gemm_nn<T>;
    t.gemm_nt = &gemm_nt<T>;
    t.gemm_tn = &gemm_tn<T>;
    t.axpy = &axpy<T>;
    t.scale = &scale<T>;
    t.vadd = &vadd<T>;
    t.vsub = &vsub<T>;
    t.vmul = &vmul<T>;
    t.abs_sum = &abs_sum<T>;
    t.sign_axpy = &sign_axpy<T>;
    t.adamw = &adamw<T>;
    return t;
}

template Table<float> avx2_table<float>();
template Table<double> avx2_table<double>();

bool avx2_built() { return true; }

}  // namespace detail

#else  // !ROPIM_AVX2_BUILD

namespace detail {

template <typename T>
Table<T> avx2_table() {
    throw std::runtime_error("AVX2 kernels not built on this target");
}

template Table<float> avx2_table<float>();
template Table<double> avx2_table<double>();

bool avx2_built() { return false; }

}  // namespace detail

#endif

}  // namespace ropim::kernels
