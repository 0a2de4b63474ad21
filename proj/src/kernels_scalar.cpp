// SPDX-License-Identifier: Apache-2.0
//
// Reference kernels. Plain loops, fixed accumulation order; the baseline
// every SIMD variant is checked against.

#include "ropim/kernels.hpp"

#include <cmath>
#include <cstring>

namespace ropim::kernels {
namespace {

template <typename T>
void gemm_nn(size_t M, size_t N, size_t K, const T* A, const T* B, T* C, bool acc) {
    if (!acc) std::memset(C, 0, M * N * sizeof(T));
    for (size_t i = 0; i < M; ++i) {
        T* c = C + i * N;
        for (size_t k = 0; k < K; ++k) {
            const T a = A[i * K + k];
            const T* b = B + k * N;
            for (size_t j = 0; j < N; ++j) c[j] += a * b[j];
        }
    }
}

template <typename T>
void gemm_nt(size_t M, size_t N, size_t K, const T* A, const T* B, T* C, bool acc) {
    for (size_t i = 0; i < M; ++i) {
        const T* a = A + i * K;
        T* c = C + i * N;
        for (size_t j = 0; j < N; ++j) {
            const T* b = B + j * K;
            T s = 0;
            for (size_t k = 0; k < K; ++k) s += a[k] * b[k];
            c[j] = acc ? c[j] + s : s;
        }
    }
}

template <typename T>
void gemm_tn(size_t M, size_t N, size_t K, const T* A, const T* B, T* C, bool acc) {
    if (!acc) std::memset(C, 0, M * N * sizeof(T));
    for (size_t k = 0; k < K; ++k) {
        const T* a = A + k * M;
        const T* b = B + k * N;
        for (size_t i = 0; i < M; ++i) {
            const T ai = a[i];
            T* c = C + i * N;
            for (size_t j = 0; j < N; ++j) c[j] += ai * b[j];
        }
    }
}

template <typename T>
void axpy(size_t n, T a, const T* x, T* y) {
    for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void scale(size_t n, T a, const T* x, T* y) {
    for (size_t i = 0; i < n; ++i) y[i] = a * x[i];
}

template <typename T>
void vadd(size_t n, const T* a, const T* b, T* y) {
    for (size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <typename T>
void vsub(size_t n, const T* a, const T* b, T* y) {
    for (size_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

template <typename T>
void vmul(size_t n, const T* a, const T* b, T* y) {
    for (size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <typename T>
T abs_sum(size_t n, const T* x) {
    T s = 0;
    for (size_t i = 0; i < n; ++i) s += std::abs(x[i]);
    return s;
}

template <typename T>
void sign_axpy(size_t n, T a, const T* x, T* y) {
    for (size_t i = 0; i < n; ++i) {
        if (x[i] > T(0))
            y[i] += a;
        else if (x[i] < T(0))
            y[i] -= a;
    }
}

template <typename T>
void adamw(size_t n, T* p, const T* g, T* m, T* v, T lr, T beta1, T beta2, T wd, T eps, T bc1,
           T bc2) {
    for (size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
        v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
        const T mhat = m[i] / bc1;
        const T vhat = v[i] / bc2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p[i]);
    }
}

}  // namespace

namespace detail {

template <typename T>
Table<T> scalar_table() {
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

template Table<float> scalar_table<float>();
template Table<double> scalar_table<double>();

}  // namespace detail
}  // namespace ropim::kernels
