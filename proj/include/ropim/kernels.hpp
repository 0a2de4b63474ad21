// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

// Data-parallel inner loops behind every hot path: dense matrix products,
// elementwise vector arithmetic, reductions, and the optimizer update.
// Each operation has a scalar reference implementation and an AVX2/FMA
// variant; the active set is chosen once at runtime and the two are held
// equivalent by tests. Results are deterministic for a fixed selection.

namespace ropim::kernels {

enum class Isa { Scalar, Avx2 };

const char* isa_name(Isa isa);

// Best ISA the running CPU supports; honors ROPIM_KERNELS=scalar|avx2.
Isa detect();
bool supported(Isa isa);
void select(Isa isa);  // throws std::runtime_error if unsupported
Isa active();

// All matrices are contiguous row-major. `acc` accumulates into C instead
// of overwriting it.
template <typename T>
struct Table {
    // C[MxN] = A[MxK] * B[KxN]
    void (*gemm_nn)(size_t M, size_t N, size_t K, const T* A, const T* B, T* C, bool acc);
    // C[MxN] = A[MxK] * B[NxK]^T
    void (*gemm_nt)(size_t M, size_t N, size_t K, const T* A, const T* B, T* C, bool acc);
    // C[MxN] = A[KxM]^T * B[KxN]
    void (*gemm_tn)(size_t M, size_t N, size_t K, const T* A, const T* B, T* C, bool acc);

    void (*axpy)(size_t n, T a, const T* x, T* y);         // y += a*x
    void (*scale)(size_t n, T a, const T* x, T* y);        // y  = a*x
    void (*vadd)(size_t n, const T* a, const T* b, T* y);  // y  = a+b
    void (*vsub)(size_t n, const T* a, const T* b, T* y);  // y  = a-b
    void (*vmul)(size_t n, const T* a, const T* b, T* y);  // y  = a*b
    T (*abs_sum)(size_t n, const T* x);
    void (*sign_axpy)(size_t n, T a, const T* x, T* y);  // y += a*sign(x), sign(0)=0

    // Decoupled weight decay Adam step for one parameter array.
    // bc1/bc2 are the bias corrections 1-beta1^t and 1-beta2^t.
    void (*adamw)(size_t n, T* p, const T* g, T* m, T* v, T lr, T beta1, T beta2, T wd, T eps,
                  T bc1, T bc2);
};

template <typename T>
const Table<T>& table();

namespace detail {
template <typename T>
Table<T> scalar_table();
template <typename T>
Table<T> avx2_table();
bool avx2_built();
bool avx2_cpu();
}  // namespace detail

}  // namespace ropim::kernels
