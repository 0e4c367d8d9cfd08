#pragma once

// Small accumulating matmul kernels used by the conv/linear ops. Loop orders
// are chosen so the innermost loop runs over contiguous memory and
// auto-vectorizes. All kernels do C += ..., callers zero C when needed.

#include <cstdint>

namespace qscreen::detail {

// C[m,n] += A[m,k] * B[k,n]
template <class T>
inline void gemm_nn_acc(const T* __restrict__ a, const T* __restrict__ b, T* __restrict__ c,
                        int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,k] += A[m,n] * B[k,n]^T
template <class T>
inline void gemm_nt_acc(const T* __restrict__ a, const T* __restrict__ b, T* __restrict__ c,
                        int64_t m, int64_t n, int64_t k) {
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    T* crow = c + i * k;
    for (int64_t j = 0; j < k; ++j) {
      const T* brow = b + j * n;
      T acc = T(0);
      for (int64_t p = 0; p < n; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C[m,n] += A[k,m]^T * B[k,n]
template <class T>
inline void gemm_tn_acc(const T* __restrict__ a, const T* __restrict__ b, T* __restrict__ c,
                        int64_t k, int64_t m, int64_t n) {
  for (int64_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (int64_t i = 0; i < m; ++i) {
      const T av = arow[i];
      if (av == T(0)) continue;
      T* crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace qscreen::detail
