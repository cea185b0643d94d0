#pragma once

#include <cmath>
#include <cstddef>

// Scalar reference loops, templated so the f64 tensor path (used by the
// gradient-check tests) runs the exact same algorithms as the f32 table.
// These loops define the numeric contract: any SIMD variant must reproduce
// them bit-for-bit. Keep the operation order stable - multiply then add,
// ascending j - and do not reassociate.

namespace tbqn::kernels::ref {

template <class T>
void gemm_nn_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<std::size_t>(i) * k;
    T* crow = c + static_cast<std::size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      const T* brow = b + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
void add(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <class T>
void sub(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <class T>
void mul(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <class T>
void madd(const T* a, const T* b, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

template <class T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void scale(const T* x, T s, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = s * x[i];
}

template <class T>
void relu(const T* x, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_bwd(const T* x, const T* dy, T* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > T(0)) dx[i] += dy[i];
  }
}

template <class T>
void adam(T* w, const T* g, T* m, T* v, std::size_t n, T lr, T beta1, T beta2,
          T eps, T inv_bc1, T inv_bc2) {
  const T one_m_b1 = T(1) - beta1;
  const T one_m_b2 = T(1) - beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const T gi = g[i];
    m[i] = beta1 * m[i] + one_m_b1 * gi;
    v[i] = beta2 * v[i] + one_m_b2 * (gi * gi);
    const T mh = m[i] * inv_bc1;
    const T vh = v[i] * inv_bc2;
    w[i] -= (lr * mh) / (std::sqrt(vh) + eps);
  }
}

}  // namespace tbqn::kernels::ref
