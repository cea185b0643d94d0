// AVX2 variants. Compiled with -mavx2 -ffp-contract=off and selected at
// runtime, so the generic build still runs on machines without AVX2.
//
// Bit-exactness contract: vectorization is across independent output
// elements only. Each element sees the same operation sequence as the scalar
// reference (multiply, then add, ascending k; no FMA), sqrt and division are
// IEEE-exact, and masked updates use blends so untouched lanes keep their
// exact bits.

#if defined(__AVX2__)

#include <immintrin.h>

#include <cmath>

#include "tbqn/kernels.h"

namespace tbqn::kernels {

namespace {

// One row of C, one 64-wide block of columns: 8 register accumulators.
inline void gemm_row_block64(const float* arow, const float* b, float* crow,
                             int k, int n, int jb) {
  __m256 acc0 = _mm256_loadu_ps(crow + jb);
  __m256 acc1 = _mm256_loadu_ps(crow + jb + 8);
  __m256 acc2 = _mm256_loadu_ps(crow + jb + 16);
  __m256 acc3 = _mm256_loadu_ps(crow + jb + 24);
  __m256 acc4 = _mm256_loadu_ps(crow + jb + 32);
  __m256 acc5 = _mm256_loadu_ps(crow + jb + 40);
  __m256 acc6 = _mm256_loadu_ps(crow + jb + 48);
  __m256 acc7 = _mm256_loadu_ps(crow + jb + 56);
  for (int kk = 0; kk < k; ++kk) {
    const __m256 av = _mm256_set1_ps(arow[kk]);
    const float* brow = b + static_cast<std::size_t>(kk) * n + jb;
    acc0 = _mm256_add_ps(acc0, _mm256_mul_ps(av, _mm256_loadu_ps(brow)));
    acc1 = _mm256_add_ps(acc1, _mm256_mul_ps(av, _mm256_loadu_ps(brow + 8)));
    acc2 = _mm256_add_ps(acc2, _mm256_mul_ps(av, _mm256_loadu_ps(brow + 16)));
    acc3 = _mm256_add_ps(acc3, _mm256_mul_ps(av, _mm256_loadu_ps(brow + 24)));
    acc4 = _mm256_add_ps(acc4, _mm256_mul_ps(av, _mm256_loadu_ps(brow + 32)));
    acc5 = _mm256_add_ps(acc5, _mm256_mul_ps(av, _mm256_loadu_ps(brow + 40)));
    acc6 = _mm256_add_ps(acc6, _mm256_mul_ps(av, _mm256_loadu_ps(brow + 48)));
    acc7 = _mm256_add_ps(acc7, _mm256_mul_ps(av, _mm256_loadu_ps(brow + 56)));
  }
  _mm256_storeu_ps(crow + jb, acc0);
  _mm256_storeu_ps(crow + jb + 8, acc1);
  _mm256_storeu_ps(crow + jb + 16, acc2);
  _mm256_storeu_ps(crow + jb + 24, acc3);
  _mm256_storeu_ps(crow + jb + 32, acc4);
  _mm256_storeu_ps(crow + jb + 40, acc5);
  _mm256_storeu_ps(crow + jb + 48, acc6);
  _mm256_storeu_ps(crow + jb + 56, acc7);
}

void gemm_nn_acc_avx2(const float* a, const float* b, float* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<std::size_t>(i) * k;
    float* crow = c + static_cast<std::size_t>(i) * n;
    int jb = 0;
    for (; jb + 64 <= n; jb += 64) gemm_row_block64(arow, b, crow, k, n, jb);
    for (; jb + 8 <= n; jb += 8) {
      __m256 acc = _mm256_loadu_ps(crow + jb);
      for (int kk = 0; kk < k; ++kk) {
        const __m256 av = _mm256_set1_ps(arow[kk]);
        const __m256 bv = _mm256_loadu_ps(b + static_cast<std::size_t>(kk) * n + jb);
        acc = _mm256_add_ps(acc, _mm256_mul_ps(av, bv));
      }
      _mm256_storeu_ps(crow + jb, acc);
    }
    for (int j = jb; j < n; ++j) {
      float s = crow[j];
      for (int kk = 0; kk < k; ++kk) s += arow[kk] * b[static_cast<std::size_t>(kk) * n + j];
      crow[j] = s;
    }
  }
}

void add_avx2(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_avx2(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_avx2(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void madd_avx2(const float* a, const float* b, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 prod = _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), prod));
  }
  for (; i < n; ++i) y[i] += a[i] * b[i];
}

void axpy_avx2(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 prod = _mm256_mul_ps(av, _mm256_loadu_ps(x + i));
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), prod));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(const float* x, float s, float* out, std::size_t n) {
  const __m256 sv = _mm256_set1_ps(s);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(sv, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) out[i] = s * x[i];
}

void relu_avx2(const float* x, float* out, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 xv = _mm256_loadu_ps(x + i);
    const __m256 mask = _mm256_cmp_ps(xv, zero, _CMP_GT_OQ);
    _mm256_storeu_ps(out + i, _mm256_and_ps(mask, xv));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_avx2(const float* x, const float* dy, float* dx, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 xv = _mm256_loadu_ps(x + i);
    const __m256 mask = _mm256_cmp_ps(xv, zero, _CMP_GT_OQ);
    const __m256 dxv = _mm256_loadu_ps(dx + i);
    const __m256 summed = _mm256_add_ps(dxv, _mm256_loadu_ps(dy + i));
    // blend keeps masked-off lanes bitwise untouched, like the scalar branch
    _mm256_storeu_ps(dx + i, _mm256_blendv_ps(dxv, summed, mask));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0f) dx[i] += dy[i];
  }
}

void adam_avx2(float* w, const float* g, float* m, float* v, std::size_t n,
               float lr, float beta1, float beta2, float eps, float inv_bc1,
               float inv_bc2) {
  const __m256 b1 = _mm256_set1_ps(beta1);
  const __m256 b2 = _mm256_set1_ps(beta2);
  const __m256 omb1 = _mm256_set1_ps(1.0f - beta1);
  const __m256 omb2 = _mm256_set1_ps(1.0f - beta2);
  const __m256 lrv = _mm256_set1_ps(lr);
  const __m256 epsv = _mm256_set1_ps(eps);
  const __m256 ibc1 = _mm256_set1_ps(inv_bc1);
  const __m256 ibc2 = _mm256_set1_ps(inv_bc2);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 gv = _mm256_loadu_ps(g + i);
    __m256 mv = _mm256_loadu_ps(m + i);
    __m256 vv = _mm256_loadu_ps(v + i);
    mv = _mm256_add_ps(_mm256_mul_ps(b1, mv), _mm256_mul_ps(omb1, gv));
    vv = _mm256_add_ps(_mm256_mul_ps(b2, vv),
                       _mm256_mul_ps(omb2, _mm256_mul_ps(gv, gv)));
    _mm256_storeu_ps(m + i, mv);
    _mm256_storeu_ps(v + i, vv);
    const __m256 mh = _mm256_mul_ps(mv, ibc1);
    const __m256 vh = _mm256_mul_ps(vv, ibc2);
    const __m256 den = _mm256_add_ps(_mm256_sqrt_ps(vh), epsv);
    const __m256 upd = _mm256_div_ps(_mm256_mul_ps(lrv, mh), den);
    _mm256_storeu_ps(w + i, _mm256_sub_ps(_mm256_loadu_ps(w + i), upd));
  }
  const float one_m_b1 = 1.0f - beta1;
  const float one_m_b2 = 1.0f - beta2;
  for (; i < n; ++i) {
    const float gi = g[i];
    m[i] = beta1 * m[i] + one_m_b1 * gi;
    v[i] = beta2 * v[i] + one_m_b2 * (gi * gi);
    const float mh = m[i] * inv_bc1;
    const float vh = v[i] * inv_bc2;
    w[i] -= (lr * mh) / (std::sqrt(vh) + eps);
  }
}

}  // namespace

const Table* avx2_table_impl() {
  static const Table t = {
      "avx2",     gemm_nn_acc_avx2, add_avx2,  sub_avx2,      mul_avx2, madd_avx2,
      axpy_avx2,  scale_avx2,       relu_avx2, relu_bwd_avx2, adam_avx2,
  };
  return &t;
}

}  // namespace tbqn::kernels

#endif  // __AVX2__
