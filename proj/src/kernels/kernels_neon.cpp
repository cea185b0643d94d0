// NEON variants for aarch64. Same bit-exactness contract as the AVX2 file:
// per-element multiply then add (no fused multiply-add), IEEE sqrt/div,
// bitwise selects for masked updates.

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>

#include "tbqn/kernels.h"

namespace tbqn::kernels {

namespace {

void gemm_nn_acc_neon(const float* a, const float* b, float* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<std::size_t>(i) * k;
    float* crow = c + static_cast<std::size_t>(i) * n;
    int jb = 0;
    for (; jb + 16 <= n; jb += 16) {
      float32x4_t acc0 = vld1q_f32(crow + jb);
      float32x4_t acc1 = vld1q_f32(crow + jb + 4);
      float32x4_t acc2 = vld1q_f32(crow + jb + 8);
      float32x4_t acc3 = vld1q_f32(crow + jb + 12);
      for (int kk = 0; kk < k; ++kk) {
        const float32x4_t av = vdupq_n_f32(arow[kk]);
        const float* brow = b + static_cast<std::size_t>(kk) * n + jb;
        acc0 = vaddq_f32(acc0, vmulq_f32(av, vld1q_f32(brow)));
        acc1 = vaddq_f32(acc1, vmulq_f32(av, vld1q_f32(brow + 4)));
        acc2 = vaddq_f32(acc2, vmulq_f32(av, vld1q_f32(brow + 8)));
        acc3 = vaddq_f32(acc3, vmulq_f32(av, vld1q_f32(brow + 12)));
      }
      vst1q_f32(crow + jb, acc0);
      vst1q_f32(crow + jb + 4, acc1);
      vst1q_f32(crow + jb + 8, acc2);
      vst1q_f32(crow + jb + 12, acc3);
    }
    for (; jb + 4 <= n; jb += 4) {
      float32x4_t acc = vld1q_f32(crow + jb);
      for (int kk = 0; kk < k; ++kk) {
        const float32x4_t av = vdupq_n_f32(arow[kk]);
        acc = vaddq_f32(acc, vmulq_f32(av, vld1q_f32(b + static_cast<std::size_t>(kk) * n + jb)));
      }
      vst1q_f32(crow + jb, acc);
    }
    for (int j = jb; j < n; ++j) {
      float s = crow[j];
      for (int kk = 0; kk < k; ++kk) s += arow[kk] * b[static_cast<std::size_t>(kk) * n + j];
      crow[j] = s;
    }
  }
}

void add_neon(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vaddq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_neon(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vsubq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_neon(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void madd_neon(const float* a, const float* b, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    float32x4_t prod = vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i));
    vst1q_f32(y + i, vaddq_f32(vld1q_f32(y + i), prod));
  }
  for (; i < n; ++i) y[i] += a[i] * b[i];
}

void axpy_neon(float alpha, const float* x, float* y, std::size_t n) {
  const float32x4_t av = vdupq_n_f32(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    float32x4_t prod = vmulq_f32(av, vld1q_f32(x + i));
    vst1q_f32(y + i, vaddq_f32(vld1q_f32(y + i), prod));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_neon(const float* x, float s, float* out, std::size_t n) {
  const float32x4_t sv = vdupq_n_f32(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vmulq_f32(sv, vld1q_f32(x + i)));
  for (; i < n; ++i) out[i] = s * x[i];
}

void relu_neon(const float* x, float* out, std::size_t n) {
  const float32x4_t zero = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t xv = vld1q_f32(x + i);
    const uint32x4_t mask = vcgtq_f32(xv, zero);
    vst1q_f32(out + i, vbslq_f32(mask, xv, zero));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_neon(const float* x, const float* dy, float* dx, std::size_t n) {
  const float32x4_t zero = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t xv = vld1q_f32(x + i);
    const uint32x4_t mask = vcgtq_f32(xv, zero);
    const float32x4_t dxv = vld1q_f32(dx + i);
    const float32x4_t summed = vaddq_f32(dxv, vld1q_f32(dy + i));
    vst1q_f32(dx + i, vbslq_f32(mask, summed, dxv));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0f) dx[i] += dy[i];
  }
}

void adam_neon(float* w, const float* g, float* m, float* v, std::size_t n,
               float lr, float beta1, float beta2, float eps, float inv_bc1,
               float inv_bc2) {
  const float32x4_t b1 = vdupq_n_f32(beta1);
  const float32x4_t b2 = vdupq_n_f32(beta2);
  const float32x4_t omb1 = vdupq_n_f32(1.0f - beta1);
  const float32x4_t omb2 = vdupq_n_f32(1.0f - beta2);
  const float32x4_t lrv = vdupq_n_f32(lr);
  const float32x4_t epsv = vdupq_n_f32(eps);
  const float32x4_t ibc1 = vdupq_n_f32(inv_bc1);
  const float32x4_t ibc2 = vdupq_n_f32(inv_bc2);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t gv = vld1q_f32(g + i);
    float32x4_t mv = vld1q_f32(m + i);
    float32x4_t vv = vld1q_f32(v + i);
    mv = vaddq_f32(vmulq_f32(b1, mv), vmulq_f32(omb1, gv));
    vv = vaddq_f32(vmulq_f32(b2, vv), vmulq_f32(omb2, vmulq_f32(gv, gv)));
    vst1q_f32(m + i, mv);
    vst1q_f32(v + i, vv);
    const float32x4_t mh = vmulq_f32(mv, ibc1);
    const float32x4_t vh = vmulq_f32(vv, ibc2);
    const float32x4_t den = vaddq_f32(vsqrtq_f32(vh), epsv);
    const float32x4_t upd = vdivq_f32(vmulq_f32(lrv, mh), den);
    vst1q_f32(w + i, vsubq_f32(vld1q_f32(w + i), upd));
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

const Table* neon_table_impl() {
  static const Table t = {
      "neon",     gemm_nn_acc_neon, add_neon,  sub_neon,      mul_neon, madd_neon,
      axpy_neon,  scale_neon,       relu_neon, relu_bwd_neon, adam_neon,
  };
  return &t;
}

}  // namespace tbqn::kernels

#endif  // __aarch64__
