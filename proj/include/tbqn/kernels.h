#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace tbqn::kernels {

// Dispatch table of the f32 inner loops. One scalar reference implementation
// plus SIMD variants (AVX2 on x86-64, NEON on aarch64) selected once at
// runtime. Every variant is required to be BIT-IDENTICAL to the scalar
// reference: the SIMD code vectorizes across independent output elements and
// keeps the per-element operation order of the reference (multiply then add,
// no FMA contraction), so kernel selection never changes numerics. The
// equivalence suite asserts exact bit equality on random inputs.
struct Table {
  const char* name;

  // c += a(m x k) * b(k x n), row-major. c must not alias a or b.
  void (*gemm_nn_acc)(const float* a, const float* b, float* c, int m, int k, int n);

  void (*add)(const float* a, const float* b, float* out, std::size_t n);   // out = a + b
  void (*sub)(const float* a, const float* b, float* out, std::size_t n);   // out = a - b
  void (*mul)(const float* a, const float* b, float* out, std::size_t n);   // out = a .* b
  void (*madd)(const float* a, const float* b, float* y, std::size_t n);    // y += a .* b
  void (*axpy)(float alpha, const float* x, float* y, std::size_t n);       // y += alpha * x
  void (*scale)(const float* x, float s, float* out, std::size_t n);        // out = s * x
  void (*relu)(const float* x, float* out, std::size_t n);                  // out = x > 0 ? x : 0
  void (*relu_bwd)(const float* x, const float* dy, float* dx, std::size_t n);  // dx += (x>0)*dy

  // In-place Adam update with bias correction folded into inv_bc1/inv_bc2.
  //   m = beta1*m + (1-beta1)*g
  //   v = beta2*v + (1-beta2)*g*g
  //   w -= (lr * (m*inv_bc1)) / (sqrt(v*inv_bc2) + eps)
  void (*adam)(float* w, const float* g, float* m, float* v, std::size_t n,
               float lr, float beta1, float beta2, float eps,
               float inv_bc1, float inv_bc2);
};

const Table& scalar_table();

// Active table: best variant the host supports, overridable with the
// TBQN_KERNELS environment variable ("scalar", "avx2", "neon", "auto").
// Resolved once on first use.
const Table& active();

// Lookup by name; nullptr when the variant is not compiled in or the host
// cannot run it.
const Table* find(const std::string& name);

// All variants runnable on this host (always includes scalar).
std::vector<const Table*> available();

}  // namespace tbqn::kernels
