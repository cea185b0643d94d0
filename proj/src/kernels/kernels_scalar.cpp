#include "tbqn/kernels.h"
#include "tbqn/kernels_detail.h"

namespace tbqn::kernels {

namespace {

void gemm_nn_acc_f32(const float* a, const float* b, float* c, int m, int k, int n) {
  ref::gemm_nn_acc<float>(a, b, c, m, k, n);
}
void add_f32(const float* a, const float* b, float* o, std::size_t n) { ref::add<float>(a, b, o, n); }
void sub_f32(const float* a, const float* b, float* o, std::size_t n) { ref::sub<float>(a, b, o, n); }
void mul_f32(const float* a, const float* b, float* o, std::size_t n) { ref::mul<float>(a, b, o, n); }
void madd_f32(const float* a, const float* b, float* y, std::size_t n) { ref::madd<float>(a, b, y, n); }
void axpy_f32(float alpha, const float* x, float* y, std::size_t n) { ref::axpy<float>(alpha, x, y, n); }
void scale_f32(const float* x, float s, float* o, std::size_t n) { ref::scale<float>(x, s, o, n); }
void relu_f32(const float* x, float* o, std::size_t n) { ref::relu<float>(x, o, n); }
void relu_bwd_f32(const float* x, const float* dy, float* dx, std::size_t n) {
  ref::relu_bwd<float>(x, dy, dx, n);
}
void adam_f32(float* w, const float* g, float* m, float* v, std::size_t n, float lr,
              float b1, float b2, float eps, float ibc1, float ibc2) {
  ref::adam<float>(w, g, m, v, n, lr, b1, b2, eps, ibc1, ibc2);
}

}  // namespace

const Table& scalar_table() {
  static const Table t = {
      "scalar",   gemm_nn_acc_f32, add_f32,  sub_f32,      mul_f32, madd_f32,
      axpy_f32,   scale_f32,       relu_f32, relu_bwd_f32, adam_f32,
  };
  return t;
}

}  // namespace tbqn::kernels
