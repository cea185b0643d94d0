#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <type_traits>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tbqn/errors.h"
#include "tbqn/kernels.h"
#include "tbqn/kernels_detail.h"
#include "tbqn/rng.h"

namespace tbqn {

using Shape = std::vector<int>;

inline long long shape_numel(const Shape& s) {
  long long n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

// Reverse-mode graph construction can be suspended for pure inference
// (action selection, evaluation episodes, TD-target forwards). Ops built
// under a NoGradGuard produce constant nodes with no parents.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

namespace detail {
bool& grad_flag();

// f32 goes through the runtime-dispatched kernel table, f64 through the
// scalar reference templates. Same algorithms either way.
template <class T>
inline void k_gemm(const T* a, const T* b, T* c, int m, int k, int n) {
  if constexpr (std::is_same_v<T, float>)
    kernels::active().gemm_nn_acc(a, b, c, m, k, n);
  else
    kernels::ref::gemm_nn_acc<T>(a, b, c, m, k, n);
}
template <class T>
inline void k_add(const T* a, const T* b, T* o, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) kernels::active().add(a, b, o, n);
  else kernels::ref::add<T>(a, b, o, n);
}
template <class T>
inline void k_sub(const T* a, const T* b, T* o, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) kernels::active().sub(a, b, o, n);
  else kernels::ref::sub<T>(a, b, o, n);
}
template <class T>
inline void k_mul(const T* a, const T* b, T* o, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) kernels::active().mul(a, b, o, n);
  else kernels::ref::mul<T>(a, b, o, n);
}
template <class T>
inline void k_madd(const T* a, const T* b, T* y, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) kernels::active().madd(a, b, y, n);
  else kernels::ref::madd<T>(a, b, y, n);
}
template <class T>
inline void k_axpy(T alpha, const T* x, T* y, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) kernels::active().axpy(alpha, x, y, n);
  else kernels::ref::axpy<T>(alpha, x, y, n);
}
template <class T>
inline void k_scale(const T* x, T s, T* o, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) kernels::active().scale(x, s, o, n);
  else kernels::ref::scale<T>(x, s, o, n);
}
template <class T>
inline void k_relu(const T* x, T* o, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) kernels::active().relu(x, o, n);
  else kernels::ref::relu<T>(x, o, n);
}
template <class T>
inline void k_relu_bwd(const T* x, const T* dy, T* dx, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) kernels::active().relu_bwd(x, dy, dx, n);
  else kernels::ref::relu_bwd<T>(x, dy, dx, n);
}

template <class T>
inline void transpose2d(const T* src, int rows, int cols, T* dst) {
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) dst[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
}
}  // namespace detail

template <class T>
struct NodeT {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until needed; same length as data once allocated
  bool requires_grad = false;
  std::vector<std::shared_ptr<NodeT>> parents;
  std::function<void(NodeT&)> backward_fn;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
  bool is_leaf() const { return parents.empty(); }
};

// Shared-handle tensor participating in a reverse-mode graph. Ops are free
// functions returning new handles; the graph stays alive while any handle to
// its downstream nodes lives.
template <class T>
class TensorT {
 public:
  TensorT() = default;
  explicit TensorT(std::shared_ptr<NodeT<T>> n) : node_(std::move(n)) {}

  static TensorT zeros(Shape shape) { return full(std::move(shape), T(0)); }

  static TensorT full(Shape shape, T v) {
    auto n = std::make_shared<NodeT<T>>();
    long long count = shape_numel(shape);
    n->shape = std::move(shape);
    n->data.assign(static_cast<std::size_t>(count), v);
    return TensorT(std::move(n));
  }

  static TensorT from(Shape shape, std::vector<T> data) {
    if (shape_numel(shape) != static_cast<long long>(data.size()))
      throw ShapeError("tensor: shape " + shape_str(shape) + " does not match data length " +
                       std::to_string(data.size()));
    auto n = std::make_shared<NodeT<T>>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    return TensorT(std::move(n));
  }

  static TensorT scalar(T v) { return from({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  long long numel() const { return static_cast<long long>(node_->data.size()); }

  std::vector<T>& data() { return node_->data; }
  const std::vector<T>& data() const { return node_->data; }
  std::vector<T>& grad() { return node_->ensure_grad(); }
  bool has_grad() const { return !node_->grad.empty(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  void zero_grad() { node_->grad.clear(); }

  T item() const {
    if (numel() != 1) throw ContractError("item() requires a scalar tensor, got shape " + shape_str(shape()));
    return node_->data[0];
  }

  // Reverse pass from a scalar loss. Intermediate grads are reset on every
  // call; leaf grads (parameters, inputs) accumulate across calls.
  void backward() {
    if (numel() != 1)
      throw ContractError("backward() requires a scalar loss, got shape " + shape_str(shape()));
    if (!node_->requires_grad) return;

    std::vector<NodeT<T>*> order;
    std::unordered_set<NodeT<T>*> visited;
    struct Frame {
      NodeT<T>* n;
      std::size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({node_.get(), 0});
    visited.insert(node_.get());
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < f.n->parents.size()) {
        NodeT<T>* p = f.n->parents[f.next++].get();
        if (p->requires_grad && !visited.count(p)) {
          visited.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        order.push_back(f.n);
        stack.pop_back();
      }
    }
    for (NodeT<T>* n : order) {
      if (!n->is_leaf()) n->ensure_grad().assign(n->data.size(), T(0));
    }
    node_->ensure_grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
  }

  std::shared_ptr<NodeT<T>>& node() { return node_; }
  const std::shared_ptr<NodeT<T>>& node() const { return node_; }

 private:
  std::shared_ptr<NodeT<T>> node_;
};

namespace detail {

template <class T>
std::shared_ptr<NodeT<T>> make_op_node(Shape shape, std::vector<T> data,
                                       std::vector<std::shared_ptr<NodeT<T>>> parents) {
  auto n = std::make_shared<NodeT<T>>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  bool rg = false;
  if (grad_enabled()) {
    for (const auto& p : parents) rg = rg || p->requires_grad;
  }
  n->requires_grad = rg;
  if (rg) n->parents = std::move(parents);
  return n;
}

// Resolves how b broadcasts against a for elementwise binary ops: either the
// shapes are equal, or the smaller operand's shape is a suffix of the larger.
struct Broadcast {
  int side;            // 0: equal, 1: b is the smaller suffix, 2: a is the smaller suffix
  std::size_t small_n; // numel of the smaller operand
  std::size_t reps;
};

inline Broadcast resolve_suffix_broadcast(const Shape& a, const Shape& b, const char* opname) {
  auto is_suffix = [](const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    for (std::size_t i = 0; i < small.size(); ++i)
      if (small[small.size() - 1 - i] != big[big.size() - 1 - i]) return false;
    return true;
  };
  if (a == b) return {0, static_cast<std::size_t>(shape_numel(a)), 1};
  if (is_suffix(b, a)) {
    std::size_t nb = static_cast<std::size_t>(shape_numel(b));
    return {1, nb, static_cast<std::size_t>(shape_numel(a)) / nb};
  }
  if (is_suffix(a, b)) {
    std::size_t na = static_cast<std::size_t>(shape_numel(a));
    return {2, na, static_cast<std::size_t>(shape_numel(b)) / na};
  }
  throw ShapeError(std::string(opname) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ops

template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2)
    throw ShapeError("matmul: operands must have rank >= 2, got " + shape_str(as) + " x " + shape_str(bs));
  const int m = as[as.size() - 2];
  const int k = as[as.size() - 1];
  const int k2 = bs[bs.size() - 2];
  const int n = bs[bs.size() - 1];
  if (k != k2)
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(as) + " x " + shape_str(bs));

  Shape lead_a(as.begin(), as.end() - 2);
  Shape lead_b(bs.begin(), bs.end() - 2);
  const long long la = shape_numel(lead_a);
  const long long lb = shape_numel(lead_b);
  Shape lead_out;
  bool bc_a = false, bc_b = false;
  if (lead_a == lead_b) {
    lead_out = lead_a;
  } else if (lb == 1 && (la != 1 || lead_a.size() >= lead_b.size())) {
    // b is a shared (unbatched) matrix; keep a's lead shape even when it is
    // all ones, so a batch of one stays rank-3
    lead_out = lead_a;
    bc_b = true;
  } else if (la == 1) {
    lead_out = lead_b;
    bc_a = true;
  } else {
    throw ShapeError("matmul: batch dimensions disagree: " + shape_str(as) + " x " + shape_str(bs));
  }
  const long long L = shape_numel(lead_out);

  Shape out_shape = lead_out;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<T> out(static_cast<std::size_t>(L) * m * n, T(0));

  const std::size_t a_stride = bc_a ? 0 : static_cast<std::size_t>(m) * k;
  const std::size_t b_stride = bc_b ? 0 : static_cast<std::size_t>(k) * n;
  const std::size_t c_stride = static_cast<std::size_t>(m) * n;
  const T* ap = a.data().data();
  const T* bp = b.data().data();
  for (long long s = 0; s < L; ++s)
    detail::k_gemm<T>(ap + s * a_stride, bp + s * b_stride, out.data() + s * c_stride, m, k, n);

  auto node = detail::make_op_node<T>(std::move(out_shape), std::move(out), {a.node(), b.node()});
  if (node->requires_grad) {
    node->backward_fn = [m, k, n, L, a_stride, b_stride, c_stride](NodeT<T>& self) {
      NodeT<T>& pa = *self.parents[0];
      NodeT<T>& pb = *self.parents[1];
      const T* dc = self.grad.data();
      if (pa.requires_grad) {
        std::vector<T>& da = pa.ensure_grad();
        std::vector<T> bt(static_cast<std::size_t>(k) * n);
        for (long long s = 0; s < L; ++s) {
          detail::transpose2d<T>(pb.data.data() + s * b_stride, k, n, bt.data());
          detail::k_gemm<T>(dc + s * c_stride, bt.data(), da.data() + s * a_stride, m, n, k);
        }
      }
      if (pb.requires_grad) {
        std::vector<T>& db = pb.ensure_grad();
        std::vector<T> at(static_cast<std::size_t>(m) * k);
        for (long long s = 0; s < L; ++s) {
          detail::transpose2d<T>(pa.data.data() + s * a_stride, m, k, at.data());
          detail::k_gemm<T>(at.data(), dc + s * c_stride, db.data() + s * b_stride, k, m, n);
        }
      }
    };
  }
  return TensorT<T>(std::move(node));
}

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  auto bc = detail::resolve_suffix_broadcast(a.shape(), b.shape(), "add");
  const Shape& out_shape = bc.side == 2 ? b.shape() : a.shape();
  std::vector<T> out(static_cast<std::size_t>(shape_numel(out_shape)));
  const T* ap = a.data().data();
  const T* bp = b.data().data();
  if (bc.side == 0) {
    detail::k_add<T>(ap, bp, out.data(), out.size());
  } else if (bc.side == 1) {
    for (std::size_t r = 0; r < bc.reps; ++r)
      detail::k_add<T>(ap + r * bc.small_n, bp, out.data() + r * bc.small_n, bc.small_n);
  } else {
    for (std::size_t r = 0; r < bc.reps; ++r)
      detail::k_add<T>(ap, bp + r * bc.small_n, out.data() + r * bc.small_n, bc.small_n);
  }
  auto node = detail::make_op_node<T>(out_shape, std::move(out), {a.node(), b.node()});
  if (node->requires_grad) {
    node->backward_fn = [bc](NodeT<T>& self) {
      NodeT<T>& pa = *self.parents[0];
      NodeT<T>& pb = *self.parents[1];
      const T* dc = self.grad.data();
      auto push = [&](NodeT<T>& p, bool is_small) {
        if (!p.requires_grad) return;
        std::vector<T>& g = p.ensure_grad();
        if (!is_small) {
          detail::k_axpy<T>(T(1), dc, g.data(), g.size());
        } else {
          for (std::size_t r = 0; r < bc.reps; ++r)
            detail::k_axpy<T>(T(1), dc + r * bc.small_n, g.data(), bc.small_n);
        }
      };
      push(pa, bc.side == 2);
      push(pb, bc.side == 1);
    };
  }
  return TensorT<T>(std::move(node));
}

template <class T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  auto bc = detail::resolve_suffix_broadcast(a.shape(), b.shape(), "sub");
  const Shape& out_shape = bc.side == 2 ? b.shape() : a.shape();
  std::vector<T> out(static_cast<std::size_t>(shape_numel(out_shape)));
  const T* ap = a.data().data();
  const T* bp = b.data().data();
  if (bc.side == 0) {
    detail::k_sub<T>(ap, bp, out.data(), out.size());
  } else if (bc.side == 1) {
    for (std::size_t r = 0; r < bc.reps; ++r)
      detail::k_sub<T>(ap + r * bc.small_n, bp, out.data() + r * bc.small_n, bc.small_n);
  } else {
    for (std::size_t r = 0; r < bc.reps; ++r)
      detail::k_sub<T>(ap, bp + r * bc.small_n, out.data() + r * bc.small_n, bc.small_n);
  }
  auto node = detail::make_op_node<T>(out_shape, std::move(out), {a.node(), b.node()});
  if (node->requires_grad) {
    node->backward_fn = [bc](NodeT<T>& self) {
      NodeT<T>& pa = *self.parents[0];
      NodeT<T>& pb = *self.parents[1];
      const T* dc = self.grad.data();
      if (pa.requires_grad) {
        std::vector<T>& g = pa.ensure_grad();
        if (bc.side != 2) {
          detail::k_axpy<T>(T(1), dc, g.data(), g.size());
        } else {
          for (std::size_t r = 0; r < bc.reps; ++r)
            detail::k_axpy<T>(T(1), dc + r * bc.small_n, g.data(), bc.small_n);
        }
      }
      if (pb.requires_grad) {
        std::vector<T>& g = pb.ensure_grad();
        if (bc.side != 1) {
          detail::k_axpy<T>(T(-1), dc, g.data(), g.size());
        } else {
          for (std::size_t r = 0; r < bc.reps; ++r)
            detail::k_axpy<T>(T(-1), dc + r * bc.small_n, g.data(), bc.small_n);
        }
      }
    };
  }
  return TensorT<T>(std::move(node));
}

template <class T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: shapes disagree: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.data().size());
  detail::k_mul<T>(a.data().data(), b.data().data(), out.data(), out.size());
  auto node = detail::make_op_node<T>(a.shape(), std::move(out), {a.node(), b.node()});
  if (node->requires_grad) {
    node->backward_fn = [](NodeT<T>& self) {
      NodeT<T>& pa = *self.parents[0];
      NodeT<T>& pb = *self.parents[1];
      const T* dc = self.grad.data();
      if (pa.requires_grad)
        detail::k_madd<T>(dc, pb.data.data(), pa.ensure_grad().data(), pa.data.size());
      if (pb.requires_grad)
        detail::k_madd<T>(dc, pa.data.data(), pb.ensure_grad().data(), pb.data.size());
    };
  }
  return TensorT<T>(std::move(node));
}

template <class T>
TensorT<T> scale(const TensorT<T>& x, T s) {
  std::vector<T> out(x.data().size());
  detail::k_scale<T>(x.data().data(), s, out.data(), out.size());
  auto node = detail::make_op_node<T>(x.shape(), std::move(out), {x.node()});
  if (node->requires_grad) {
    node->backward_fn = [s](NodeT<T>& self) {
      NodeT<T>& p = *self.parents[0];
      if (p.requires_grad)
        detail::k_axpy<T>(s, self.grad.data(), p.ensure_grad().data(), p.data.size());
    };
  }
  return TensorT<T>(std::move(node));
}

// relu derivative at exactly 0 is defined as 0
template <class T>
TensorT<T> relu(const TensorT<T>& x) {
  std::vector<T> out(x.data().size());
  detail::k_relu<T>(x.data().data(), out.data(), out.size());
  auto node = detail::make_op_node<T>(x.shape(), std::move(out), {x.node()});
  if (node->requires_grad) {
    node->backward_fn = [](NodeT<T>& self) {
      NodeT<T>& p = *self.parents[0];
      if (p.requires_grad)
        detail::k_relu_bwd<T>(p.data.data(), self.grad.data(), p.ensure_grad().data(), p.data.size());
    };
  }
  return TensorT<T>(std::move(node));
}

template <class T>
TensorT<T> sigmoid(const TensorT<T>& x) {
  std::vector<T> out(x.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-x.data()[i]));
  auto node = detail::make_op_node<T>(x.shape(), std::move(out), {x.node()});
  if (node->requires_grad) {
    node->backward_fn = [](NodeT<T>& self) {
      NodeT<T>& p = *self.parents[0];
      if (!p.requires_grad) return;
      std::vector<T>& g = p.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T y = self.data[i];
        g[i] += self.grad[i] * y * (T(1) - y);
      }
    };
  }
  return TensorT<T>(std::move(node));
}

template <class T>
TensorT<T> tanh_op(const TensorT<T>& x) {
  std::vector<T> out(x.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.data()[i]);
  auto node = detail::make_op_node<T>(x.shape(), std::move(out), {x.node()});
  if (node->requires_grad) {
    node->backward_fn = [](NodeT<T>& self) {
      NodeT<T>& p = *self.parents[0];
      if (!p.requires_grad) return;
      std::vector<T>& g = p.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T y = self.data[i];
        g[i] += self.grad[i] * (T(1) - y * y);
      }
    };
  }
  return TensorT<T>(std::move(node));
}

// softmax over the last dimension, max-stabilized
template <class T>
TensorT<T> softmax_last(const TensorT<T>& x) {
  if (x.rank() < 1 || x.dim(x.rank() - 1) < 1)
    throw ShapeError("softmax_last: needs a nonempty last dimension, got " + shape_str(x.shape()));
  const std::size_t d = static_cast<std::size_t>(x.dim(x.rank() - 1));
  const std::size_t slices = x.data().size() / d;
  std::vector<T> out(x.data().size());
  const T* xp = x.data().data();
  for (std::size_t s = 0; s < slices; ++s) {
    const T* row = xp + s * d;
    T* orow = out.data() + s * d;
    T mx = row[0];
    for (std::size_t i = 1; i < d; ++i) mx = row[i] > mx ? row[i] : mx;
    T sum = T(0);
    for (std::size_t i = 0; i < d; ++i) {
      orow[i] = std::exp(row[i] - mx);
      sum += orow[i];
    }
    const T inv = T(1) / sum;
    for (std::size_t i = 0; i < d; ++i) orow[i] *= inv;
  }
  auto node = detail::make_op_node<T>(x.shape(), std::move(out), {x.node()});
  if (node->requires_grad) {
    node->backward_fn = [d, slices](NodeT<T>& self) {
      NodeT<T>& p = *self.parents[0];
      if (!p.requires_grad) return;
      std::vector<T>& g = p.ensure_grad();
      for (std::size_t s = 0; s < slices; ++s) {
        const T* y = self.data.data() + s * d;
        const T* dy = self.grad.data() + s * d;
        T dot = T(0);
        for (std::size_t i = 0; i < d; ++i) dot += dy[i] * y[i];
        T* gp = g.data() + s * d;
        for (std::size_t i = 0; i < d; ++i) gp[i] += y[i] * (dy[i] - dot);
      }
    };
  }
  return TensorT<T>(std::move(node));
}

// Normalizes each last-dimension slice to mean 0 / variance 1 (population
// variance, eps inside the square root), then applies the affine gain/bias.
template <class T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gain, const TensorT<T>& bias, T eps) {
  const int r = x.rank();
  if (r < 1) throw ShapeError("layer_norm: input must have rank >= 1");
  const std::size_t d = static_cast<std::size_t>(x.dim(r - 1));
  if (gain.numel() != static_cast<long long>(d) || bias.numel() != static_cast<long long>(d))
    throw ShapeError("layer_norm: gain/bias length must equal last dimension " + std::to_string(d) +
                     ", got " + shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
  const std::size_t slices = x.data().size() / d;
  std::vector<T> out(x.data().size());
  auto xhat = std::make_shared<std::vector<T>>(x.data().size());
  auto inv_std = std::make_shared<std::vector<T>>(slices);
  const T* xp = x.data().data();
  const T* gp = gain.data().data();
  const T* bp = bias.data().data();
  for (std::size_t s = 0; s < slices; ++s) {
    const T* row = xp + s * d;
    T mean = T(0);
    for (std::size_t i = 0; i < d; ++i) mean += row[i];
    mean /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t i = 0; i < d; ++i) {
      const T c = row[i] - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T inv = T(1) / std::sqrt(var + eps);
    (*inv_std)[s] = inv;
    T* xh = xhat->data() + s * d;
    T* orow = out.data() + s * d;
    for (std::size_t i = 0; i < d; ++i) {
      xh[i] = (row[i] - mean) * inv;
      orow[i] = gp[i] * xh[i] + bp[i];
    }
  }
  auto node = detail::make_op_node<T>(x.shape(), std::move(out), {x.node(), gain.node(), bias.node()});
  if (node->requires_grad) {
    node->backward_fn = [d, slices, xhat, inv_std](NodeT<T>& self) {
      NodeT<T>& px = *self.parents[0];
      NodeT<T>& pg = *self.parents[1];
      NodeT<T>& pb = *self.parents[2];
      const T* dy = self.grad.data();
      const T* gw = pg.data.data();
      if (pg.requires_grad) {
        std::vector<T>& gg = pg.ensure_grad();
        for (std::size_t s = 0; s < slices; ++s)
          for (std::size_t i = 0; i < d; ++i) gg[i] += dy[s * d + i] * (*xhat)[s * d + i];
      }
      if (pb.requires_grad) {
        std::vector<T>& gb = pb.ensure_grad();
        for (std::size_t s = 0; s < slices; ++s)
          for (std::size_t i = 0; i < d; ++i) gb[i] += dy[s * d + i];
      }
      if (px.requires_grad) {
        std::vector<T>& gx = px.ensure_grad();
        std::vector<T> dxhat(d);
        for (std::size_t s = 0; s < slices; ++s) {
          const T* xh = xhat->data() + s * d;
          const T inv = (*inv_std)[s];
          T m1 = T(0), m2 = T(0);
          for (std::size_t i = 0; i < d; ++i) {
            dxhat[i] = dy[s * d + i] * gw[i];
            m1 += dxhat[i];
            m2 += dxhat[i] * xh[i];
          }
          m1 /= static_cast<T>(d);
          m2 /= static_cast<T>(d);
          T* gr = gx.data() + s * d;
          for (std::size_t i = 0; i < d; ++i) gr[i] += (dxhat[i] - m1 - xh[i] * m2) * inv;
        }
      }
    };
  }
  return TensorT<T>(std::move(node));
}

// Training mode: each element is zeroed with probability `rate`, survivors
// scaled by 1/(1-rate); mask drawn element-sequentially from rng. Eval mode
// or rate 0: the input handle is returned untouched.
template <class T>
TensorT<T> dropout(const TensorT<T>& x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout: rate must be in [0,1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  const T keep_scale = T(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<T>>(x.data().size());
  for (std::size_t i = 0; i < mask->size(); ++i)
    (*mask)[i] = rng.uniform() >= rate ? keep_scale : T(0);
  std::vector<T> out(x.data().size());
  detail::k_mul<T>(x.data().data(), mask->data(), out.data(), out.size());
  auto node = detail::make_op_node<T>(x.shape(), std::move(out), {x.node()});
  if (node->requires_grad) {
    node->backward_fn = [mask](NodeT<T>& self) {
      NodeT<T>& p = *self.parents[0];
      if (p.requires_grad)
        detail::k_madd<T>(self.grad.data(), mask->data(), p.ensure_grad().data(), p.data.size());
    };
  }
  return TensorT<T>(std::move(node));
}

template <class T>
TensorT<T> reshape(const TensorT<T>& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(new_shape));
  std::vector<T> out = x.data();
  auto node = detail::make_op_node<T>(std::move(new_shape), std::move(out), {x.node()});
  if (node->requires_grad) {
    node->backward_fn = [](NodeT<T>& self) {
      NodeT<T>& p = *self.parents[0];
      if (p.requires_grad)
        detail::k_axpy<T>(T(1), self.grad.data(), p.ensure_grad().data(), p.data.size());
    };
  }
  return TensorT<T>(std::move(node));
}

template <class T>
TensorT<T> permute(const TensorT<T>& x, const std::vector<int>& axes) {
  const int r = x.rank();
  if (static_cast<int>(axes.size()) != r)
    throw ShapeError("permute: axes length " + std::to_string(axes.size()) + " != rank " + std::to_string(r));
  std::vector<bool> seen(static_cast<std::size_t>(r), false);
  for (int a : axes) {
    if (a < 0 || a >= r || seen[static_cast<std::size_t>(a)])
      throw ShapeError("permute: invalid axis permutation for rank " + std::to_string(r));
    seen[static_cast<std::size_t>(a)] = true;
  }
  Shape out_shape(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) out_shape[static_cast<std::size_t>(i)] = x.dim(axes[static_cast<std::size_t>(i)]);

  std::vector<std::size_t> in_strides(static_cast<std::size_t>(r), 1), out_strides(static_cast<std::size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i) {
    in_strides[i] = in_strides[i + 1] * static_cast<std::size_t>(x.dim(i + 1));
    out_strides[i] = out_strides[i + 1] * static_cast<std::size_t>(out_shape[i + 1]);
  }
  // out_of[input axis] = output stride where that axis lands
  std::vector<std::size_t> axis_out_stride(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) axis_out_stride[static_cast<std::size_t>(axes[i])] = out_strides[static_cast<std::size_t>(i)];

  const std::size_t total = x.data().size();
  auto mapping = std::make_shared<std::vector<std::size_t>>(total);
  for (std::size_t lin = 0; lin < total; ++lin) {
    std::size_t rem = lin, off = 0;
    for (int i = 0; i < r; ++i) {
      const std::size_t idx = rem / in_strides[static_cast<std::size_t>(i)];
      rem %= in_strides[static_cast<std::size_t>(i)];
      off += idx * axis_out_stride[static_cast<std::size_t>(i)];
    }
    (*mapping)[lin] = off;
  }
  std::vector<T> out(total);
  for (std::size_t lin = 0; lin < total; ++lin) out[(*mapping)[lin]] = x.data()[lin];
  auto node = detail::make_op_node<T>(std::move(out_shape), std::move(out), {x.node()});
  if (node->requires_grad) {
    node->backward_fn = [mapping](NodeT<T>& self) {
      NodeT<T>& p = *self.parents[0];
      if (!p.requires_grad) return;
      std::vector<T>& g = p.ensure_grad();
      for (std::size_t lin = 0; lin < g.size(); ++lin) g[lin] += self.grad[(*mapping)[lin]];
    };
  }
  return TensorT<T>(std::move(node));
}

template <class T>
TensorT<T> transpose_last2(const TensorT<T>& x) {
  const int r = x.rank();
  if (r < 2) throw ShapeError("transpose_last2: rank must be >= 2, got " + shape_str(x.shape()));
  std::vector<int> axes(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) axes[static_cast<std::size_t>(i)] = i;
  std::swap(axes[static_cast<std::size_t>(r - 2)], axes[static_cast<std::size_t>(r - 1)]);
  return permute(x, axes);
}

// Selects one time step from a (batch, time, feature) tensor.
template <class T>
TensorT<T> select_time(const TensorT<T>& x, int t) {
  if (x.rank() != 3)
    throw ShapeError("select_time: expected rank-3 input, got " + shape_str(x.shape()));
  const int B = x.dim(0), S = x.dim(1), D = x.dim(2);
  if (t < 0 || t >= S) throw ContractError("select_time: index " + std::to_string(t) + " out of range");
  std::vector<T> out(static_cast<std::size_t>(B) * D);
  for (int b = 0; b < B; ++b)
    for (int j = 0; j < D; ++j)
      out[static_cast<std::size_t>(b) * D + j] =
          x.data()[(static_cast<std::size_t>(b) * S + t) * D + j];
  auto node = detail::make_op_node<T>({B, D}, std::move(out), {x.node()});
  if (node->requires_grad) {
    node->backward_fn = [B, S, D, t](NodeT<T>& self) {
      NodeT<T>& p = *self.parents[0];
      if (!p.requires_grad) return;
      std::vector<T>& g = p.ensure_grad();
      for (int b = 0; b < B; ++b)
        for (int j = 0; j < D; ++j)
          g[(static_cast<std::size_t>(b) * S + t) * D + j] += self.grad[static_cast<std::size_t>(b) * D + j];
    };
  }
  return TensorT<T>(std::move(node));
}

// Picks q[b, actions[b]] for each row.
template <class T>
TensorT<T> gather_actions(const TensorT<T>& q, const std::vector<int>& actions) {
  if (q.rank() != 2) throw ShapeError("gather_actions: expected rank-2 input, got " + shape_str(q.shape()));
  const int B = q.dim(0), A = q.dim(1);
  if (static_cast<int>(actions.size()) != B)
    throw ContractError("gather_actions: got " + std::to_string(actions.size()) + " actions for batch " + std::to_string(B));
  for (int a : actions)
    if (a < 0 || a >= A) throw ContractError("gather_actions: action " + std::to_string(a) + " out of range");
  std::vector<T> out(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) out[static_cast<std::size_t>(b)] = q.data()[static_cast<std::size_t>(b) * A + actions[static_cast<std::size_t>(b)]];
  auto acts = std::make_shared<std::vector<int>>(actions);
  auto node = detail::make_op_node<T>({B}, std::move(out), {q.node()});
  if (node->requires_grad) {
    node->backward_fn = [B, A, acts](NodeT<T>& self) {
      NodeT<T>& p = *self.parents[0];
      if (!p.requires_grad) return;
      std::vector<T>& g = p.ensure_grad();
      for (int b = 0; b < B; ++b)
        g[static_cast<std::size_t>(b) * A + (*acts)[static_cast<std::size_t>(b)]] += self.grad[static_cast<std::size_t>(b)];
    };
  }
  return TensorT<T>(std::move(node));
}

template <class T>
TensorT<T> reduce_sum(const TensorT<T>& x) {
  T s = T(0);
  for (T v : x.data()) s += v;
  auto node = detail::make_op_node<T>({1}, std::vector<T>{s}, {x.node()});
  if (node->requires_grad) {
    node->backward_fn = [](NodeT<T>& self) {
      NodeT<T>& p = *self.parents[0];
      if (!p.requires_grad) return;
      std::vector<T>& g = p.ensure_grad();
      const T d = self.grad[0];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
    };
  }
  return TensorT<T>(std::move(node));
}

template <class T>
TensorT<T> reduce_mean(const TensorT<T>& x) {
  const T n = static_cast<T>(x.numel());
  T s = T(0);
  for (T v : x.data()) s += v;
  auto node = detail::make_op_node<T>({1}, std::vector<T>{s / n}, {x.node()});
  if (node->requires_grad) {
    node->backward_fn = [n](NodeT<T>& self) {
      NodeT<T>& p = *self.parents[0];
      if (!p.requires_grad) return;
      std::vector<T>& g = p.ensure_grad();
      const T d = self.grad[0] / n;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
    };
  }
  return TensorT<T>(std::move(node));
}

// Mean squared error against a constant target: no gradient flows into the
// target by construction.
template <class T>
TensorT<T> mse_mean(const TensorT<T>& pred, const std::vector<T>& target) {
  if (pred.data().size() != target.size())
    throw ContractError("mse_mean: prediction length " + std::to_string(pred.data().size()) +
                        " != target length " + std::to_string(target.size()));
  const std::size_t n = target.size();
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T e = pred.data()[i] - target[i];
    s += e * e;
  }
  auto tgt = std::make_shared<std::vector<T>>(target);
  auto node = detail::make_op_node<T>({1}, std::vector<T>{s / static_cast<T>(n)}, {pred.node()});
  if (node->requires_grad) {
    node->backward_fn = [tgt, n](NodeT<T>& self) {
      NodeT<T>& p = *self.parents[0];
      if (!p.requires_grad) return;
      std::vector<T>& g = p.ensure_grad();
      const T d = self.grad[0] * T(2) / static_cast<T>(n);
      for (std::size_t i = 0; i < n; ++i) g[i] += d * (p.data[i] - (*tgt)[i]);
    };
  }
  return TensorT<T>(std::move(node));
}

// Huber (delta = 1) against a constant target.
template <class T>
TensorT<T> huber_mean(const TensorT<T>& pred, const std::vector<T>& target) {
  if (pred.data().size() != target.size())
    throw ContractError("huber_mean: prediction length " + std::to_string(pred.data().size()) +
                        " != target length " + std::to_string(target.size()));
  const std::size_t n = target.size();
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T e = pred.data()[i] - target[i];
    const T ae = e < T(0) ? -e : e;
    s += ae <= T(1) ? T(0.5) * e * e : ae - T(0.5);
  }
  auto tgt = std::make_shared<std::vector<T>>(target);
  auto node = detail::make_op_node<T>({1}, std::vector<T>{s / static_cast<T>(n)}, {pred.node()});
  if (node->requires_grad) {
    node->backward_fn = [tgt, n](NodeT<T>& self) {
      NodeT<T>& p = *self.parents[0];
      if (!p.requires_grad) return;
      std::vector<T>& g = p.ensure_grad();
      const T d = self.grad[0] / static_cast<T>(n);
      for (std::size_t i = 0; i < n; ++i) {
        T e = p.data[i] - (*tgt)[i];
        if (e > T(1)) e = T(1);
        if (e < T(-1)) e = T(-1);
        g[i] += d * e;
      }
    };
  }
  return TensorT<T>(std::move(node));
}

using Tensor = TensorT<float>;

}  // namespace tbqn
