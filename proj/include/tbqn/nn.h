#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "tbqn/tensor.h"

namespace tbqn {

// Trainable tensor with per-parameter Adam state.
template <class T>
struct ParameterT {
  std::string name;
  TensorT<T> value;
  std::vector<T> m, v;  // Adam first/second moment buffers
  long long step = 0;

  ParameterT() = default;
  ParameterT(std::string n, TensorT<T> t) : name(std::move(n)), value(std::move(t)) {
    value.set_requires_grad(true);
    m.assign(value.data().size(), T(0));
    v.assign(value.data().size(), T(0));
  }
};

using Parameter = ParameterT<float>;

enum class InitScheme { XavierUniform, DepthScaled, Zeros };

// Xavier-uniform bound sqrt(6/(fan_in+fan_out)); DepthScaled divides the
// bound by sqrt(depth_l) where depth_l is the 1-based encoder depth.
template <class T>
TensorT<T> init_tensor(const Shape& shape, InitScheme scheme, int depth_l, Rng& rng) {
  if (shape.empty()) throw ConfigError("init: empty shape");
  for (int d : shape)
    if (d <= 0) throw ConfigError("init: nonpositive dimension in shape " + shape_str(shape));
  if (scheme == InitScheme::Zeros) return TensorT<T>::zeros(shape);
  if (scheme == InitScheme::DepthScaled && depth_l < 1)
    throw ConfigError("init: depth_scaled needs depth >= 1, got " + std::to_string(depth_l));
  long long fan_out = shape.back();
  long long fan_in = shape_numel(shape) / fan_out;
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  if (scheme == InitScheme::DepthScaled) bound /= std::sqrt(static_cast<double>(depth_l));
  std::vector<T> data(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : data) x = static_cast<T>(rng.uniform(-bound, bound));
  return TensorT<T>::from(shape, std::move(data));
}

template <class T>
void zero_grads(const std::vector<ParameterT<T>*>& params) {
  for (auto* p : params) p->value.zero_grad();
}

// Standard Adam with bias correction. Grads are left untouched.
template <class T>
void adam_step(const std::vector<ParameterT<T>*>& params, T lr, T beta1, T beta2, T eps) {
  for (auto* p : params) {
    if (!p->value.has_grad())
      throw ContractError("adam_step: parameter '" + p->name + "' has no gradient");
    p->step += 1;
    const T inv_bc1 = T(1) / (T(1) - static_cast<T>(std::pow(static_cast<double>(beta1), static_cast<double>(p->step))));
    const T inv_bc2 = T(1) / (T(1) - static_cast<T>(std::pow(static_cast<double>(beta2), static_cast<double>(p->step))));
    const std::size_t n = p->value.data().size();
    if constexpr (std::is_same_v<T, float>) {
      kernels::active().adam(p->value.data().data(), p->value.grad().data(), p->m.data(), p->v.data(),
                             n, lr, beta1, beta2, eps, inv_bc1, inv_bc2);
    } else {
      kernels::ref::adam<T>(p->value.data().data(), p->value.grad().data(), p->m.data(), p->v.data(),
                            n, lr, beta1, beta2, eps, inv_bc1, inv_bc2);
    }
  }
}

// Global L2 norm over all present grads, accumulated in double.
template <class T>
double global_grad_norm(const std::vector<ParameterT<T>*>& params) {
  double ss = 0.0;
  for (auto* p : params) {
    if (!p->value.has_grad()) continue;
    for (T g : p->value.grad()) ss += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(ss);
}

// Scales all grads by max_norm/g when the global L2 norm g exceeds max_norm.
// Returns the pre-clip norm.
template <class T>
double clip_global_norm(const std::vector<ParameterT<T>*>& params, double max_norm) {
  if (max_norm <= 0) throw ConfigError("clip_global_norm: max_norm must be > 0");
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto* p : params) {
      if (!p->value.has_grad()) continue;
      auto& g = p->value.grad();
      detail::k_scale<T>(g.data(), s, g.data(), g.size());
    }
  }
  return norm;
}

// --- checkpoint I/O ------------------------------------------------------
// Text manifest (header, single-line meta, one TENSOR line per entry) followed
// by a flat little-endian float32 payload. Round-trips bit-exactly.

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::size_t offset = 0;  // element offset into payload
  std::size_t count = 0;
};

struct Checkpoint {
  std::string meta;  // single line, caller-defined (JSON in practice)
  std::vector<CheckpointEntry> entries;
  std::vector<float> payload;

  const CheckpointEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
};

void save_checkpoint(const std::string& path, const std::string& meta,
                     const std::vector<std::pair<std::string, const TensorT<float>*>>& tensors);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace tbqn
