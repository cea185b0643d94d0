#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tbqn/nn.h"
#include "tbqn/tensor.h"

namespace tbqn {

// Encoder-layer variants. Numbering follows the variant catalog (1-6).
enum class LayerKind : int {
  Baseline = 1,    // post-norm with dropout after each sub-layer
  NoDropout = 2,   // post-norm, no intra-layer dropout
  Imr = 3,         // identity map reordering: pre-norm + ReLU on each sub-layer output
  PreNorm = 4,     // pre-norm without the extra ReLU
  OutputGate = 5,  // IMR with sigmoid output gate replacing residual adds
  GruGate = 6,     // IMR with GRU-style gate replacing residual adds
};

inline LayerKind layer_kind_from_int(int k) {
  if (k < 1 || k > 6) throw ConfigError("layer_kind: expected 1..6, got " + std::to_string(k));
  return static_cast<LayerKind>(k);
}
inline int layer_kind_to_int(LayerKind k) { return static_cast<int>(k); }

struct QNetworkSpec {
  int history = 5;       // observation window length (sequence dimension)
  int state_dim = 4;     // environment observation width
  int model_dim = 64;    // d
  int num_heads = 4;
  int num_layers = 3;    // encoder stack depth
  int ff_dim = 256;
  int num_actions = 2;
  int layer_kind = 3;
  double dropout_rate = 0.1;
  bool outer_dropout = false;           // dropout after input projection + positional encoding
  bool depth_scaled_init = false;       // shrink layer-l weight init bounds by 1/sqrt(l)
  bool depth_scaled_last_layer = false; // extend the depth scaling to the Q-head

  void validate() const {
    if (history < 1) throw ConfigError("net.history must be >= 1");
    if (state_dim < 1) throw ConfigError("net.state_dim must be >= 1");
    if (model_dim < 1) throw ConfigError("net.model_dim must be >= 1");
    if (model_dim % 2 != 0) throw ConfigError("net.model_dim must be even (sinusoidal positions)");
    if (num_heads < 1 || model_dim % num_heads != 0)
      throw ConfigError("net.model_dim (" + std::to_string(model_dim) + ") must be divisible by net.num_heads (" +
                        std::to_string(num_heads) + ")");
    if (num_layers < 1) throw ConfigError("net.num_layers must be >= 1");
    if (ff_dim < 1) throw ConfigError("net.ff_dim must be >= 1");
    if (num_actions < 2) throw ConfigError("net.num_actions must be >= 2");
    layer_kind_from_int(layer_kind);
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw ConfigError("net.dropout_rate must be in [0,1)");
  }
};

// PE(pos,2i) = sin(pos/10000^(2i/d)), PE(pos,2i+1) = cos(same argument)
template <class T>
TensorT<T> positional_encoding(int len, int d) {
  if (d % 2 != 0) throw ConfigError("positional_encoding: model dimension must be even, got " + std::to_string(d));
  std::vector<T> pe(static_cast<std::size_t>(len) * d);
  for (int pos = 0; pos < len; ++pos) {
    for (int i = 0; i < d / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * i / d);
      pe[static_cast<std::size_t>(pos) * d + 2 * i] = static_cast<T>(std::sin(pos * freq));
      pe[static_cast<std::size_t>(pos) * d + 2 * i + 1] = static_cast<T>(std::cos(pos * freq));
    }
  }
  return TensorT<T>::from({len, d}, std::move(pe));
}

template <class T>
struct EncoderLayerParamsT {
  ParameterT<T> wq, wk, wv, wo;          // attention projections, [d,d]
  ParameterT<T> w1, b1, w2, b2;          // feed-forward
  ParameterT<T> ln1_g, ln1_b, ln2_g, ln2_b;
  ParameterT<T> gate_w, gate_b;          // output gate (kind 5)
  ParameterT<T> gru_wr, gru_ur, gru_wz, gru_uz, gru_wh, gru_uh, gru_b;  // GRU gate (kind 6)
};

using EncoderLayerParams = EncoderLayerParamsT<float>;

// Per head: softmax(Q Kᵀ / sqrt(d/heads)) V on projections of x; heads
// concatenated and projected by wo. Shape-preserving on [B,S,d].
template <class T>
TensorT<T> multi_head_attention(const TensorT<T>& x, const EncoderLayerParamsT<T>& p, int heads) {
  const int B = x.dim(0), S = x.dim(1), d = x.dim(2);
  const int dk = d / heads;
  auto split = [&](const TensorT<T>& t) {
    return reshape(permute(reshape(t, {B, S, heads, dk}), {0, 2, 1, 3}), {B * heads, S, dk});
  };
  TensorT<T> q = split(matmul(x, p.wq.value));
  TensorT<T> k = split(matmul(x, p.wk.value));
  TensorT<T> v = split(matmul(x, p.wv.value));
  TensorT<T> scores = scale(matmul(q, transpose_last2(k)), T(1) / static_cast<T>(std::sqrt(static_cast<double>(dk))));
  TensorT<T> ctx = matmul(softmax_last(scores), v);
  ctx = reshape(permute(reshape(ctx, {B, heads, S, dk}), {0, 2, 1, 3}), {B, S, d});
  return matmul(ctx, p.wo.value);
}

template <class T>
TensorT<T> feed_forward(const TensorT<T>& x, const EncoderLayerParamsT<T>& p) {
  return add(matmul(relu(add(matmul(x, p.w1.value), p.b1.value)), p.w2.value), p.b2.value);
}

// out = x + sigmoid(x·Wg - bg) ⊙ y
template <class T>
TensorT<T> output_gate(const TensorT<T>& x, const TensorT<T>& y, const EncoderLayerParamsT<T>& p) {
  return add(x, mul(sigmoid(sub(matmul(x, p.gate_w.value), p.gate_b.value)), y));
}

// R = σ(y·Wr + x·Ur); Z = σ(y·Wz + x·Uz - b); H = tanh(y·Wh + (R⊙x)·Uh);
// out = (1-Z)⊙x + Z⊙H
template <class T>
TensorT<T> gru_gate(const TensorT<T>& x, const TensorT<T>& y, const EncoderLayerParamsT<T>& p) {
  if (x.shape() != y.shape())
    throw ShapeError("gru_gate: shapes disagree: " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  TensorT<T> r = sigmoid(add(matmul(y, p.gru_wr.value), matmul(x, p.gru_ur.value)));
  TensorT<T> z = sigmoid(sub(add(matmul(y, p.gru_wz.value), matmul(x, p.gru_uz.value)), p.gru_b.value));
  TensorT<T> h = tanh_op(add(matmul(y, p.gru_wh.value), matmul(mul(r, x), p.gru_uh.value)));
  TensorT<T> one_minus_z = sub(TensorT<T>::full(z.shape(), T(1)), z);
  return add(mul(one_minus_z, x), mul(z, h));
}

template <class T>
TensorT<T> encoder_layer_forward(const TensorT<T>& x, LayerKind kind, const EncoderLayerParamsT<T>& p,
                                 int heads, double dropout_rate, bool training, Rng& rng) {
  const T eps = T(1e-5);
  auto ln1 = [&](const TensorT<T>& t) { return layer_norm(t, p.ln1_g.value, p.ln1_b.value, eps); };
  auto ln2 = [&](const TensorT<T>& t) { return layer_norm(t, p.ln2_g.value, p.ln2_b.value, eps); };
  switch (kind) {
    case LayerKind::Baseline: {
      TensorT<T> a = dropout(multi_head_attention(x, p, heads), dropout_rate, training, rng);
      TensorT<T> out1 = ln1(add(a, x));
      TensorT<T> f = dropout(feed_forward(out1, p), dropout_rate, training, rng);
      return ln2(add(f, out1));
    }
    case LayerKind::NoDropout: {
      TensorT<T> out1 = ln1(add(multi_head_attention(x, p, heads), x));
      return ln2(add(feed_forward(out1, p), out1));
    }
    case LayerKind::Imr: {
      TensorT<T> out1 = add(x, relu(multi_head_attention(ln1(x), p, heads)));
      return add(out1, relu(feed_forward(ln2(out1), p)));
    }
    case LayerKind::PreNorm: {
      TensorT<T> out1 = add(x, multi_head_attention(ln1(x), p, heads));
      return add(out1, feed_forward(ln2(out1), p));
    }
    case LayerKind::OutputGate: {
      TensorT<T> out1 = output_gate(x, relu(multi_head_attention(ln1(x), p, heads)), p);
      return output_gate(out1, relu(feed_forward(ln2(out1), p)), p);
    }
    case LayerKind::GruGate: {
      TensorT<T> out1 = gru_gate(x, relu(multi_head_attention(ln1(x), p, heads)), p);
      return gru_gate(out1, relu(feed_forward(ln2(out1), p)), p);
    }
  }
  throw ContractError("encoder_layer_forward: unknown layer kind");
}

// Input projection -> positional encoding (-> outer dropout) -> encoder stack
// -> Q-head on the final-position token.
template <class T>
class QNetT {
 public:
  QNetT(const QNetworkSpec& spec, std::uint64_t seed) : spec_(spec) {
    spec_.validate();
    Rng rng(seed);
    const int d = spec_.model_dim;
    const LayerKind kind = layer_kind_from_int(spec_.layer_kind);
    auto weight = [&](const std::string& name, Shape shape, int depth) {
      const InitScheme scheme =
          (spec_.depth_scaled_init && depth >= 1) ? InitScheme::DepthScaled : InitScheme::XavierUniform;
      return ParameterT<T>(name, init_tensor<T>(shape, scheme, depth, rng));
    };
    auto zeros = [&](const std::string& name, Shape shape) {
      return ParameterT<T>(name, TensorT<T>::zeros(std::move(shape)));
    };
    auto ones = [&](const std::string& name, Shape shape) {
      return ParameterT<T>(name, TensorT<T>::full(std::move(shape), T(1)));
    };

    in_w_ = weight("in.w", {spec_.state_dim, d}, 0);
    in_b_ = zeros("in.b", {d});
    layers_.reserve(static_cast<std::size_t>(spec_.num_layers));
    for (int l = 1; l <= spec_.num_layers; ++l) {
      EncoderLayerParamsT<T> lp;
      const std::string pre = "layer" + std::to_string(l) + ".";
      lp.wq = weight(pre + "attn.wq", {d, d}, l);
      lp.wk = weight(pre + "attn.wk", {d, d}, l);
      lp.wv = weight(pre + "attn.wv", {d, d}, l);
      lp.wo = weight(pre + "attn.wo", {d, d}, l);
      lp.w1 = weight(pre + "ff.w1", {d, spec_.ff_dim}, l);
      lp.b1 = zeros(pre + "ff.b1", {spec_.ff_dim});
      lp.w2 = weight(pre + "ff.w2", {spec_.ff_dim, d}, l);
      lp.b2 = zeros(pre + "ff.b2", {d});
      lp.ln1_g = ones(pre + "ln1.g", {d});
      lp.ln1_b = zeros(pre + "ln1.b", {d});
      lp.ln2_g = ones(pre + "ln2.g", {d});
      lp.ln2_b = zeros(pre + "ln2.b", {d});
      if (kind == LayerKind::OutputGate) {
        lp.gate_w = weight(pre + "gate.w", {d, d}, l);
        lp.gate_b = zeros(pre + "gate.b", {d});
      } else if (kind == LayerKind::GruGate) {
        lp.gru_wr = weight(pre + "gate.wr", {d, d}, l);
        lp.gru_ur = weight(pre + "gate.ur", {d, d}, l);
        lp.gru_wz = weight(pre + "gate.wz", {d, d}, l);
        lp.gru_uz = weight(pre + "gate.uz", {d, d}, l);
        lp.gru_wh = weight(pre + "gate.wh", {d, d}, l);
        lp.gru_uh = weight(pre + "gate.uh", {d, d}, l);
        // gate bias starts high so the skip path dominates early training
        lp.gru_b = ParameterT<T>(pre + "gate.b", TensorT<T>::full({d}, T(2)));
      }
      layers_.push_back(std::move(lp));
    }
    const int head_depth =
        (spec_.depth_scaled_init && spec_.depth_scaled_last_layer) ? spec_.num_layers + 1 : 0;
    head_w_ = weight("head.w", {d, spec_.num_actions}, head_depth);
    head_b_ = zeros("head.b", {spec_.num_actions});
    pe_ = positional_encoding<T>(spec_.history, d);
  }

  // history: [B, history, state_dim], oldest observation first.
  TensorT<T> forward(const TensorT<T>& history, bool training, Rng& rng) const {
    if (history.rank() != 3 || history.dim(1) != spec_.history || history.dim(2) != spec_.state_dim)
      throw ShapeError("qnet_forward: expected input (B," + std::to_string(spec_.history) + "," +
                       std::to_string(spec_.state_dim) + "), got " + shape_str(history.shape()));
    TensorT<T> x = add(add(matmul(history, in_w_.value), in_b_.value), pe_);
    if (spec_.outer_dropout) x = dropout(x, spec_.dropout_rate, training, rng);
    const LayerKind kind = layer_kind_from_int(spec_.layer_kind);
    for (const auto& lp : layers_)
      x = encoder_layer_forward(x, kind, lp, spec_.num_heads, spec_.dropout_rate, training, rng);
    return add(matmul(select_time(x, spec_.history - 1), head_w_.value), head_b_.value);
  }

  std::vector<ParameterT<T>*> parameters() {
    std::vector<ParameterT<T>*> out;
    auto push = [&](ParameterT<T>& p) {
      if (p.value.defined()) out.push_back(&p);
    };
    push(in_w_);
    push(in_b_);
    for (auto& lp : layers_) {
      push(lp.wq); push(lp.wk); push(lp.wv); push(lp.wo);
      push(lp.w1); push(lp.b1); push(lp.w2); push(lp.b2);
      push(lp.ln1_g); push(lp.ln1_b); push(lp.ln2_g); push(lp.ln2_b);
      push(lp.gate_w); push(lp.gate_b);
      push(lp.gru_wr); push(lp.gru_ur); push(lp.gru_wz); push(lp.gru_uz);
      push(lp.gru_wh); push(lp.gru_uh); push(lp.gru_b);
    }
    push(head_w_);
    push(head_b_);
    return out;
  }

  void copy_from(QNetT& src) {
    auto dst_p = parameters();
    auto src_p = src.parameters();
    if (dst_p.size() != src_p.size()) throw ContractError("copy_from: parameter sets differ");
    for (std::size_t i = 0; i < dst_p.size(); ++i) dst_p[i]->value.data() = src_p[i]->value.data();
  }

  // theta_target <- tau * theta_src + (1 - tau) * theta_target, computed as
  // theta_target += tau * (theta_src - theta_target) so that equal networks
  // are an exact fixed point for every tau.
  void polyak_from(QNetT& src, T tau) {
    auto dst_p = parameters();
    auto src_p = src.parameters();
    if (dst_p.size() != src_p.size()) throw ContractError("polyak_from: parameter sets differ");
    for (std::size_t i = 0; i < dst_p.size(); ++i) {
      auto& dv = dst_p[i]->value.data();
      const auto& sv = src_p[i]->value.data();
      for (std::size_t j = 0; j < dv.size(); ++j) dv[j] += tau * (sv[j] - dv[j]);
    }
  }

  long long num_params() {
    long long n = 0;
    for (auto* p : parameters()) n += p->value.numel();
    return n;
  }

  const QNetworkSpec& spec() const { return spec_; }

  EncoderLayerParamsT<T>& layer(int i) { return layers_[static_cast<std::size_t>(i)]; }

 private:
  QNetworkSpec spec_;
  ParameterT<T> in_w_, in_b_, head_w_, head_b_;
  std::vector<EncoderLayerParamsT<T>> layers_;
  TensorT<T> pe_;
};

using QNet = QNetT<float>;

inline void save_qnet(const std::string& path, const std::string& meta, QNetT<float>& net) {
  std::vector<std::pair<std::string, const TensorT<float>*>> tensors;
  for (auto* p : net.parameters()) tensors.emplace_back(p->name, &p->value);
  save_checkpoint(path, meta, tensors);
}

inline void load_qnet(QNetT<float>& net, const Checkpoint& ck) {
  for (auto* p : net.parameters()) {
    const CheckpointEntry* e = ck.find(p->name);
    if (!e) throw ConfigError("checkpoint: missing tensor '" + p->name + "'");
    if (e->shape != p->value.shape())
      throw ConfigError("checkpoint: tensor '" + p->name + "' has shape " + shape_str(e->shape) +
                        ", expected " + shape_str(p->value.shape()));
    p->value.data().assign(ck.payload.begin() + static_cast<std::ptrdiff_t>(e->offset),
                           ck.payload.begin() + static_cast<std::ptrdiff_t>(e->offset + e->count));
  }
}

}  // namespace tbqn
