#pragma once

#include <string>

#include "rangeseg/ops.hpp"
#include "rangeseg/params.hpp"
#include "rangeseg/tensor.hpp"

namespace rangeseg {

// Parameter bundles mirrored by equally-shaped gradient bundles. visit()
// enumerates the learnable leaves (running statistics are buffers).

template <typename Scalar>
struct LinearParams {
  Tensor<Scalar> weight;  // [Cin, Cout]
  Tensor<Scalar> bias;    // [Cout]

  template <typename To>
  LinearParams<To> cast() const {
    return {weight.template cast<To>(), bias.template cast<To>()};
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

template <typename Scalar>
struct NormParams {
  Tensor<Scalar> scale;
  Tensor<Scalar> shift;
  Tensor<Scalar> running_mean;
  Tensor<Scalar> running_var;

  template <typename To>
  NormParams<To> cast() const {
    return {scale.template cast<To>(), shift.template cast<To>(),
            running_mean.template cast<To>(), running_var.template cast<To>()};
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".scale", scale);
    f(prefix + ".shift", shift);
  }
};

template <typename Scalar>
Tensor<Scalar> apply_linear(const Tensor<Scalar>& x, const LinearParams<Scalar>& p) {
  return linear(x, p.weight, p.bias);
}

template <typename Scalar>
Tensor<Scalar> apply_norm(const Tensor<Scalar>& x, const NormParams<Scalar>& p) {
  return channel_norm(x, p.scale, p.shift, p.running_mean, p.running_var);
}

template <typename Scalar>
Tensor<Scalar> apply_norm_act(const Tensor<Scalar>& x, const NormParams<Scalar>& p) {
  return norm_act(x, p.scale, p.shift, p.running_mean, p.running_var);
}

/// Two linear layers with an inference-mode norm + ReLU between them.
template <typename Scalar>
struct MlpParams {
  LinearParams<Scalar> l1;
  NormParams<Scalar> norm;
  LinearParams<Scalar> l2;

  template <typename To>
  MlpParams<To> cast() const {
    return {l1.template cast<To>(), norm.template cast<To>(), l2.template cast<To>()};
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    l1.visit(prefix + ".l1", f);
    norm.visit(prefix + ".norm", f);
    l2.visit(prefix + ".l2", f);
  }
};

template <typename Scalar>
struct MlpCache {
  Tensor<Scalar> x;
  Tensor<Scalar> h1;  // l1 output, pre-norm
  Tensor<Scalar> n1;  // channel_norm output, pre-relu
  Tensor<Scalar> a1;  // relu output
};

template <typename Scalar>
Tensor<Scalar> mlp_forward(const Tensor<Scalar>& x, const MlpParams<Scalar>& p,
                           MlpCache<Scalar>* cache = nullptr) {
  Tensor<Scalar> h1 = apply_linear(x, p.l1);
  Tensor<Scalar> n1 = apply_norm(h1, p.norm);
  Tensor<Scalar> a1 = relu(n1);
  Tensor<Scalar> y = apply_linear(a1, p.l2);
  if (cache) {
    cache->x = x;
    cache->h1 = std::move(h1);
    cache->n1 = std::move(n1);
    cache->a1 = std::move(a1);
  }
  return y;
}

template <typename Scalar>
struct MlpGrads {
  LinearParams<Scalar> l1;
  NormParams<Scalar> norm;  // only scale/shift are populated
  LinearParams<Scalar> l2;
  Tensor<Scalar> gx;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    l1.visit(prefix + ".l1", f);
    norm.visit(prefix + ".norm", f);
    l2.visit(prefix + ".l2", f);
  }
};

template <typename Scalar>
MlpGrads<Scalar> mlp_backward(const MlpCache<Scalar>& cache, const MlpParams<Scalar>& p,
                              const Tensor<Scalar>& gy) {
  MlpGrads<Scalar> g;
  LinearGrad<Scalar> g2 = linear_backward(cache.a1, p.l2.weight, gy);
  g.l2 = {std::move(g2.gweight), std::move(g2.gbias)};
  Tensor<Scalar> gn1 = relu_backward(cache.n1, g2.gx);
  ChannelNormGrad<Scalar> gn =
      channel_norm_backward(cache.h1, p.norm.scale, p.norm.running_mean,
                            p.norm.running_var, gn1);
  g.norm.scale = std::move(gn.gscale);
  g.norm.shift = std::move(gn.gshift);
  LinearGrad<Scalar> g1 = linear_backward(cache.x, p.l1.weight, gn.gx);
  g.l1 = {std::move(g1.gweight), std::move(g1.gbias)};
  g.gx = std::move(g1.gx);
  return g;
}

// ParamStore binding helpers.

inline LinearParams<float> bind_linear(const ParamStore& store, const std::string& prefix,
                                       std::size_t cin, std::size_t cout) {
  return {store.get(prefix + ".weight", {cin, cout}), store.get(prefix + ".bias", {cout})};
}

inline NormParams<float> bind_norm(const ParamStore& store, const std::string& prefix,
                                   std::size_t c) {
  return {store.get(prefix + ".scale", {c}), store.get(prefix + ".shift", {c}),
          store.get(prefix + ".running_mean", {c}), store.get(prefix + ".running_var", {c})};
}

inline MlpParams<float> bind_mlp(const ParamStore& store, const std::string& prefix,
                                 std::size_t cin, std::size_t hidden, std::size_t cout) {
  return {bind_linear(store, prefix + ".l1", cin, hidden),
          bind_norm(store, prefix + ".norm", hidden),
          bind_linear(store, prefix + ".l2", hidden, cout)};
}

}  // namespace rangeseg
