#pragma once

#include <optional>
#include <vector>

#include "rangeseg/layers.hpp"

namespace rangeseg {

/// One multi-branch block: local 3x3, dilated 3x3 (d=2), and a squeezed
/// 1x1 -> 3x3 edge branch, fused by 1x1 conv and a residual.
template <typename Scalar>
struct BlockParams {
  Tensor<Scalar> b1_kernel;         // [3,3,w,w]
  NormParams<Scalar> b1_norm;
  Tensor<Scalar> b2_kernel;         // [3,3,w,w], dilation 2
  NormParams<Scalar> b2_norm;
  Tensor<Scalar> b3_reduce_kernel;  // [1,1,w,w/2]
  NormParams<Scalar> b3_reduce_norm;
  Tensor<Scalar> b3_kernel;         // [3,3,w/2,w]
  NormParams<Scalar> b3_norm;
  Tensor<Scalar> fuse_kernel;       // [1,1,3w,w]
  NormParams<Scalar> out_norm;

  template <typename To>
  BlockParams<To> cast() const {
    return {b1_kernel.template cast<To>(), b1_norm.template cast<To>(),
            b2_kernel.template cast<To>(), b2_norm.template cast<To>(),
            b3_reduce_kernel.template cast<To>(), b3_reduce_norm.template cast<To>(),
            b3_kernel.template cast<To>(), b3_norm.template cast<To>(),
            fuse_kernel.template cast<To>(), out_norm.template cast<To>()};
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".b1.conv.weight", b1_kernel);
    b1_norm.visit(prefix + ".b1.norm", f);
    f(prefix + ".b2.conv.weight", b2_kernel);
    b2_norm.visit(prefix + ".b2.norm", f);
    f(prefix + ".b3.reduce.conv.weight", b3_reduce_kernel);
    b3_reduce_norm.visit(prefix + ".b3.reduce.norm", f);
    f(prefix + ".b3.conv.weight", b3_kernel);
    b3_norm.visit(prefix + ".b3.norm", f);
    f(prefix + ".fuse.conv.weight", fuse_kernel);
    out_norm.visit(prefix + ".out.norm", f);
  }
};

inline BlockParams<float> bind_block(const ParamStore& store, const std::string& prefix,
                                     std::size_t w) {
  const std::size_t wh = std::max<std::size_t>(w / 2, 1);
  return {store.get(prefix + ".b1.conv.weight", {3, 3, w, w}),
          bind_norm(store, prefix + ".b1.norm", w),
          store.get(prefix + ".b2.conv.weight", {3, 3, w, w}),
          bind_norm(store, prefix + ".b2.norm", w),
          store.get(prefix + ".b3.reduce.conv.weight", {1, 1, w, wh}),
          bind_norm(store, prefix + ".b3.reduce.norm", wh),
          store.get(prefix + ".b3.conv.weight", {3, 3, wh, w}),
          bind_norm(store, prefix + ".b3.norm", w),
          store.get(prefix + ".fuse.conv.weight", {1, 1, 3 * w, w}),
          bind_norm(store, prefix + ".out.norm", w)};
}

template <typename Scalar>
struct BlockCache {
  Tensor<Scalar> x;
  Tensor<Scalar> h1, n1, a1;
  Tensor<Scalar> h2, n2, a2;
  Tensor<Scalar> hr, nr, ar;
  Tensor<Scalar> h3, n3, a3;
  Tensor<Scalar> cat;
  Tensor<Scalar> sum, ns;
};

template <typename Scalar>
Tensor<Scalar> basic_block(const Tensor<Scalar>& x, const BlockParams<Scalar>& p,
                           BlockCache<Scalar>* cache = nullptr) {
  if (x.rank() != 3 || x.extent(2) != p.b1_kernel.extent(2)) {
    throw DimensionError("basic_block: input " + Tensor<Scalar>::shape_string(x.shape()) +
                         " does not match block width " +
                         std::to_string(p.b1_kernel.extent(2)));
  }
  Tensor<Scalar> h1 = conv2d(x, p.b1_kernel, 1, 1, 1);
  Tensor<Scalar> n1 = apply_norm(h1, p.b1_norm);
  Tensor<Scalar> a1 = relu(n1);
  Tensor<Scalar> h2 = conv2d(x, p.b2_kernel, 1, 2, 2);
  Tensor<Scalar> n2 = apply_norm(h2, p.b2_norm);
  Tensor<Scalar> a2 = relu(n2);
  Tensor<Scalar> hr = conv2d(x, p.b3_reduce_kernel, 1, 1, 0);
  Tensor<Scalar> nr = apply_norm(hr, p.b3_reduce_norm);
  Tensor<Scalar> ar = relu(nr);
  Tensor<Scalar> h3 = conv2d(ar, p.b3_kernel, 1, 1, 1);
  Tensor<Scalar> n3 = apply_norm(h3, p.b3_norm);
  Tensor<Scalar> a3 = relu(n3);
  Tensor<Scalar> cat = concat_channels<Scalar>({&a1, &a2, &a3});
  Tensor<Scalar> ftemp = conv2d(cat, p.fuse_kernel, 1, 1, 0);
  Tensor<Scalar> sum = add(ftemp, x);
  Tensor<Scalar> ns = apply_norm(sum, p.out_norm);
  Tensor<Scalar> out = relu(ns);
  if (cache) {
    cache->x = x;
    cache->h1 = std::move(h1); cache->n1 = std::move(n1); cache->a1 = std::move(a1);
    cache->h2 = std::move(h2); cache->n2 = std::move(n2); cache->a2 = std::move(a2);
    cache->hr = std::move(hr); cache->nr = std::move(nr); cache->ar = std::move(ar);
    cache->h3 = std::move(h3); cache->n3 = std::move(n3); cache->a3 = std::move(a3);
    cache->cat = std::move(cat);
    cache->sum = std::move(sum); cache->ns = std::move(ns);
  }
  return out;
}

template <typename Scalar>
struct BlockGrads {
  BlockParams<Scalar> p;  // same layout as the parameters
  Tensor<Scalar> gx;
};

template <typename Scalar>
BlockGrads<Scalar> basic_block_backward(const BlockParams<Scalar>& p,
                                        const BlockCache<Scalar>& c,
                                        const Tensor<Scalar>& gy) {
  BlockGrads<Scalar> g;
  Tensor<Scalar> gns = relu_backward(c.ns, gy);
  ChannelNormGrad<Scalar> gout = channel_norm_backward(
      c.sum, p.out_norm.scale, p.out_norm.running_mean, p.out_norm.running_var, gns);
  g.p.out_norm.scale = std::move(gout.gscale);
  g.p.out_norm.shift = std::move(gout.gshift);
  // sum = ftemp + x
  Tensor<Scalar>& gsum = gout.gx;
  Conv2dGrad<Scalar> gfuse = conv2d_backward(c.cat, p.fuse_kernel, 1, 1, 0, gsum);
  g.p.fuse_kernel = std::move(gfuse.gkernel);
  const std::size_t w = c.x.extent(2);
  std::vector<Tensor<Scalar>> gparts = split_channels(gfuse.gx, {w, w, w});

  auto branch_back = [](const Tensor<Scalar>& n, const Tensor<Scalar>& h,
                        const NormParams<Scalar>& np, const Tensor<Scalar>& ga,
                        NormParams<Scalar>& gnp) {
    Tensor<Scalar> gn = relu_backward(n, ga);
    ChannelNormGrad<Scalar> gc =
        channel_norm_backward(h, np.scale, np.running_mean, np.running_var, gn);
    gnp.scale = std::move(gc.gscale);
    gnp.shift = std::move(gc.gshift);
    return std::move(gc.gx);
  };

  Tensor<Scalar> gh1 = branch_back(c.n1, c.h1, p.b1_norm, gparts[0], g.p.b1_norm);
  Conv2dGrad<Scalar> gc1 = conv2d_backward(c.x, p.b1_kernel, 1, 1, 1, gh1);
  g.p.b1_kernel = std::move(gc1.gkernel);

  Tensor<Scalar> gh2 = branch_back(c.n2, c.h2, p.b2_norm, gparts[1], g.p.b2_norm);
  Conv2dGrad<Scalar> gc2 = conv2d_backward(c.x, p.b2_kernel, 1, 2, 2, gh2);
  g.p.b2_kernel = std::move(gc2.gkernel);

  Tensor<Scalar> gh3 = branch_back(c.n3, c.h3, p.b3_norm, gparts[2], g.p.b3_norm);
  Conv2dGrad<Scalar> gc3 = conv2d_backward(c.ar, p.b3_kernel, 1, 1, 1, gh3);
  g.p.b3_kernel = std::move(gc3.gkernel);
  Tensor<Scalar> ghr = branch_back(c.nr, c.hr, p.b3_reduce_norm, gc3.gx, g.p.b3_reduce_norm);
  Conv2dGrad<Scalar> gcr = conv2d_backward(c.x, p.b3_reduce_kernel, 1, 1, 0, ghr);
  g.p.b3_reduce_kernel = std::move(gcr.gkernel);

  g.gx = std::move(gsum);  // residual path
  for (std::size_t i = 0; i < g.gx.size(); ++i) {
    g.gx[i] += gc1.gx[i] + gc2.gx[i] + gcr.gx[i];
  }
  return g;
}

/// One backbone stage: an optional strided transition conv (present whenever
/// the stage changes resolution or width) followed by its blocks.
template <typename Scalar>
struct StageParams {
  std::size_t stride = 1;
  std::size_t width = 0;
  std::optional<Tensor<Scalar>> transition_kernel;  // [3,3,w_in,w]
  std::optional<NormParams<Scalar>> transition_norm;
  std::vector<BlockParams<Scalar>> blocks;

  template <typename To>
  StageParams<To> cast() const {
    StageParams<To> out;
    out.stride = stride;
    out.width = width;
    if (transition_kernel) out.transition_kernel = transition_kernel->template cast<To>();
    if (transition_norm) out.transition_norm = transition_norm->template cast<To>();
    for (const auto& b : blocks) out.blocks.push_back(b.template cast<To>());
    return out;
  }
};

inline StageParams<float> bind_stage(const ParamStore& store, const std::string& prefix,
                                     std::size_t w_in, std::size_t w, std::size_t stride,
                                     std::size_t depth) {
  StageParams<float> stage;
  stage.stride = stride;
  stage.width = w;
  if (stride != 1 || w != w_in) {
    stage.transition_kernel = store.get(prefix + ".transition.conv.weight", {3, 3, w_in, w});
    stage.transition_norm = bind_norm(store, prefix + ".transition.norm", w);
  }
  for (std::size_t j = 0; j < depth; ++j) {
    stage.blocks.push_back(bind_block(store, prefix + ".block" + std::to_string(j + 1), w));
  }
  return stage;
}

/// Carry the previous stage output into this stage's geometry (identity when
/// the stage has no transition).
template <typename Scalar>
Tensor<Scalar> stage_transition(const Tensor<Scalar>& x, const StageParams<Scalar>& stage) {
  if (!stage.transition_kernel) return x;
  Tensor<Scalar> h = conv2d(x, *stage.transition_kernel, stage.stride, 1, 1);
  return relu(apply_norm(h, *stage.transition_norm));
}

template <typename Scalar>
Tensor<Scalar> stage_blocks(const Tensor<Scalar>& t, const StageParams<Scalar>& stage) {
  Tensor<Scalar> y = t;
  for (const BlockParams<Scalar>& b : stage.blocks) y = basic_block(y, b);
  return y;
}

/// Chain every stage directly and return each stage's block output, finest
/// first.
template <typename Scalar>
std::vector<Tensor<Scalar>> run_backbone(const Tensor<Scalar>& f_g0,
                                         const std::vector<StageParams<Scalar>>& stages) {
  if (stages.empty()) throw ConfigError("run_backbone: no stages configured");
  std::vector<Tensor<Scalar>> outputs;
  outputs.reserve(stages.size());
  Tensor<Scalar> x = f_g0;
  for (const StageParams<Scalar>& stage : stages) {
    Tensor<Scalar> t = stage_transition(x, stage);
    x = stage_blocks(t, stage);
    outputs.push_back(x);
  }
  return outputs;
}

}  // namespace rangeseg
