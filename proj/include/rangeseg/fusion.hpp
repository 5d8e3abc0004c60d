#pragma once

#include "rangeseg/layers.hpp"
#include "rangeseg/projection.hpp"

namespace rangeseg {

/// Depth-guided attention fusion parameters for one stage. The attention
/// linears meet in a shared latent width C_a; `out` maps back to the point
/// feature width C.
template <typename Scalar>
struct FusionParams {
  LinearParams<Scalar> vg, kg;    // group side: [w, C_a]
  LinearParams<Scalar> vp, kp;    // point side: [C, C_a]
  LinearParams<Scalar> q;         // depth query: [1, C_a]
  LinearParams<Scalar> out;       // [C_a, C]
  Tensor<Scalar> refuse_kernel;   // [1,1,C+w,w]
  NormParams<Scalar> refuse_norm;
  Tensor<Scalar> enh1_kernel;     // [3,3,w,w]
  NormParams<Scalar> enh1_norm;
  Tensor<Scalar> enh2_kernel;     // [3,3,w,w]
  NormParams<Scalar> enh2_norm;   // followed by sigmoid, not ReLU

  template <typename To>
  FusionParams<To> cast() const {
    return {vg.template cast<To>(), kg.template cast<To>(), vp.template cast<To>(),
            kp.template cast<To>(), q.template cast<To>(), out.template cast<To>(),
            refuse_kernel.template cast<To>(), refuse_norm.template cast<To>(),
            enh1_kernel.template cast<To>(), enh1_norm.template cast<To>(),
            enh2_kernel.template cast<To>(), enh2_norm.template cast<To>()};
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    vg.visit(prefix + ".vg", f);
    kg.visit(prefix + ".kg", f);
    vp.visit(prefix + ".vp", f);
    kp.visit(prefix + ".kp", f);
    q.visit(prefix + ".q", f);
    out.visit(prefix + ".out", f);
    f(prefix + ".refuse.conv.weight", refuse_kernel);
    refuse_norm.visit(prefix + ".refuse.norm", f);
    f(prefix + ".enh1.conv.weight", enh1_kernel);
    enh1_norm.visit(prefix + ".enh1.norm", f);
    f(prefix + ".enh2.conv.weight", enh2_kernel);
    enh2_norm.visit(prefix + ".enh2.norm", f);
  }
};

inline FusionParams<float> bind_fusion(const ParamStore& store, const std::string& prefix,
                                       std::size_t c, std::size_t ca, std::size_t w) {
  return {bind_linear(store, prefix + ".vg", w, ca),
          bind_linear(store, prefix + ".kg", w, ca),
          bind_linear(store, prefix + ".vp", c, ca),
          bind_linear(store, prefix + ".kp", c, ca),
          bind_linear(store, prefix + ".q", 1, ca),
          bind_linear(store, prefix + ".out", ca, c),
          store.get(prefix + ".refuse.conv.weight", {1, 1, c + w, w}),
          bind_norm(store, prefix + ".refuse.norm", w),
          store.get(prefix + ".enh1.conv.weight", {3, 3, w, w}),
          bind_norm(store, prefix + ".enh1.norm", w),
          store.get(prefix + ".enh2.conv.weight", {3, 3, w, w}),
          bind_norm(store, prefix + ".enh2.norm", w)};
}

// ---------------------------------------------------------------------------
// depth attention: per-point channel attention with a depth-derived query
// ---------------------------------------------------------------------------

template <typename Scalar>
struct AttentionCache {
  Tensor<Scalar> f_g, f_p, depth;
  Tensor<Scalar> vg, kg, vp, kp, q;
  Tensor<Scalar> wg, wp;
  Tensor<Scalar> fuse;
};

/// Row-local attention: the depth query modulates group and point keys, the
/// channel-axis softmax turns each into per-point channel weights, and the
/// two weighted values are summed and projected.
template <typename Scalar>
Tensor<Scalar> depth_attention(const Tensor<Scalar>& f_g_gathered, const Tensor<Scalar>& f_p,
                               const Tensor<Scalar>& depth, const FusionParams<Scalar>& p,
                               AttentionCache<Scalar>* cache = nullptr) {
  const std::size_t n = f_p.extent(0);
  if (f_g_gathered.rank() != 2 || f_g_gathered.extent(0) != n || depth.rank() != 2 ||
      depth.extent(0) != n || depth.extent(1) != 1) {
    throw DimensionError("depth_attention: row counts disagree (group " +
                         Tensor<Scalar>::shape_string(f_g_gathered.shape()) + ", point " +
                         Tensor<Scalar>::shape_string(f_p.shape()) + ", depth " +
                         Tensor<Scalar>::shape_string(depth.shape()) + ")");
  }
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (!std::isfinite(static_cast<double>(depth[i]))) {
      throw ValueError("depth_attention: non-finite depth at point " + std::to_string(i));
    }
  }
  Tensor<Scalar> vg = apply_linear(f_g_gathered, p.vg);
  Tensor<Scalar> kg = apply_linear(f_g_gathered, p.kg);
  Tensor<Scalar> vp = apply_linear(f_p, p.vp);
  Tensor<Scalar> kp = apply_linear(f_p, p.kp);
  Tensor<Scalar> q = apply_linear(depth, p.q);
  Tensor<Scalar> wg = softmax(hadamard(q, kg), 1);
  Tensor<Scalar> wp = softmax(hadamard(q, kp), 1);
  Tensor<Scalar> fuse = add(hadamard(wg, vg), hadamard(wp, vp));
  Tensor<Scalar> y = apply_linear(fuse, p.out);
  if (cache) {
    cache->f_g = f_g_gathered;
    cache->f_p = f_p;
    cache->depth = depth;
    cache->vg = std::move(vg);
    cache->kg = std::move(kg);
    cache->vp = std::move(vp);
    cache->kp = std::move(kp);
    cache->q = std::move(q);
    cache->wg = std::move(wg);
    cache->wp = std::move(wp);
    cache->fuse = std::move(fuse);
  }
  return y;
}

template <typename Scalar>
struct AttentionGrads {
  LinearParams<Scalar> vg, kg, vp, kp, q, out;
  Tensor<Scalar> g_f_g;
  Tensor<Scalar> g_f_p;
  Tensor<Scalar> g_depth;
};

template <typename Scalar>
AttentionGrads<Scalar> depth_attention_backward(const FusionParams<Scalar>& p,
                                                const AttentionCache<Scalar>& c,
                                                const Tensor<Scalar>& gy) {
  AttentionGrads<Scalar> g;
  LinearGrad<Scalar> gout = linear_backward(c.fuse, p.out.weight, gy);
  g.out = {std::move(gout.gweight), std::move(gout.gbias)};
  const Tensor<Scalar>& gfuse = gout.gx;

  Tensor<Scalar> gwg = hadamard(gfuse, c.vg);
  Tensor<Scalar> gvg_t = hadamard(gfuse, c.wg);
  Tensor<Scalar> gwp = hadamard(gfuse, c.vp);
  Tensor<Scalar> gvp_t = hadamard(gfuse, c.wp);

  Tensor<Scalar> gsg = softmax_backward(c.wg, gwg, 1);
  Tensor<Scalar> gsp = softmax_backward(c.wp, gwp, 1);
  Tensor<Scalar> gkg_t = hadamard(gsg, c.q);
  Tensor<Scalar> gkp_t = hadamard(gsp, c.q);
  Tensor<Scalar> gq_t = add(hadamard(gsg, c.kg), hadamard(gsp, c.kp));

  LinearGrad<Scalar> gvg = linear_backward(c.f_g, p.vg.weight, gvg_t);
  LinearGrad<Scalar> gkg = linear_backward(c.f_g, p.kg.weight, gkg_t);
  LinearGrad<Scalar> gvp = linear_backward(c.f_p, p.vp.weight, gvp_t);
  LinearGrad<Scalar> gkp = linear_backward(c.f_p, p.kp.weight, gkp_t);
  LinearGrad<Scalar> gq = linear_backward(c.depth, p.q.weight, gq_t);
  g.vg = {std::move(gvg.gweight), std::move(gvg.gbias)};
  g.kg = {std::move(gkg.gweight), std::move(gkg.gbias)};
  g.vp = {std::move(gvp.gweight), std::move(gvp.gbias)};
  g.kp = {std::move(gkp.gweight), std::move(gkp.gbias)};
  g.q = {std::move(gq.gweight), std::move(gq.gbias)};
  g.g_f_g = add(gvg.gx, gkg.gx);
  g.g_f_p = add(gvp.gx, gkp.gx);
  g.g_depth = std::move(gq.gx);
  return g;
}

// ---------------------------------------------------------------------------
// re-projection fusion (point features scattered back onto the stage grid)
// ---------------------------------------------------------------------------

template <typename Scalar>
struct ReprojectCache {
  Tensor<Scalar> cat;  // [h,w,C+w]: scattered point features ; stage map
  Tensor<Scalar> h, n;
};

/// sigma(conv1x1(concat[flatten(F_p, mean), stage_map])). The index must be at
/// the stage map's resolution.
template <typename Scalar>
Tensor<Scalar> reproject_fuse(const Tensor<Scalar>& f_p, const Tensor<Scalar>& stage_map,
                              const ProjectionIndex& index, const FusionParams<Scalar>& p,
                              ReprojectCache<Scalar>* cache = nullptr) {
  if (stage_map.rank() != 3 || stage_map.extent(0) != index.height() ||
      stage_map.extent(1) != index.width()) {
    throw DimensionError("reproject_fuse: stage map " +
                         Tensor<Scalar>::shape_string(stage_map.shape()) +
                         " does not match index resolution " +
                         std::to_string(index.height()) + "x" +
                         std::to_string(index.width()));
  }
  Tensor<Scalar> img = flatten(f_p, index, Reduce::kMean);
  Tensor<Scalar> cat = concat_channels(img, stage_map);
  Tensor<Scalar> h = conv2d(cat, p.refuse_kernel, 1, 1, 0);
  Tensor<Scalar> n = apply_norm(h, p.refuse_norm);
  Tensor<Scalar> y = relu(n);
  if (cache) {
    cache->cat = std::move(cat);
    cache->h = std::move(h);
    cache->n = std::move(n);
  }
  return y;
}

template <typename Scalar>
struct ReprojectGrads {
  Tensor<Scalar> refuse_kernel;
  NormParams<Scalar> refuse_norm;
  Tensor<Scalar> g_f_p;
  Tensor<Scalar> g_stage_map;
};

template <typename Scalar>
ReprojectGrads<Scalar> reproject_fuse_backward(const FusionParams<Scalar>& p,
                                               const ReprojectCache<Scalar>& c,
                                               const ProjectionIndex& index,
                                               const Tensor<Scalar>& gy) {
  ReprojectGrads<Scalar> g;
  Tensor<Scalar> gn = relu_backward(c.n, gy);
  ChannelNormGrad<Scalar> gnorm = channel_norm_backward(
      c.h, p.refuse_norm.scale, p.refuse_norm.running_mean, p.refuse_norm.running_var, gn);
  g.refuse_norm.scale = std::move(gnorm.gscale);
  g.refuse_norm.shift = std::move(gnorm.gshift);
  Conv2dGrad<Scalar> gconv = conv2d_backward(c.cat, p.refuse_kernel, 1, 1, 0, gnorm.gx);
  g.refuse_kernel = std::move(gconv.gkernel);
  const std::size_t total_c = c.cat.extent(2);
  const std::size_t stage_c = p.refuse_kernel.extent(3);
  std::vector<Tensor<Scalar>> parts = split_channels(gconv.gx, {total_c - stage_c, stage_c});
  g.g_f_p = flatten_mean_backward(parts[0], index);
  g.g_stage_map = std::move(parts[1]);
  return g;
}

// ---------------------------------------------------------------------------
// residual-attentive enhancement
// ---------------------------------------------------------------------------

template <typename Scalar>
struct EnhanceCache {
  Tensor<Scalar> fused;
  Tensor<Scalar> h1, n1, a1, h2, n2, gate;
};

/// base + sigmoid(norm(conv3x3(relu(norm(conv3x3(fused)))))) * fused.
template <typename Scalar>
Tensor<Scalar> residual_enhance(const Tensor<Scalar>& fused, const Tensor<Scalar>& base,
                                const FusionParams<Scalar>& p,
                                EnhanceCache<Scalar>* cache = nullptr) {
  if (!fused.same_shape(base)) {
    throw DimensionError("residual_enhance: fused " +
                         Tensor<Scalar>::shape_string(fused.shape()) + " vs base " +
                         Tensor<Scalar>::shape_string(base.shape()));
  }
  Tensor<Scalar> h1 = conv2d(fused, p.enh1_kernel, 1, 1, 1);
  Tensor<Scalar> n1 = apply_norm(h1, p.enh1_norm);
  Tensor<Scalar> a1 = relu(n1);
  Tensor<Scalar> h2 = conv2d(a1, p.enh2_kernel, 1, 1, 1);
  Tensor<Scalar> n2 = apply_norm(h2, p.enh2_norm);
  Tensor<Scalar> gate = sigmoid(n2);
  Tensor<Scalar> y = add(base, hadamard(gate, fused));
  if (cache) {
    cache->fused = fused;
    cache->h1 = std::move(h1); cache->n1 = std::move(n1); cache->a1 = std::move(a1);
    cache->h2 = std::move(h2); cache->n2 = std::move(n2);
    cache->gate = std::move(gate);
  }
  return y;
}

template <typename Scalar>
struct EnhanceGrads {
  Tensor<Scalar> enh1_kernel;
  NormParams<Scalar> enh1_norm;
  Tensor<Scalar> enh2_kernel;
  NormParams<Scalar> enh2_norm;
  Tensor<Scalar> g_fused;
  Tensor<Scalar> g_base;
};

template <typename Scalar>
EnhanceGrads<Scalar> residual_enhance_backward(const FusionParams<Scalar>& p,
                                               const EnhanceCache<Scalar>& c,
                                               const Tensor<Scalar>& gy) {
  EnhanceGrads<Scalar> g;
  g.g_base = gy;
  Tensor<Scalar> ggate = hadamard(gy, c.fused);
  Tensor<Scalar> gfused_direct = hadamard(gy, c.gate);
  Tensor<Scalar> gn2 = sigmoid_backward(c.gate, ggate);
  ChannelNormGrad<Scalar> gnorm2 = channel_norm_backward(
      c.h2, p.enh2_norm.scale, p.enh2_norm.running_mean, p.enh2_norm.running_var, gn2);
  g.enh2_norm.scale = std::move(gnorm2.gscale);
  g.enh2_norm.shift = std::move(gnorm2.gshift);
  Conv2dGrad<Scalar> gc2 = conv2d_backward(c.a1, p.enh2_kernel, 1, 1, 1, gnorm2.gx);
  g.enh2_kernel = std::move(gc2.gkernel);
  Tensor<Scalar> gn1 = relu_backward(c.n1, gc2.gx);
  ChannelNormGrad<Scalar> gnorm1 = channel_norm_backward(
      c.h1, p.enh1_norm.scale, p.enh1_norm.running_mean, p.enh1_norm.running_var, gn1);
  g.enh1_norm.scale = std::move(gnorm1.gscale);
  g.enh1_norm.shift = std::move(gnorm1.gshift);
  Conv2dGrad<Scalar> gc1 = conv2d_backward(c.fused, p.enh1_kernel, 1, 1, 1, gnorm1.gx);
  g.enh1_kernel = std::move(gc1.gkernel);
  g.g_fused = add(gfused_direct, gc1.gx);
  return g;
}

// ---------------------------------------------------------------------------
// full stage
// ---------------------------------------------------------------------------

template <typename Scalar>
struct FusionStageCache {
  Tensor<Scalar> stage_map_full;  // stage map resized to the full grid
  bool resized = false;
  AttentionCache<Scalar> attn;
  ReprojectCache<Scalar> reproject;
  EnhanceCache<Scalar> enhance;
};

template <typename Scalar>
struct FusionStageOut {
  Tensor<Scalar> f_p;  // updated point features [N, C]
  Tensor<Scalar> f_g;  // updated stage map [h', w', w]
};

/// One FFDFA stage. `base` carries the previous group features at this
/// stage's geometry (the transition output; the previous stage map itself
/// when the stage changes neither resolution nor width). `stage_map` is the
/// MB-FE output; `full_index`/`stage_index` are the projection index at full
/// and stage resolution.
template <typename Scalar>
FusionStageOut<Scalar> fusion_stage(const Tensor<Scalar>& f_p_prev, const Tensor<Scalar>& base,
                                    const Tensor<Scalar>& stage_map,
                                    const ProjectionIndex& full_index,
                                    const ProjectionIndex& stage_index,
                                    const Tensor<Scalar>& depth,
                                    const FusionParams<Scalar>& p,
                                    FusionStageCache<Scalar>* cache = nullptr) {
  const bool resized = stage_map.extent(0) != full_index.height() ||
                       stage_map.extent(1) != full_index.width();
  Tensor<Scalar> full_map =
      resized ? bilinear_resize(stage_map, full_index.height(), full_index.width())
              : stage_map;
  Tensor<Scalar> gathered = unflatten(full_map, full_index);
  FusionStageOut<Scalar> out;
  out.f_p = depth_attention(gathered, f_p_prev, depth, p, cache ? &cache->attn : nullptr);
  Tensor<Scalar> fused =
      reproject_fuse(out.f_p, stage_map, stage_index, p, cache ? &cache->reproject : nullptr);
  out.f_g = residual_enhance(fused, base, p, cache ? &cache->enhance : nullptr);
  if (cache) {
    cache->stage_map_full = std::move(full_map);
    cache->resized = resized;
  }
  return out;
}

template <typename Scalar>
struct FusionStageGrads {
  AttentionGrads<Scalar> attn;
  ReprojectGrads<Scalar> reproject;
  EnhanceGrads<Scalar> enhance;
  Tensor<Scalar> g_f_p_prev;
  Tensor<Scalar> g_base;
  Tensor<Scalar> g_stage_map;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    attn.vg.visit(prefix + ".vg", f);
    attn.kg.visit(prefix + ".kg", f);
    attn.vp.visit(prefix + ".vp", f);
    attn.kp.visit(prefix + ".kp", f);
    attn.q.visit(prefix + ".q", f);
    attn.out.visit(prefix + ".out", f);
    f(prefix + ".refuse.conv.weight", reproject.refuse_kernel);
    reproject.refuse_norm.visit(prefix + ".refuse.norm", f);
    f(prefix + ".enh1.conv.weight", enhance.enh1_kernel);
    enhance.enh1_norm.visit(prefix + ".enh1.norm", f);
    f(prefix + ".enh2.conv.weight", enhance.enh2_kernel);
    enhance.enh2_norm.visit(prefix + ".enh2.norm", f);
  }
};

template <typename Scalar>
FusionStageGrads<Scalar> fusion_stage_backward(const FusionParams<Scalar>& p,
                                               const FusionStageCache<Scalar>& c,
                                               const ProjectionIndex& full_index,
                                               const ProjectionIndex& stage_index,
                                               std::size_t stage_h, std::size_t stage_w,
                                               const Tensor<Scalar>& g_f_p_out,
                                               const Tensor<Scalar>& g_f_g_out) {
  FusionStageGrads<Scalar> g;
  g.enhance = residual_enhance_backward(p, c.enhance, g_f_g_out);
  g.g_base = g.enhance.g_base;
  g.reproject = reproject_fuse_backward(p, c.reproject, stage_index, g.enhance.g_fused);
  Tensor<Scalar> g_f_p_total = add(g_f_p_out, g.reproject.g_f_p);
  g.attn = depth_attention_backward(p, c.attn, g_f_p_total);
  g.g_f_p_prev = g.attn.g_f_p;
  Tensor<Scalar> g_full_map = unflatten_backward(g.attn.g_f_g, full_index);
  Tensor<Scalar> g_map_from_gather =
      c.resized ? bilinear_resize_backward(g_full_map, stage_h, stage_w)
                : std::move(g_full_map);
  g.g_stage_map = add(g.reproject.g_stage_map, g_map_from_gather);
  return g;
}

}  // namespace rangeseg
