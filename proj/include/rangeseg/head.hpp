#pragma once

#include <vector>

#include "rangeseg/layers.hpp"
#include "rangeseg/projection.hpp"

namespace rangeseg {

/// Fusion head: multi-stage aggregation on both paths plus the classifier.
template <typename Scalar>
struct HeadParams {
  MlpParams<Scalar> point;        // [K*C -> C -> C]
  Tensor<Scalar> image_kernel;    // [1,1,sum(w_i),C]
  NormParams<Scalar> image_norm;
  MlpParams<Scalar> m1;           // gathered image features
  MlpParams<Scalar> m2;           // fused point features
  LinearParams<Scalar> classifier;  // [C, K_cls]

  template <typename To>
  HeadParams<To> cast() const {
    return {point.template cast<To>(), image_kernel.template cast<To>(),
            image_norm.template cast<To>(), m1.template cast<To>(),
            m2.template cast<To>(), classifier.template cast<To>()};
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    point.visit(prefix + ".point", f);
    f(prefix + ".image.conv.weight", image_kernel);
    image_norm.visit(prefix + ".image.norm", f);
    m1.visit(prefix + ".m1", f);
    m2.visit(prefix + ".m2", f);
    classifier.visit(prefix + ".classifier", f);
  }
};

inline HeadParams<float> bind_head(const ParamStore& store, std::size_t stages,
                                   std::size_t c, std::size_t width_sum,
                                   std::size_t num_classes) {
  return {bind_mlp(store, "head.point", stages * c, c, c),
          store.get("head.image.conv.weight", {1, 1, width_sum, c}),
          bind_norm(store, "head.image.norm", c),
          bind_mlp(store, "head.m1", c, c, c),
          bind_mlp(store, "head.m2", c, c, c),
          bind_linear(store, "head.classifier", c, num_classes)};
}

// ---------------------------------------------------------------------------
// point path: concat across stages, then MLP
// ---------------------------------------------------------------------------

template <typename Scalar>
struct PointPathCache {
  std::vector<std::size_t> widths;
  Tensor<Scalar> cat;
  MlpCache<Scalar> mlp;
};

template <typename Scalar>
Tensor<Scalar> fuse_point_path(const std::vector<Tensor<Scalar>>& stage_point_feats,
                               const HeadParams<Scalar>& p,
                               PointPathCache<Scalar>* cache = nullptr) {
  if (stage_point_feats.empty()) throw DimensionError("fuse_point_path: no stages");
  const std::size_t n = stage_point_feats[0].extent(0);
  std::vector<const Tensor<Scalar>*> parts;
  std::vector<std::size_t> widths;
  for (const auto& t : stage_point_feats) {
    if (t.extent(0) != n) {
      throw DimensionError("fuse_point_path: stage row counts differ (" +
                           std::to_string(t.extent(0)) + " vs " + std::to_string(n) + ")");
    }
    parts.push_back(&t);
    widths.push_back(t.extent(1));
  }
  Tensor<Scalar> cat = concat_channels(parts);
  Tensor<Scalar> y = mlp_forward(cat, p.point, cache ? &cache->mlp : nullptr);
  if (cache) {
    cache->widths = std::move(widths);
    cache->cat = std::move(cat);
  }
  return y;
}

// ---------------------------------------------------------------------------
// image path: resize every stage map to full resolution, concat, 1x1 conv
// ---------------------------------------------------------------------------

template <typename Scalar>
struct ImagePathCache {
  std::vector<std::pair<std::size_t, std::size_t>> stage_sizes;
  std::vector<std::size_t> widths;
  Tensor<Scalar> cat;
  Tensor<Scalar> h, n;
};

template <typename Scalar>
Tensor<Scalar> fuse_image_path(const std::vector<Tensor<Scalar>>& stage_maps, std::size_t h,
                               std::size_t w, const HeadParams<Scalar>& p,
                               ImagePathCache<Scalar>* cache = nullptr) {
  if (stage_maps.empty()) throw DimensionError("fuse_image_path: no stages");
  std::vector<Tensor<Scalar>> resized;
  resized.reserve(stage_maps.size());
  std::vector<const Tensor<Scalar>*> parts;
  std::vector<std::size_t> widths;
  std::vector<std::pair<std::size_t, std::size_t>> sizes;
  for (const auto& m : stage_maps) {
    sizes.emplace_back(m.extent(0), m.extent(1));
    widths.push_back(m.extent(2));
    resized.push_back(bilinear_resize(m, h, w));
  }
  for (const auto& m : resized) parts.push_back(&m);
  Tensor<Scalar> cat = concat_channels(parts);
  Tensor<Scalar> hc = conv2d(cat, p.image_kernel, 1, 1, 0);
  Tensor<Scalar> n = apply_norm(hc, p.image_norm);
  Tensor<Scalar> y = relu(n);
  if (cache) {
    cache->stage_sizes = std::move(sizes);
    cache->widths = std::move(widths);
    cache->cat = std::move(cat);
    cache->h = std::move(hc);
    cache->n = std::move(n);
  }
  return y;
}

// ---------------------------------------------------------------------------
// logits and prediction
// ---------------------------------------------------------------------------

template <typename Scalar>
struct LogitsCache {
  Tensor<Scalar> gathered;
  MlpCache<Scalar> m1;
  Tensor<Scalar> s;     // m1 output + point path
  MlpCache<Scalar> m2;
  Tensor<Scalar> feat;  // m2 output + initial point features
};

/// classifier(MLP(MLP(unflatten(F_g_out)) + F_p_out) + F_p0) -> [N, K_cls].
template <typename Scalar>
Tensor<Scalar> logits(const Tensor<Scalar>& f_g_out, const Tensor<Scalar>& f_p_out,
                      const Tensor<Scalar>& f_p0, const ProjectionIndex& index,
                      const HeadParams<Scalar>& p, LogitsCache<Scalar>* cache = nullptr) {
  Tensor<Scalar> gathered = unflatten(f_g_out, index);
  Tensor<Scalar> m1v = mlp_forward(gathered, p.m1, cache ? &cache->m1 : nullptr);
  Tensor<Scalar> s = add(m1v, f_p_out);
  Tensor<Scalar> m2v = mlp_forward(s, p.m2, cache ? &cache->m2 : nullptr);
  Tensor<Scalar> feat = add(m2v, f_p0);
  Tensor<Scalar> scores = apply_linear(feat, p.classifier);
  if (cache) {
    cache->gathered = std::move(gathered);
    cache->s = std::move(s);
    cache->feat = std::move(feat);
  }
  return scores;
}

/// Row-wise argmax; ties break to the lowest class index.
template <typename Scalar>
std::vector<std::uint32_t> predict(const Tensor<Scalar>& scores) {
  if (scores.rank() != 2 || scores.extent(1) == 0) {
    throw DimensionError("predict: expected [N,K] scores with K >= 1, got " +
                         Tensor<Scalar>::shape_string(scores.shape()));
  }
  const std::size_t n = scores.extent(0), k = scores.extent(1);
  std::vector<std::uint32_t> labels(n);
  for (std::size_t r = 0; r < n; ++r) {
    const Scalar* row = &scores.at(r, 0);
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (row[c] > row[best]) best = c;
    }
    labels[r] = static_cast<std::uint32_t>(best);
  }
  return labels;
}

// ---------------------------------------------------------------------------
// combined head (for the gradient-check path)
// ---------------------------------------------------------------------------

template <typename Scalar>
struct HeadCache {
  PointPathCache<Scalar> point;
  ImagePathCache<Scalar> image;
  LogitsCache<Scalar> lg;
};

template <typename Scalar>
Tensor<Scalar> head_forward(const std::vector<Tensor<Scalar>>& stage_point_feats,
                            const std::vector<Tensor<Scalar>>& stage_maps,
                            const Tensor<Scalar>& f_p0, const ProjectionIndex& index,
                            const HeadParams<Scalar>& p, HeadCache<Scalar>* cache = nullptr) {
  Tensor<Scalar> f_p_out =
      fuse_point_path(stage_point_feats, p, cache ? &cache->point : nullptr);
  Tensor<Scalar> f_g_out = fuse_image_path(stage_maps, index.height(), index.width(), p,
                                           cache ? &cache->image : nullptr);
  return logits(f_g_out, f_p_out, f_p0, index, p, cache ? &cache->lg : nullptr);
}

template <typename Scalar>
struct HeadGrads {
  MlpGrads<Scalar> point;
  Tensor<Scalar> image_kernel;
  NormParams<Scalar> image_norm;
  MlpGrads<Scalar> m1;
  MlpGrads<Scalar> m2;
  LinearParams<Scalar> classifier;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    point.visit(prefix + ".point", f);
    f(prefix + ".image.conv.weight", image_kernel);
    image_norm.visit(prefix + ".image.norm", f);
    m1.visit(prefix + ".m1", f);
    m2.visit(prefix + ".m2", f);
    classifier.visit(prefix + ".classifier", f);
  }
};

template <typename Scalar>
HeadGrads<Scalar> head_backward(const HeadParams<Scalar>& p, const HeadCache<Scalar>& c,
                                const ProjectionIndex& index, const Tensor<Scalar>& gscores) {
  HeadGrads<Scalar> g;
  LinearGrad<Scalar> gcls = linear_backward(c.lg.feat, p.classifier.weight, gscores);
  g.classifier = {std::move(gcls.gweight), std::move(gcls.gbias)};
  // feat = m2(s) + f_p0
  g.m2 = mlp_backward(c.lg.m2, p.m2, gcls.gx);
  // s = m1(gathered) + f_p_out
  g.m1 = mlp_backward(c.lg.m1, p.m1, g.m2.gx);
  // point path receives d(s)
  g.point = mlp_backward(c.point.mlp, p.point, g.m2.gx);
  // image path receives d(gathered) through the gather
  Tensor<Scalar> g_f_g_out = unflatten_backward(g.m1.gx, index);
  Tensor<Scalar> gn = relu_backward(c.image.n, g_f_g_out);
  ChannelNormGrad<Scalar> gnorm = channel_norm_backward(
      c.image.h, p.image_norm.scale, p.image_norm.running_mean, p.image_norm.running_var, gn);
  g.image_norm.scale = std::move(gnorm.gscale);
  g.image_norm.shift = std::move(gnorm.gshift);
  Conv2dGrad<Scalar> gconv = conv2d_backward(c.image.cat, p.image_kernel, 1, 1, 0, gnorm.gx);
  g.image_kernel = std::move(gconv.gkernel);
  return g;
}

}  // namespace rangeseg
