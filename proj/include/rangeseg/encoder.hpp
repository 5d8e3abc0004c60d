#pragma once

#include <array>

#include "rangeseg/layers.hpp"
#include "rangeseg/projection.hpp"

namespace rangeseg {

/// GL-FFE parameters: the 10 -> C point embedding MLP plus the 2C -> C group
/// aggregation linear.
template <typename Scalar>
struct EncoderParams {
  MlpParams<Scalar> mlp;
  LinearParams<Scalar> agg;

  template <typename To>
  EncoderParams<To> cast() const {
    return {mlp.template cast<To>(), agg.template cast<To>()};
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    mlp.visit(prefix + ".mlp", f);
    agg.visit(prefix + ".agg", f);
  }
};

inline EncoderParams<float> bind_encoder(const ParamStore& store, std::size_t c) {
  return {bind_mlp(store, "encoder.mlp", 10, c, c), bind_linear(store, "encoder.agg", 2 * c, c)};
}

/// Virtual center of one cell: the mean (x, y, z, intensity, range) over its
/// member points. Throws ValueError on an empty cell.
inline std::array<double, 5> group_center(const RawScan& scan, const ProjectionIndex& index,
                                          std::size_t v, std::size_t u) {
  const auto members = index.cell(v, u);
  if (members.empty()) {
    throw ValueError("group_center: empty cell (" + std::to_string(v) + "," +
                     std::to_string(u) + ")");
  }
  std::array<double, 5> acc{};
  for (std::uint32_t m : members) {
    const Point& p = scan.points[m];
    acc[0] += p.x;
    acc[1] += p.y;
    acc[2] += p.z;
    acc[3] += p.intensity;
    acc[4] += index.range_of(m);
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  for (double& a : acc) a *= inv;
  return acc;
}

/// Ten-dimensional point descriptor: the raw (x, y, z, I, depth) 5-vector
/// followed by its offset from the cell's virtual center.
inline TensorF encode_points(const RawScan& scan, const ProjectionIndex& index) {
  if (scan.size() != index.point_count()) {
    throw DimensionError("encode_points: scan has " + std::to_string(scan.size()) +
                         " points but index was built for " +
                         std::to_string(index.point_count()));
  }
  TensorF features({scan.size(), 10});
  for (std::size_t v = 0; v < index.height(); ++v) {
    for (std::size_t u = 0; u < index.width(); ++u) {
      const auto members = index.cell(v, u);
      if (members.empty()) continue;
      const std::array<double, 5> center = group_center(scan, index, v, u);
      for (std::uint32_t m : members) {
        const Point& p = scan.points[m];
        const double raw[5] = {p.x, p.y, p.z, p.intensity, index.range_of(m)};
        float* row = &features.at(m, 0);
        for (std::size_t d = 0; d < 5; ++d) {
          row[d] = static_cast<float>(raw[d]);
          row[5 + d] = static_cast<float>(raw[d] - center[d]);
        }
      }
    }
  }
  return features;
}

/// Point embedding (the initial per-point features): row-independent
/// 10 -> C -> C MLP.
template <typename Scalar>
Tensor<Scalar> embed_points(const Tensor<Scalar>& features, const EncoderParams<Scalar>& params,
                            MlpCache<Scalar>* cache = nullptr) {
  if (features.rank() != 2 || features.extent(1) != 10) {
    throw DimensionError("embed_points: expected [N,10] features, got " +
                         Tensor<Scalar>::shape_string(features.shape()));
  }
  return mlp_forward(features, params.mlp, cache);
}

template <typename Scalar>
struct AggregateCache {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> cells;  // non-empty (v, u)
  Tensor<Scalar> cat;   // [M, 2C] max;mean rows
  Tensor<Scalar> pre;   // [M, C] linear output, pre-relu
};

/// Group aggregation: per non-empty cell, concat(max, mean) of member rows,
/// then linear + ReLU, scattered to the cell's pixel. Empty cells stay zero.
template <typename Scalar>
Tensor<Scalar> aggregate_groups(const Tensor<Scalar>& point_feats,
                                const ProjectionIndex& index,
                                const EncoderParams<Scalar>& params,
                                AggregateCache<Scalar>* cache = nullptr) {
  if (point_feats.rank() != 2 || point_feats.extent(0) != index.point_count()) {
    throw DimensionError("aggregate_groups: features " +
                         Tensor<Scalar>::shape_string(point_feats.shape()) +
                         " do not match index with " +
                         std::to_string(index.point_count()) + " points");
  }
  const std::size_t c = point_feats.extent(1);
  if (params.agg.weight.extent(0) != 2 * c) {
    throw DimensionError("aggregate_groups: aggregation weight expects " +
                         std::to_string(params.agg.weight.extent(0) / 2) + " channels, got " +
                         std::to_string(c));
  }
  std::vector<std::pair<std::uint32_t, std::uint32_t>> cells;
  cells.reserve(index.group_count());
  for (std::size_t v = 0; v < index.height(); ++v) {
    for (std::size_t u = 0; u < index.width(); ++u) {
      if (!index.cell(v, u).empty()) {
        cells.emplace_back(static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(u));
      }
    }
  }
  Tensor<Scalar> cat({cells.size(), 2 * c});
  std::vector<double> mean(c);
  for (std::size_t m = 0; m < cells.size(); ++m) {
    const auto members = index.cell(cells[m].first, cells[m].second);
    Scalar* row = &cat.at(m, 0);
    const Scalar* first = &point_feats.at(members[0], 0);
    std::copy(first, first + c, row);
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::uint32_t j : members) {
      const Scalar* src = &point_feats.at(j, 0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        if (src[ch] > row[ch]) row[ch] = src[ch];
        mean[ch] += static_cast<double>(src[ch]);
      }
    }
    const double inv = 1.0 / static_cast<double>(members.size());
    for (std::size_t ch = 0; ch < c; ++ch)
      row[c + ch] = static_cast<Scalar>(mean[ch] * inv);
  }
  Tensor<Scalar> pre = apply_linear(cat, params.agg);
  Tensor<Scalar> act = relu(pre);
  const std::size_t cout = params.agg.weight.extent(1);
  Tensor<Scalar> image({index.height(), index.width(), cout});
  for (std::size_t m = 0; m < cells.size(); ++m) {
    std::copy(&act.at(m, 0), &act.at(m, 0) + cout,
              &image.at(cells[m].first, cells[m].second, 0));
  }
  if (cache) {
    cache->cells = std::move(cells);
    cache->cat = std::move(cat);
    cache->pre = std::move(pre);
  }
  return image;
}

template <typename Scalar>
struct AggregateGrads {
  LinearParams<Scalar> agg;
  Tensor<Scalar> gfeatures;
};

template <typename Scalar>
AggregateGrads<Scalar> aggregate_groups_backward(const Tensor<Scalar>& point_feats,
                                                 const ProjectionIndex& index,
                                                 const EncoderParams<Scalar>& params,
                                                 const AggregateCache<Scalar>& cache,
                                                 const Tensor<Scalar>& gimage) {
  const std::size_t c = point_feats.extent(1);
  const std::size_t cout = params.agg.weight.extent(1);
  Tensor<Scalar> gact({cache.cells.size(), cout});
  for (std::size_t m = 0; m < cache.cells.size(); ++m) {
    const Scalar* src = &gimage.at(cache.cells[m].first, cache.cells[m].second, 0);
    std::copy(src, src + cout, &gact.at(m, 0));
  }
  Tensor<Scalar> gpre = relu_backward(cache.pre, gact);
  LinearGrad<Scalar> gl = linear_backward(cache.cat, params.agg.weight, gpre);
  AggregateGrads<Scalar> g;
  g.agg = {std::move(gl.gweight), std::move(gl.gbias)};
  g.gfeatures = Tensor<Scalar>(point_feats.shape());
  for (std::size_t m = 0; m < cache.cells.size(); ++m) {
    const auto members = index.cell(cache.cells[m].first, cache.cells[m].second);
    const Scalar* gcat = &gl.gx.at(m, 0);
    const Scalar inv = Scalar(1) / static_cast<Scalar>(members.size());
    // max half: route to the first maximal member (forward keeps it under >)
    for (std::size_t ch = 0; ch < c; ++ch) {
      std::uint32_t arg = members[0];
      Scalar best = point_feats.at(members[0], ch);
      for (std::uint32_t j : members) {
        if (point_feats.at(j, ch) > best) {
          best = point_feats.at(j, ch);
          arg = j;
        }
      }
      g.gfeatures.at(arg, ch) += gcat[ch];
    }
    // mean half
    for (std::uint32_t j : members) {
      Scalar* row = &g.gfeatures.at(j, 0);
      for (std::size_t ch = 0; ch < c; ++ch) row[ch] += gcat[c + ch] * inv;
    }
  }
  return g;
}

}  // namespace rangeseg
