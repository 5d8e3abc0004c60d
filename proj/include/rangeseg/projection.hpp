#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rangeseg/error.hpp"
#include "rangeseg/scan_io.hpp"
#include "rangeseg/tensor.hpp"

namespace rangeseg {

/// Per-beam vertical offset (m) and elevation (rad); elevations strictly
/// decrease from row 0 (topmost beam) to row H-1.
struct BeamTable {
  std::vector<double> vertical_offset;
  std::vector<double> elevation;

  std::size_t size() const { return elevation.size(); }
  void validate() const;
};

/// H beams evenly spaced over [fov_down, fov_up], zero vertical offsets.
BeamTable uniform_beam_table(std::size_t num_beams, double fov_up, double fov_down);

/// Load an override table: one `elevation_deg vertical_offset_m` line per
/// beam, top row first, `#` comments allowed.
BeamTable parse_beam_table(const std::string& text);
BeamTable load_beam_table(const std::string& path);

/// Index of the beam whose elevation is nearest to the point's per-beam
/// elevation atan2(z - h_l, sqrt(x^2 + y^2)). Throws ValueError for a point
/// coinciding with a beam origin.
std::size_t assign_beam(const Point& p, const BeamTable& table);

/// Range and azimuth of a point relative to a beam with vertical offset h_l:
/// r = sqrt(x^2 + y^2 + (z - h_l)^2), alpha = atan2(y, x) in (-pi, pi].
std::pair<double, double> spherical_coords(const Point& p, double h_l);

/// Point-to-grid assignment. Cells hold their member point indices in a
/// canonical order (sorted by raw point value), which makes every cell
/// reduction independent of input point order.
class ProjectionIndex {
 public:
  ProjectionIndex() = default;
  ProjectionIndex(std::size_t h, std::size_t w, std::size_t n);

  std::size_t height() const { return h_; }
  std::size_t width() const { return w_; }
  std::size_t point_count() const { return n_; }
  /// Number of non-empty cells (the group count M).
  std::size_t group_count() const { return non_empty_; }
  std::size_t degenerate_count() const { return degenerate_; }

  std::uint32_t row_of(std::size_t point) const { return v_[point]; }
  std::uint32_t col_of(std::size_t point) const { return u_[point]; }
  float range_of(std::size_t point) const { return r_[point]; }
  float azimuth_of(std::size_t point) const { return alpha_[point]; }

  /// Member point indices of cell (v, u), canonically ordered.
  std::span<const std::uint32_t> cell(std::size_t v, std::size_t u) const {
    const std::size_t c = v * w_ + u;
    return {points_.data() + offsets_[c], offsets_[c + 1] - offsets_[c]};
  }

  /// Per-point ranges as an N x 1 tensor (the attention depth input).
  template <typename Scalar>
  Tensor<Scalar> depth_column() const {
    Tensor<Scalar> d({n_, 1});
    for (std::size_t i = 0; i < n_; ++i) d[i] = static_cast<Scalar>(r_[i]);
    return d;
  }

  /// Coarsen the grid by integer factors: cell (v, u) of the fine index maps
  /// to (v / factor_v, u / factor_u). Used to re-project point features at a
  /// downsampled stage resolution.
  ProjectionIndex downsample(std::size_t new_h, std::size_t new_w, std::size_t factor_v,
                             std::size_t factor_u) const;

  friend ProjectionIndex project(const RawScan&, const BeamTable&, const DatasetConfig&);

 private:
  void build_cells(const std::vector<std::array<float, 4>>& keys);

  std::size_t h_ = 0, w_ = 0, n_ = 0;
  std::vector<std::uint32_t> u_, v_;
  std::vector<float> r_, alpha_;
  std::vector<std::array<float, 4>> keys_;  // raw (x,y,z,I) for canonical ordering
  std::vector<std::size_t> offsets_;        // CSR offsets, length h*w + 1
  std::vector<std::uint32_t> points_;       // CSR members, length n
  std::size_t non_empty_ = 0;
  std::size_t degenerate_ = 0;
};

/// Build the full-resolution projection index for a scan. Degenerate points
/// (coincident with a beam origin) are assigned r = 0 and the azimuth-0
/// column, and counted rather than aborting the scan.
ProjectionIndex project(const RawScan& scan, const BeamTable& table,
                        const DatasetConfig& cfg);

enum class Reduce { kMean, kMax };

/// Scatter point features onto the grid: each non-empty cell reduces its
/// member rows (mean accumulated in double, in canonical member order);
/// empty cells are zero. features: [N, C] -> [H, W, C].
template <typename Scalar>
Tensor<Scalar> flatten(const Tensor<Scalar>& features, const ProjectionIndex& index,
                       Reduce reduce = Reduce::kMean) {
  if (features.rank() != 2 || features.extent(0) != index.point_count()) {
    throw DimensionError("flatten: features " +
                         Tensor<Scalar>::shape_string(features.shape()) +
                         " do not match index with " +
                         std::to_string(index.point_count()) + " points");
  }
  const std::size_t h = index.height(), w = index.width(), c = features.extent(1);
  Tensor<Scalar> image({h, w, c});
  std::vector<double> acc(c);
  for (std::size_t v = 0; v < h; ++v) {
    for (std::size_t u = 0; u < w; ++u) {
      const auto members = index.cell(v, u);
      if (members.empty()) continue;
      Scalar* out = &image.at(v, u, 0);
      if (reduce == Reduce::kMax) {
        const Scalar* first = &features.at(members[0], 0);
        std::copy(first, first + c, out);
        for (std::size_t m = 1; m < members.size(); ++m) {
          const Scalar* row = &features.at(members[m], 0);
          for (std::size_t ch = 0; ch < c; ++ch)
            if (row[ch] > out[ch]) out[ch] = row[ch];
        }
      } else {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::uint32_t m : members) {
          const Scalar* row = &features.at(m, 0);
          for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += static_cast<double>(row[ch]);
        }
        const double inv = 1.0 / static_cast<double>(members.size());
        for (std::size_t ch = 0; ch < c; ++ch)
          out[ch] = static_cast<Scalar>(acc[ch] * inv);
      }
    }
  }
  return image;
}

/// Gradient of flatten with mean reduction w.r.t. the point features.
template <typename Scalar>
Tensor<Scalar> flatten_mean_backward(const Tensor<Scalar>& gimage,
                                     const ProjectionIndex& index) {
  const std::size_t c = gimage.extent(2);
  Tensor<Scalar> gfeat({index.point_count(), c});
  for (std::size_t v = 0; v < index.height(); ++v) {
    for (std::size_t u = 0; u < index.width(); ++u) {
      const auto members = index.cell(v, u);
      if (members.empty()) continue;
      const Scalar inv = Scalar(1) / static_cast<Scalar>(members.size());
      const Scalar* g = &gimage.at(v, u, 0);
      for (std::uint32_t m : members) {
        Scalar* row = &gfeat.at(m, 0);
        for (std::size_t ch = 0; ch < c; ++ch) row[ch] += g[ch] * inv;
      }
    }
  }
  return gfeat;
}

/// Gather the image value at each point's cell: [H, W, C] -> [N, C].
template <typename Scalar>
Tensor<Scalar> unflatten(const Tensor<Scalar>& image, const ProjectionIndex& index) {
  if (image.rank() != 3 || image.extent(0) != index.height() ||
      image.extent(1) != index.width()) {
    throw DimensionError("unflatten: image " +
                         Tensor<Scalar>::shape_string(image.shape()) +
                         " does not match index resolution " +
                         std::to_string(index.height()) + "x" +
                         std::to_string(index.width()));
  }
  const std::size_t c = image.extent(2);
  Tensor<Scalar> features({index.point_count(), c});
  for (std::size_t j = 0; j < index.point_count(); ++j) {
    const Scalar* src = &image.at(index.row_of(j), index.col_of(j), 0);
    std::copy(src, src + c, &features.at(j, 0));
  }
  return features;
}

/// Gradient of unflatten w.r.t. the image (scatter-add in canonical order).
template <typename Scalar>
Tensor<Scalar> unflatten_backward(const Tensor<Scalar>& gfeatures,
                                  const ProjectionIndex& index) {
  const std::size_t c = gfeatures.extent(1);
  Tensor<Scalar> gimage({index.height(), index.width(), c});
  for (std::size_t v = 0; v < index.height(); ++v) {
    for (std::size_t u = 0; u < index.width(); ++u) {
      Scalar* out = &gimage.at(v, u, 0);
      for (std::uint32_t m : index.cell(v, u)) {
        const Scalar* row = &gfeatures.at(m, 0);
        for (std::size_t ch = 0; ch < c; ++ch) out[ch] += row[ch];
      }
    }
  }
  return gimage;
}

}  // namespace rangeseg
