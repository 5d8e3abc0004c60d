#include "rangeseg/projection.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rangeseg {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;

}  // namespace

void BeamTable::validate() const {
  if (elevation.empty()) throw ConfigError("beam table is empty");
  if (vertical_offset.size() != elevation.size()) {
    throw ConfigError("beam table: offset and elevation counts differ");
  }
  for (std::size_t l = 0; l + 1 < elevation.size(); ++l) {
    if (!(elevation[l] > elevation[l + 1])) {
      throw ConfigError("beam table: elevations must strictly decrease from row 0 (rows " +
                        std::to_string(l) + ".." + std::to_string(l + 1) + ")");
    }
  }
}

BeamTable uniform_beam_table(std::size_t num_beams, double fov_up, double fov_down) {
  if (num_beams == 0) throw ConfigError("beam table: need at least one beam");
  if (!(fov_down < fov_up)) throw ConfigError("beam table: fov_down must be below fov_up");
  BeamTable table;
  table.vertical_offset.assign(num_beams, 0.0);
  table.elevation.resize(num_beams);
  if (num_beams == 1) {
    table.elevation[0] = 0.5 * (fov_up + fov_down);
  } else {
    const double step = (fov_up - fov_down) / static_cast<double>(num_beams - 1);
    for (std::size_t l = 0; l < num_beams; ++l) {
      table.elevation[l] = fov_up - static_cast<double>(l) * step;
    }
  }
  return table;
}

BeamTable parse_beam_table(const std::string& text) {
  BeamTable table;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    double elev_deg, offset_m;
    if (!(ls >> elev_deg)) continue;
    if (!(ls >> offset_m)) {
      throw FormatError("beam table line " + std::to_string(line_no) +
                        ": expected `elevation_deg vertical_offset_m`");
    }
    table.elevation.push_back(elev_deg * kDegToRad);
    table.vertical_offset.push_back(offset_m);
  }
  table.validate();
  return table;
}

BeamTable load_beam_table(const std::string& path) {
  return parse_beam_table(read_file_text(path));
}

std::size_t assign_beam(const Point& p, const BeamTable& table) {
  if (table.size() == 0) throw ConfigError("assign_beam: empty beam table");
  const double rho = std::sqrt(static_cast<double>(p.x) * p.x +
                               static_cast<double>(p.y) * p.y);
  std::size_t best = table.size();
  double best_dist = 0;
  for (std::size_t l = 0; l < table.size(); ++l) {
    const double dz = static_cast<double>(p.z) - table.vertical_offset[l];
    if (rho == 0.0 && dz == 0.0) continue;  // elevation undefined for this beam
    const double elev = std::atan2(dz, rho);
    const double dist = std::abs(elev - table.elevation[l]);
    if (best == table.size() || dist < best_dist) {
      best = l;
      best_dist = dist;
    }
  }
  if (best == table.size()) {
    throw ValueError("degenerate point: coincides with the beam origin");
  }
  return best;
}

std::pair<double, double> spherical_coords(const Point& p, double h_l) {
  const double dz = static_cast<double>(p.z) - h_l;
  const double r = std::sqrt(static_cast<double>(p.x) * p.x +
                             static_cast<double>(p.y) * p.y + dz * dz);
  double alpha = std::atan2(static_cast<double>(p.y), static_cast<double>(p.x));
  if (alpha == -kPi) alpha = kPi;  // keep the seam on the (-pi, pi] side
  return {r, alpha};
}

ProjectionIndex::ProjectionIndex(std::size_t h, std::size_t w, std::size_t n)
    : h_(h), w_(w), n_(n) {
  u_.resize(n);
  v_.resize(n);
  r_.resize(n);
  alpha_.resize(n);
  keys_.resize(n);
}

void ProjectionIndex::build_cells(const std::vector<std::array<float, 4>>& keys) {
  offsets_.assign(h_ * w_ + 1, 0);
  for (std::size_t j = 0; j < n_; ++j) {
    ++offsets_[static_cast<std::size_t>(v_[j]) * w_ + u_[j] + 1];
  }
  non_empty_ = 0;
  for (std::size_t c = 0; c < h_ * w_; ++c) {
    if (offsets_[c + 1] > 0) ++non_empty_;
    offsets_[c + 1] += offsets_[c];
  }
  points_.resize(n_);
  std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
  for (std::size_t j = 0; j < n_; ++j) {
    const std::size_t c = static_cast<std::size_t>(v_[j]) * w_ + u_[j];
    points_[cursor[c]++] = static_cast<std::uint32_t>(j);
  }
  // Canonical member order: sort by raw point value so that cell reductions
  // are independent of input point order.
  for (std::size_t c = 0; c < h_ * w_; ++c) {
    auto begin = points_.begin() + static_cast<std::ptrdiff_t>(offsets_[c]);
    auto end = points_.begin() + static_cast<std::ptrdiff_t>(offsets_[c + 1]);
    std::sort(begin, end, [&keys](std::uint32_t a, std::uint32_t b) {
      return keys[a] < keys[b];
    });
  }
}

ProjectionIndex ProjectionIndex::downsample(std::size_t new_h, std::size_t new_w,
                                            std::size_t factor_v,
                                            std::size_t factor_u) const {
  if (factor_v == 0 || factor_u == 0) {
    throw ConfigError("downsample: factors must be positive");
  }
  ProjectionIndex coarse(new_h, new_w, n_);
  for (std::size_t j = 0; j < n_; ++j) {
    const std::size_t cv = v_[j] / factor_v;
    const std::size_t cu = u_[j] / factor_u;
    if (cv >= new_h || cu >= new_w) {
      throw DimensionError("downsample: cell (" + std::to_string(cv) + "," +
                           std::to_string(cu) + ") outside " + std::to_string(new_h) +
                           "x" + std::to_string(new_w));
    }
    coarse.v_[j] = static_cast<std::uint32_t>(cv);
    coarse.u_[j] = static_cast<std::uint32_t>(cu);
  }
  coarse.r_ = r_;
  coarse.alpha_ = alpha_;
  coarse.keys_ = keys_;
  coarse.degenerate_ = degenerate_;
  coarse.build_cells(coarse.keys_);
  return coarse;
}

ProjectionIndex project(const RawScan& scan, const BeamTable& table,
                        const DatasetConfig& cfg) {
  table.validate();
  if (table.size() != cfg.num_beams) {
    throw ConfigError("projection: beam table has " + std::to_string(table.size()) +
                      " rows but dataset expects " + std::to_string(cfg.num_beams));
  }
  const std::size_t h = cfg.num_beams, w = cfg.width;
  ProjectionIndex index(h, w, scan.size());

  // Fallback row for degenerate points: the beam nearest to elevation zero.
  std::size_t level_beam = 0;
  for (std::size_t l = 1; l < table.size(); ++l) {
    if (std::abs(table.elevation[l]) < std::abs(table.elevation[level_beam]))
      level_beam = l;
  }

  for (std::size_t j = 0; j < scan.size(); ++j) {
    const Point& p = scan.points[j];
    index.keys_[j] = {p.x, p.y, p.z, p.intensity};
    std::size_t v;
    double r, alpha;
    try {
      v = assign_beam(p, table);
      std::tie(r, alpha) = spherical_coords(p, table.vertical_offset[v]);
    } catch (const ValueError&) {
      v = level_beam;
      r = 0.0;
      alpha = 0.0;
      ++index.degenerate_;
    }
    const double col = std::floor((alpha + kPi) / (2.0 * kPi) * static_cast<double>(w));
    std::size_t u = col <= 0.0 ? 0 : static_cast<std::size_t>(col);
    if (u >= w) u = w - 1;
    index.v_[j] = static_cast<std::uint32_t>(v);
    index.u_[j] = static_cast<std::uint32_t>(u);
    index.r_[j] = static_cast<float>(r);
    index.alpha_[j] = static_cast<float>(alpha);
  }
  index.build_cells(index.keys_);
  return index;
}

}  // namespace rangeseg
