#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rangeseg/error.hpp"

namespace rangeseg {

/// One LiDAR return: sensor-frame coordinates in meters plus reflectance.
struct Point {
  float x = 0;
  float y = 0;
  float z = 0;
  float intensity = 0;
};

/// A single scan: N points, optionally with one class id per point.
struct RawScan {
  std::vector<Point> points;
  std::vector<std::uint32_t> labels;  // empty, or exactly points.size() entries

  std::size_t size() const { return points.size(); }
  bool has_labels() const { return !labels.empty(); }
};

/// Raw semantic id -> evaluation class id. Ids absent from the table fall
/// back to the ignore id.
using LabelRemap = std::unordered_map<std::uint32_t, std::uint32_t>;

/// Geometry and label conventions of one dataset.
struct DatasetConfig {
  std::string name;
  std::size_t num_beams = 0;   // H
  std::size_t width = 0;       // W
  double fov_up = 0;           // radians
  double fov_down = 0;         // radians
  std::size_t num_classes = 0; // K
  std::uint32_t ignore_id = 255;
  LabelRemap label_remap;

  void validate() const;
};

/// Parse a KITTI-style `.bin` payload: consecutive little-endian float32
/// quadruples (x, y, z, intensity).
RawScan parse_kitti_scan(std::span<const std::uint8_t> bytes);

/// Serialize a scan back to the `.bin` layout. parse(encode(s)) == s bit-exactly.
std::vector<std::uint8_t> encode_kitti_scan(const RawScan& scan);

/// Parse a `.label` payload: little-endian uint32 per point; the semantic id
/// is the low 16 bits, the instance id in the high 16 bits is discarded.
std::vector<std::uint32_t> parse_kitti_labels(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_kitti_labels(const std::vector<std::uint32_t>& ids);

/// Map raw ids through cfg.label_remap; unknown ids become cfg.ignore_id.
std::vector<std::uint32_t> remap_labels(const std::vector<std::uint32_t>& raw,
                                        const DatasetConfig& cfg);

/// Built-in geometry configurations. Supported names: "semantickitti",
/// "nuscenes". The label remap starts empty; load one with load_remap_table
/// or fall back to identity_remap.
DatasetConfig builtin_config(const std::string& name);

/// Identity remap over [0, num_classes) plus ignore_id -> ignore_id, for data
/// that already carries evaluation class ids.
LabelRemap identity_remap(std::size_t num_classes, std::uint32_t ignore_id);

/// Parse a remap table: one `raw_id class_id` pair per line, `#` comments.
LabelRemap parse_remap_table(const std::string& text, const DatasetConfig& cfg);
LabelRemap load_remap_table(const std::string& path, const DatasetConfig& cfg);

/// Text scan format for synthetic data: one `x y z intensity [label]` line
/// per point, `#` comments. Either every line carries a label or none does.
RawScan parse_xyzil(const std::string& text);

// File helpers.
std::vector<std::uint8_t> read_file_bytes(const std::string& path);
std::string read_file_text(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);
RawScan load_scan(const std::string& path);  // dispatches on .bin / .xyzil extension
std::vector<std::uint32_t> load_labels(const std::string& path);

}  // namespace rangeseg
