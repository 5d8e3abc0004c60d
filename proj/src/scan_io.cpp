#include "rangeseg/scan_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rangeseg {

namespace {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

float read_f32_le(const std::uint8_t* p) {
  std::uint32_t u = static_cast<std::uint32_t>(p[0]) |
                    (static_cast<std::uint32_t>(p[1]) << 8) |
                    (static_cast<std::uint32_t>(p[2]) << 16) |
                    (static_cast<std::uint32_t>(p[3]) << 24);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

void write_f32_le(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  out.push_back(static_cast<std::uint8_t>(u & 0xFF));
  out.push_back(static_cast<std::uint8_t>((u >> 8) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((u >> 16) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((u >> 24) & 0xFF));
}

std::uint32_t read_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void DatasetConfig::validate() const {
  if (num_beams == 0 || width == 0) {
    throw ConfigError("dataset '" + name + "': beam count and width must be positive");
  }
  if (!(fov_down < fov_up)) {
    throw ConfigError("dataset '" + name + "': fov_down must be below fov_up");
  }
  if (num_classes == 0) {
    throw ConfigError("dataset '" + name + "': num_classes must be positive");
  }
  for (const auto& [raw, cls] : label_remap) {
    if (cls >= num_classes && cls != ignore_id) {
      throw ConfigError("dataset '" + name + "': remap target " + std::to_string(cls) +
                        " for raw id " + std::to_string(raw) + " is out of range");
    }
  }
}

RawScan parse_kitti_scan(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 16 != 0) {
    throw FormatError("malformed scan: byte length " + std::to_string(bytes.size()) +
                      " is not a multiple of 16");
  }
  RawScan scan;
  const std::size_t n = bytes.size() / 16;
  scan.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* p = bytes.data() + i * 16;
    Point& pt = scan.points[i];
    pt.x = read_f32_le(p);
    pt.y = read_f32_le(p + 4);
    pt.z = read_f32_le(p + 8);
    pt.intensity = read_f32_le(p + 12);
    if (!std::isfinite(pt.x) || !std::isfinite(pt.y) || !std::isfinite(pt.z) ||
        !std::isfinite(pt.intensity)) {
      throw FormatError("malformed scan: non-finite value at point " + std::to_string(i));
    }
  }
  return scan;
}

std::vector<std::uint8_t> encode_kitti_scan(const RawScan& scan) {
  std::vector<std::uint8_t> out;
  out.reserve(scan.size() * 16);
  for (const Point& pt : scan.points) {
    write_f32_le(out, pt.x);
    write_f32_le(out, pt.y);
    write_f32_le(out, pt.z);
    write_f32_le(out, pt.intensity);
  }
  return out;
}

std::vector<std::uint32_t> parse_kitti_labels(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 4 != 0) {
    throw FormatError("malformed label file: byte length " + std::to_string(bytes.size()) +
                      " is not a multiple of 4");
  }
  std::vector<std::uint32_t> ids(bytes.size() / 4);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ids[i] = read_u32_le(bytes.data() + i * 4) & 0xFFFFu;
  }
  return ids;
}

std::vector<std::uint8_t> encode_kitti_labels(const std::vector<std::uint32_t>& ids) {
  std::vector<std::uint8_t> out;
  out.reserve(ids.size() * 4);
  for (std::uint32_t id : ids) {
    out.push_back(static_cast<std::uint8_t>(id & 0xFF));
    out.push_back(static_cast<std::uint8_t>((id >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((id >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((id >> 24) & 0xFF));
  }
  return out;
}

std::vector<std::uint32_t> remap_labels(const std::vector<std::uint32_t>& raw,
                                        const DatasetConfig& cfg) {
  std::vector<std::uint32_t> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto it = cfg.label_remap.find(raw[i]);
    out[i] = it == cfg.label_remap.end() ? cfg.ignore_id : it->second;
  }
  return out;
}

DatasetConfig builtin_config(const std::string& name) {
  DatasetConfig cfg;
  cfg.name = name;
  if (name == "semantickitti") {
    cfg.num_beams = 64;
    cfg.width = 1024;
    cfg.fov_up = 3.0 * kDegToRad;
    cfg.fov_down = -25.0 * kDegToRad;
    cfg.num_classes = 19;
  } else if (name == "nuscenes") {
    cfg.num_beams = 32;
    cfg.width = 1024;
    cfg.fov_up = 10.0 * kDegToRad;
    cfg.fov_down = -30.0 * kDegToRad;
    cfg.num_classes = 16;
  } else {
    throw ConfigError("unknown dataset '" + name + "' (expected semantickitti or nuscenes)");
  }
  return cfg;
}

LabelRemap identity_remap(std::size_t num_classes, std::uint32_t ignore_id) {
  LabelRemap map;
  for (std::size_t i = 0; i < num_classes; ++i)
    map[static_cast<std::uint32_t>(i)] = static_cast<std::uint32_t>(i);
  map[ignore_id] = ignore_id;
  return map;
}

LabelRemap parse_remap_table(const std::string& text, const DatasetConfig& cfg) {
  LabelRemap map;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::uint64_t raw, cls;
    if (!(ls >> raw)) continue;  // blank or comment-only line
    if (!(ls >> cls)) {
      throw FormatError("remap table line " + std::to_string(line_no) +
                        ": expected `raw_id class_id`");
    }
    std::string extra;
    if (ls >> extra) {
      throw FormatError("remap table line " + std::to_string(line_no) +
                        ": trailing token '" + extra + "'");
    }
    if (cls >= cfg.num_classes && cls != cfg.ignore_id) {
      throw FormatError("remap table line " + std::to_string(line_no) + ": class id " +
                        std::to_string(cls) + " is outside [0," +
                        std::to_string(cfg.num_classes) + ") and is not the ignore id");
    }
    map[static_cast<std::uint32_t>(raw)] = static_cast<std::uint32_t>(cls);
  }
  return map;
}

LabelRemap load_remap_table(const std::string& path, const DatasetConfig& cfg) {
  return parse_remap_table(read_file_text(path), cfg);
}

RawScan parse_xyzil(const std::string& text) {
  RawScan scan;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool labels_decided = false;
  bool has_labels = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    Point pt;
    if (!(ls >> pt.x)) continue;
    if (!(ls >> pt.y >> pt.z >> pt.intensity)) {
      throw FormatError("xyzil line " + std::to_string(line_no) +
                        ": expected `x y z intensity [label]`");
    }
    if (!std::isfinite(pt.x) || !std::isfinite(pt.y) || !std::isfinite(pt.z) ||
        !std::isfinite(pt.intensity)) {
      throw FormatError("xyzil line " + std::to_string(line_no) + ": non-finite value");
    }
    std::uint32_t label = 0;
    const bool line_has_label = static_cast<bool>(ls >> label);
    if (!labels_decided) {
      labels_decided = true;
      has_labels = line_has_label;
    } else if (line_has_label != has_labels) {
      throw FormatError("xyzil line " + std::to_string(line_no) +
                        ": label column must be present on all lines or none");
    }
    scan.points.push_back(pt);
    if (has_labels) scan.labels.push_back(label);
  }
  return scan;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

std::string read_file_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open file for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to file: " + path);
}

RawScan load_scan(const std::string& path) {
  if (path.size() >= 6 && path.compare(path.size() - 6, 6, ".xyzil") == 0) {
    return parse_xyzil(read_file_text(path));
  }
  return parse_kitti_scan(read_file_bytes(path));
}

std::vector<std::uint32_t> load_labels(const std::string& path) {
  return parse_kitti_labels(read_file_bytes(path));
}

}  // namespace rangeseg
