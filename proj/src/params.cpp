#include "rangeseg/params.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace rangeseg {

void ParamStore::add(const std::string& name, TensorF tensor) {
  if (contains(name)) throw FormatError("duplicate tensor name '" + name + "'");
  order_.push_back(name);
  map_.emplace(name, std::move(tensor));
}

const TensorF& ParamStore::get(const std::string& name) const {
  auto it = map_.find(name);
  if (it == map_.end()) throw ConfigError("missing tensor '" + name + "'");
  return it->second;
}

const TensorF& ParamStore::get(const std::string& name, const TensorF::Shape& shape) const {
  const TensorF& t = get(name);
  if (t.shape() != shape) {
    throw ConfigError("tensor '" + name + "': expected shape " +
                      TensorF::shape_string(shape) + ", got " +
                      TensorF::shape_string(t.shape()));
  }
  return t;
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (order_ != other.order_) return false;
  for (const std::string& name : order_) {
    const TensorF& a = map_.at(name);
    const TensorF& b = other.map_.at(name);
    if (a.shape() != b.shape()) return false;
    if (std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) != 0) return false;
  }
  return true;
}

void ModelConfig::finalize() {
  if (base_channels == 0) throw ConfigError("model config: C must be positive");
  if (attn_channels == 0) throw ConfigError("model config: C_a must be positive");
  if (depths.empty()) throw ConfigError("model config: depths must not be empty");
  for (std::size_t d : depths) {
    if (d == 0) throw ConfigError("model config: every stage depth must be >= 1");
  }
  if (widths.empty()) {
    widths.resize(depths.size());
    for (std::size_t i = 0; i < widths.size(); ++i) {
      widths[i] = base_channels * std::min<std::size_t>(std::size_t(1) << i, 4);
    }
  }
  if (strides.empty()) {
    strides.assign(depths.size(), 2);
    strides[0] = 1;
  }
  if (strides.size() != depths.size()) {
    throw ConfigError("model config: strides length " + std::to_string(strides.size()) +
                      " != stage count " + std::to_string(depths.size()));
  }
  if (widths.size() != depths.size()) {
    throw ConfigError("model config: widths length " + std::to_string(widths.size()) +
                      " != stage count " + std::to_string(depths.size()));
  }
  for (std::size_t w : widths) {
    if (w == 0) throw ConfigError("model config: every stage width must be >= 1");
  }
  for (std::size_t s : strides) {
    if (s == 0) throw ConfigError("model config: every stride must be >= 1");
  }
  builtin_config(dataset);  // rejects unknown dataset names
}

namespace {

std::vector<std::size_t> parse_size_list(const std::string& value, const std::string& key) {
  std::vector<std::size_t> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(static_cast<std::size_t>(std::stoull(item)));
    } catch (const std::exception&) {
      throw ConfigError("model config: bad value '" + item + "' for key " + key);
    }
  }
  if (out.empty()) throw ConfigError("model config: empty list for key " + key);
  return out;
}

}  // namespace

ModelConfig parse_model_config(const std::string& text) {
  ModelConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
      if (blank) continue;
      throw ConfigError("model config line " + std::to_string(line_no) +
                        ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "dataset") {
      cfg.dataset = value;
    } else if (key == "C") {
      cfg.base_channels = parse_size_list(value, key).at(0);
    } else if (key == "C_a") {
      cfg.attn_channels = parse_size_list(value, key).at(0);
    } else if (key == "depths") {
      cfg.depths = parse_size_list(value, key);
    } else if (key == "widths") {
      cfg.widths = parse_size_list(value, key);
    } else if (key == "strides") {
      cfg.strides = parse_size_list(value, key);
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
    } else {
      throw ConfigError("model config line " + std::to_string(line_no) +
                        ": unknown key '" + key + "'");
    }
  }
  cfg.finalize();
  return cfg;
}

ModelConfig load_model_config(const std::string& path) {
  return parse_model_config(read_file_text(path));
}

namespace {

void add_norm(std::vector<ParamSpec>& specs, const std::string& prefix, std::size_t c) {
  specs.push_back({prefix + ".scale", {c}, InitKind::kOne, true});
  specs.push_back({prefix + ".shift", {c}, InitKind::kZero, true});
  specs.push_back({prefix + ".running_mean", {c}, InitKind::kZero, false});
  specs.push_back({prefix + ".running_var", {c}, InitKind::kOne, false});
}

void add_linear(std::vector<ParamSpec>& specs, const std::string& prefix, std::size_t cin,
                std::size_t cout) {
  specs.push_back({prefix + ".weight", {cin, cout}, InitKind::kXavierUniform, true});
  specs.push_back({prefix + ".bias", {cout}, InitKind::kZero, true});
}

void add_mlp(std::vector<ParamSpec>& specs, const std::string& prefix, std::size_t cin,
             std::size_t hidden, std::size_t cout) {
  add_linear(specs, prefix + ".l1", cin, hidden);
  add_norm(specs, prefix + ".norm", hidden);
  add_linear(specs, prefix + ".l2", hidden, cout);
}

void add_conv(std::vector<ParamSpec>& specs, const std::string& prefix, std::size_t k,
              std::size_t cin, std::size_t cout) {
  specs.push_back({prefix + ".conv.weight", {k, k, cin, cout}, InitKind::kXavierUniform, true});
}

}  // namespace

std::vector<ParamSpec> enumerate_params(const ModelConfig& cfg) {
  const std::size_t c = cfg.base_channels;
  const std::size_t ca = cfg.attn_channels;
  const std::size_t k_cls = builtin_config(cfg.dataset).num_classes;
  std::vector<ParamSpec> specs;

  add_mlp(specs, "encoder.mlp", 10, c, c);
  add_linear(specs, "encoder.agg", 2 * c, c);

  std::size_t w_in = c;
  std::size_t width_sum = 0;
  for (std::size_t i = 0; i < cfg.stage_count(); ++i) {
    const std::string stage = "stage" + std::to_string(i + 1);
    const std::size_t w = cfg.widths[i];
    width_sum += w;
    if (cfg.strides[i] != 1 || w != w_in) {
      add_conv(specs, stage + ".transition", 3, w_in, w);
      add_norm(specs, stage + ".transition.norm", w);
    }
    const std::size_t w_half = std::max<std::size_t>(w / 2, 1);
    for (std::size_t j = 0; j < cfg.depths[i]; ++j) {
      const std::string block = stage + ".block" + std::to_string(j + 1);
      add_conv(specs, block + ".b1", 3, w, w);
      add_norm(specs, block + ".b1.norm", w);
      add_conv(specs, block + ".b2", 3, w, w);
      add_norm(specs, block + ".b2.norm", w);
      add_conv(specs, block + ".b3.reduce", 1, w, w_half);
      add_norm(specs, block + ".b3.reduce.norm", w_half);
      add_conv(specs, block + ".b3", 3, w_half, w);
      add_norm(specs, block + ".b3.norm", w);
      add_conv(specs, block + ".fuse", 1, 3 * w, w);
      add_norm(specs, block + ".out.norm", w);
    }

    const std::string fusion = "fusion" + std::to_string(i + 1);
    add_linear(specs, fusion + ".vg", w, ca);
    add_linear(specs, fusion + ".kg", w, ca);
    add_linear(specs, fusion + ".vp", c, ca);
    add_linear(specs, fusion + ".kp", c, ca);
    add_linear(specs, fusion + ".q", 1, ca);
    add_linear(specs, fusion + ".out", ca, c);
    add_conv(specs, fusion + ".refuse", 1, c + w, w);
    add_norm(specs, fusion + ".refuse.norm", w);
    add_conv(specs, fusion + ".enh1", 3, w, w);
    add_norm(specs, fusion + ".enh1.norm", w);
    add_conv(specs, fusion + ".enh2", 3, w, w);
    add_norm(specs, fusion + ".enh2.norm", w);

    w_in = w;
  }

  add_mlp(specs, "head.point", cfg.stage_count() * c, c, c);
  add_conv(specs, "head.image", 1, width_sum, c);
  add_norm(specs, "head.image.norm", c);
  add_mlp(specs, "head.m1", c, c, c);
  add_mlp(specs, "head.m2", c, c, c);
  add_linear(specs, "head.classifier", c, k_cls);

  return specs;
}

std::size_t param_count(const ModelConfig& cfg) {
  std::size_t count = 0;
  for (const ParamSpec& spec : enumerate_params(cfg)) {
    if (spec.learnable) count += TensorF::count(spec.shape);
  }
  return count;
}

namespace {

// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::pair<std::size_t, std::size_t> fan_in_out(const TensorF::Shape& shape) {
  if (shape.size() == 2) return {shape[0], shape[1]};
  if (shape.size() == 4) {
    const std::size_t k2 = shape[0] * shape[1];
    return {k2 * shape[2], k2 * shape[3]};
  }
  return {TensorF::count(shape), TensorF::count(shape)};
}

}  // namespace

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamStore store;
  for (const ParamSpec& spec : enumerate_params(cfg)) {
    TensorF t(spec.shape);
    switch (spec.kind) {
      case InitKind::kZero:
        break;
      case InitKind::kOne:
        std::fill(t.data(), t.data() + t.size(), 1.0f);
        break;
      case InitKind::kXavierUniform: {
        const auto [fin, fout] = fan_in_out(spec.shape);
        const double bound = std::sqrt(6.0 / static_cast<double>(fin + fout));
        for (std::size_t i = 0; i < t.size(); ++i) {
          t[i] = static_cast<float>((2.0 * uniform01(rng) - 1.0) * bound);
        }
        break;
      }
    }
    store.add(spec.name, std::move(t));
  }
  return store;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
               static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

std::uint32_t take_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw FormatError(std::string("weights file truncated while reading ") + what);
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t take_u64(std::istream& in, const char* what) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw FormatError(std::string("weights file truncated while reading ") + what);
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

constexpr char kMagic[4] = {'D', 'A', 'G', 'W'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_weights(const ParamStore& store, std::ostream& out) {
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, store.tensor_count());
  for (const std::string& name : store.names()) {
    const TensorF& t = store.get(name);
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put_u64(out, e);
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * 4));
  }
  if (!out) throw FormatError("failed to write weights stream");
}

void save_weights(const ParamStore& store, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open weights file for writing: " + path);
  save_weights(store, out);
}

ParamStore load_weights(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4)) throw FormatError("weights file truncated while reading magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("bad weights magic (expected DAGW)");
  }
  const std::uint32_t version = take_u32(in, "version");
  if (version != kVersion) {
    throw FormatError("unsupported weights version " + std::to_string(version));
  }
  const std::uint64_t count = take_u64(in, "tensor count");
  ParamStore store;
  for (std::uint64_t t = 0; t < count; ++t) {
    const std::uint32_t name_len = take_u32(in, "name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) {
      throw FormatError("weights file truncated while reading tensor name");
    }
    const std::uint32_t ndim = take_u32(in, ("rank of '" + name + "'").c_str());
    TensorF::Shape shape(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d) {
      shape[d] = static_cast<std::size_t>(take_u64(in, ("extent of '" + name + "'").c_str()));
    }
    TensorF tensor(shape);
    if (!in.read(reinterpret_cast<char*>(tensor.data()),
                 static_cast<std::streamsize>(tensor.size() * 4))) {
      throw FormatError("weights file truncated while reading data of '" + name + "'");
    }
    store.add(name, std::move(tensor));  // rejects duplicates
  }
  return store;
}

ParamStore load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open weights file: " + path);
  return load_weights(in);
}

}  // namespace rangeseg
