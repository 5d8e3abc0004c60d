#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "rangeseg/error.hpp"
#include "rangeseg/scan_io.hpp"
#include "rangeseg/tensor.hpp"

namespace rangeseg {

/// Ordered name -> tensor map holding every model weight.
class ParamStore {
 public:
  void add(const std::string& name, TensorF tensor);
  bool contains(const std::string& name) const { return map_.count(name) != 0; }
  const TensorF& get(const std::string& name) const;
  /// Typed lookup with a shape check; throws ConfigError naming the tensor.
  const TensorF& get(const std::string& name, const TensorF::Shape& shape) const;
  const std::vector<std::string>& names() const { return order_; }
  std::size_t tensor_count() const { return order_.size(); }

  bool operator==(const ParamStore& other) const;

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, TensorF> map_;
};

/// Everything that determines the network: dataset geometry reference plus
/// channel/depth/stride tuples.
struct ModelConfig {
  std::string dataset = "semantickitti";
  std::size_t base_channels = 32;          // C: point/feature width
  std::vector<std::size_t> depths = {3, 4, 6, 3};
  std::vector<std::size_t> widths;         // per-stage; defaults to C,2C,4C,4C,...
  std::vector<std::size_t> strides;        // per-stage; defaults to 1,2,2,...
  std::size_t attn_channels = 32;          // C_a: attention latent width
  std::uint64_t seed = 1;

  std::size_t stage_count() const { return depths.size(); }
  /// Fill defaulted fields and check consistency; throws ConfigError.
  void finalize();
};

/// Parse a UTF-8 `key=value` model config (keys: dataset, C, depths, widths,
/// strides, C_a, seed; `#` comments). Missing keys keep their defaults.
ModelConfig parse_model_config(const std::string& text);
ModelConfig load_model_config(const std::string& path);

enum class InitKind { kXavierUniform, kZero, kOne };

struct ParamSpec {
  std::string name;
  TensorF::Shape shape;
  InitKind kind = InitKind::kXavierUniform;
  bool learnable = true;  // running statistics are buffers, not parameters
};

/// Canonical tensor list for a configuration; the single source of naming.
std::vector<ParamSpec> enumerate_params(const ModelConfig& cfg);

/// Number of learnable scalar parameters implied by the configuration.
std::size_t param_count(const ModelConfig& cfg);

/// Deterministic initialization: weights uniform in +/- sqrt(6/(fan_in+fan_out)),
/// biases and norm shifts zero, norm scales and running variances one.
ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);

// Weights container: magic "DAGW", version u32 LE, tensor count u64 LE, then
// per tensor: name length u32 LE + UTF-8 name, ndim u32 LE, extents u64 LE,
// float32 LE row-major data.
void save_weights(const ParamStore& store, std::ostream& out);
void save_weights(const ParamStore& store, const std::string& path);
ParamStore load_weights(std::istream& in);
ParamStore load_weights(const std::string& path);

}  // namespace rangeseg
