#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cdppo/tensor.hpp"

namespace cdppo {

struct Param {
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  std::int64_t step_count = 0;
};

/// Named trainable tensors with gradient buffers and Adam moments. Gradients
/// accumulate until the caller zeroes them (adam_step does so after updating).
class ParamStore {
 public:
  Param& add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  const Tensor& value(const std::string& name) const { return at(name).value; }
  Tensor& value(const std::string& name) { return at(name).value; }
  Tensor& grad(const std::string& name) { return at(name).grad; }
  const Tensor& grad(const std::string& name) const { return at(name).grad; }

  void zero_grad();
  std::size_t parameter_count() const;
  bool grads_all_zero() const;

  const std::map<std::string, Param>& entries() const { return entries_; }
  std::map<std::string, Param>& entries() { return entries_; }

  // Values only; grads and optimizer state are reset.
  ParamStore values_copy() const;

 private:
  std::map<std::string, Param> entries_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over every entry, then zeroes all gradients. Throws
/// NumericError before touching anything if a gradient is non-finite.
void adam_step(ParamStore& store, const AdamConfig& cfg);

// ---- checkpoints ----
// Layout: "CDPP", u32 version, then until EOF per entry: u16 name length,
// name bytes, u8 rank, u32 dims, little-endian f64 payload.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

/// Flattens a store under `section/` with optimizer state as `#m`, `#v`,
/// `#step` suffixed entries.
void append_store(std::vector<NamedTensor>& out, const std::string& section,
                  const ParamStore& store, bool with_optimizer_state);
/// Rebuilds a store from the entries under `section/`.
ParamStore extract_store(const std::vector<NamedTensor>& entries,
                         const std::string& section);

}  // namespace cdppo
