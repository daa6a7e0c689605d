#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "alma/diff/params.hpp"
#include "alma/diff/popart.hpp"

namespace alma::diff {

// Versioned checkpoint container: named tensors (shape + raw little-endian
// 64-bit values) and named raw byte blobs (RNG engine states, counters).
class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> blobs;

  void put_u64(const std::string& name, std::uint64_t v);
  std::uint64_t get_u64(const std::string& name) const;
  bool has_tensor(const std::string& name) const { return tensors.count(name) != 0; }
  bool has_blob(const std::string& name) const { return blobs.count(name) != 0; }

  // Store/restore a whole ParameterGraph under a prefix: values as
  // "<prefix>.<param>" and RMSProp accumulators as "<prefix>.optim.<param>".
  void put_params(const std::string& prefix, const ParameterGraph& pg, bool with_optimizer);
  void load_params(const std::string& prefix, ParameterGraph& pg, bool with_optimizer) const;

  void put_popart(const std::string& prefix, const PopArtState& pa);
  PopArtState get_popart(const std::string& prefix) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace alma::diff
