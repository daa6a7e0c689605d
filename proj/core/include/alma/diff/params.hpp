#pragma once

#include <map>
#include <string>
#include <vector>

#include "alma/common.hpp"
#include "alma/diff/tensor.hpp"

namespace alma::diff {

// Named parameter store shared by all networks: per-parameter value, gradient
// accumulator, and RMSProp second-moment accumulator. Single-writer: gradient
// accumulation and optimizer steps happen on one learner thread; concurrent
// readers may hold const references during rollouts.
class ParameterGraph {
 public:
  struct Slot {
    Tensor value;
    Tensor grad;
    Tensor rms_v;
  };

  Tensor& add(const std::string& name, Index rows, Index cols);

  bool has(const std::string& name) const { return slots_.count(name) != 0; }

  Tensor& value(const std::string& name) { return slot(name).value; }
  const Tensor& value(const std::string& name) const { return slot(name).value; }
  Tensor& grad(const std::string& name) { return slot(name).grad; }
  const Tensor& grad(const std::string& name) const { return slot(name).grad; }
  Tensor& rms_v(const std::string& name) { return slot(name).rms_v; }

  // Sorted by name: iteration order is deterministic.
  std::vector<std::string> names() const;
  std::size_t count() const { return slots_.size(); }

  void zero_grads();

  // Copies values (not grads, not optimizer state) slot by slot; shapes and the
  // name set must match. Used for target-network synchronization.
  void copy_values_from(const ParameterGraph& other);

  bool values_equal(const ParameterGraph& other) const;

  Slot& slot(const std::string& name);
  const Slot& slot(const std::string& name) const;

 private:
  std::map<std::string, Slot> slots_;
};

// Weight initialization: uniform in +-1/sqrt(fan_in); biases zero.
void init_uniform_fan_in(Tensor& t, Index fan_in, Rng& rng);

}  // namespace alma::diff
