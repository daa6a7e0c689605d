#include "alma/diff/params.hpp"

namespace alma::diff {

Tensor& ParameterGraph::add(const std::string& name, Index rows, Index cols) {
  if (slots_.count(name)) throw ConfigError("ParameterGraph: duplicate parameter '" + name + "'");
  Slot& s = slots_[name];
  s.value = Tensor::zeros(rows, cols);
  s.grad = Tensor::zeros(rows, cols);
  s.rms_v = Tensor::zeros(rows, cols);
  return s.value;
}

ParameterGraph::Slot& ParameterGraph::slot(const std::string& name) {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw LookupError("ParameterGraph: unknown parameter '" + name + "'");
  return it->second;
}

const ParameterGraph::Slot& ParameterGraph::slot(const std::string& name) const {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw LookupError("ParameterGraph: unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParameterGraph::names() const {
  std::vector<std::string> out;
  out.reserve(slots_.size());
  for (const auto& [k, v] : slots_) out.push_back(k);
  return out;
}

void ParameterGraph::zero_grads() {
  for (auto& [k, s] : slots_) s.grad.mat().setZero();
}

void ParameterGraph::copy_values_from(const ParameterGraph& other) {
  if (slots_.size() != other.slots_.size())
    throw ConfigError("ParameterGraph::copy_values_from: parameter sets differ");
  for (auto& [k, s] : slots_) {
    const Slot& o = other.slot(k);
    if (!s.value.same_shape(o.value))
      throw ConfigError("ParameterGraph::copy_values_from: shape mismatch for '" + k + "'");
    s.value.mat() = o.value.mat();
  }
}

bool ParameterGraph::values_equal(const ParameterGraph& other) const {
  if (slots_.size() != other.slots_.size()) return false;
  for (const auto& [k, s] : slots_) {
    if (!other.has(k)) return false;
    if (s.value.mat() != other.slot(k).value.mat()) return false;
  }
  return true;
}

void init_uniform_fan_in(Tensor& t, Index fan_in, Rng& rng) {
  const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(fan_in));
  for (Index c = 0; c < t.cols(); ++c)
    for (Index r = 0; r < t.rows(); ++r) t.mat()(r, c) = rng.uniform(-bound, bound);
}

}  // namespace alma::diff
