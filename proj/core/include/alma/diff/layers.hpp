#pragma once

#include <string>

#include "alma/diff/tape.hpp"

namespace alma::diff {

// Affine layer. Parameters "<prefix>.W" (in x out) and "<prefix>.b" (1 x out).
// One layer object can run against several ParameterGraphs (online/target)
// that all registered the same names.
class Dense {
 public:
  Dense(std::string prefix, Index in, Index out)
      : prefix_(std::move(prefix)), in_(in), out_(out) {}

  void register_into(ParameterGraph& pg, Rng& rng) const;

  Var forward(Tape& t, Var x) const;

  const std::string& prefix() const { return prefix_; }
  std::string weight_name() const { return prefix_ + ".W"; }
  std::string bias_name() const { return prefix_ + ".b"; }
  Index in_dim() const { return in_; }
  Index out_dim() const { return out_; }

 private:
  std::string prefix_;
  Index in_, out_;
};

// Two-layer perceptron with ReLU: out = W2 relu(W1 x + b1) + b2.
class Mlp2 {
 public:
  Mlp2(const std::string& prefix, Index in, Index hidden, Index out)
      : l1_(prefix + ".l1", in, hidden), l2_(prefix + ".l2", hidden, out) {}

  void register_into(ParameterGraph& pg, Rng& rng) const {
    l1_.register_into(pg, rng);
    l2_.register_into(pg, rng);
  }
  Var forward(Tape& t, Var x) const { return l2_.forward(t, t.relu(l1_.forward(t, x))); }

  const Dense& first() const { return l1_; }
  const Dense& second() const { return l2_; }

 private:
  Dense l1_, l2_;
};

// Multi-head scaled dot-product attention with projections:
//   out = core(q Wq, k Wk, v Wv; mask, heads) Wo + bo
// Masked-out logits are -inf before the softmax; a fully masked query row
// yields a zero output row (before the output projection's bias) and sets
// the caller-visible flag.
class MultiHeadAttention {
 public:
  MultiHeadAttention(const std::string& prefix, Index dim, int heads)
      : wq_(prefix + ".q", dim, dim),
        wk_(prefix + ".k", dim, dim),
        wv_(prefix + ".v", dim, dim),
        wo_(prefix + ".o", dim, dim),
        dim_(dim),
        heads_(heads) {
    if (heads <= 0 || dim % heads != 0)
      throw ConfigError("MultiHeadAttention: head count must divide embedding width");
  }

  void register_into(ParameterGraph& pg, Rng& rng) const;

  // Batched form over shared q/k/v inputs.
  Var forward(Tape& t, Var q_in, Var kv_in, const AttnBatch& batch,
              bool* any_fully_masked = nullptr) const;

  // Single-instance convenience: one mask covering all of q/k.
  Var forward(Tape& t, Var q_in, Var k_in, Var v_in, const AttentionMask& mask,
              bool* any_fully_masked = nullptr) const;

  int heads() const { return heads_; }
  Index dim() const { return dim_; }

 private:
  Dense wq_, wk_, wv_, wo_;
  Index dim_;
  int heads_;
};

}  // namespace alma::diff
