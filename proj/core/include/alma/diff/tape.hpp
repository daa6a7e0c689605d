#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "alma/diff/params.hpp"
#include "alma/diff/tensor.hpp"

namespace alma::diff {

// Handle to a tape node.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Boolean attention mask for one attention instance: rows are queries, columns
// are keys, true = attendable. Rows that are entirely false produce a
// defined-zero output row and raise the caller-visible flag (never NaN).
struct AttentionMask {
  Index n_queries = 0;
  Index n_keys = 0;
  std::vector<std::uint8_t> allow;  // row-major n_queries x n_keys

  AttentionMask() = default;
  AttentionMask(Index nq, Index nk, bool value = true)
      : n_queries(nq), n_keys(nk), allow(static_cast<std::size_t>(nq * nk), value ? 1 : 0) {}

  std::uint8_t& at(Index q, Index k) { return allow[static_cast<std::size_t>(q * n_keys + k)]; }
  std::uint8_t at(Index q, Index k) const {
    return allow[static_cast<std::size_t>(q * n_keys + k)];
  }
};

// A batch of independent attention instances over shared Q/K/V matrices.
// Instance i attends query rows [q_begin, q_begin+nq) to key/value rows
// [k_begin, k_begin+nk) under its own mask.
struct AttnBatch {
  struct Instance {
    Index q_begin, k_begin;
    AttentionMask mask;  // nq x nk
  };
  std::vector<Instance> instances;

  void add(Index q_begin, Index k_begin, AttentionMask mask) {
    instances.push_back({q_begin, k_begin, std::move(mask)});
  }
};

// Row groups for pooling ops: group g covers rows listed in
// indices[offsets[g] .. offsets[g+1]).
struct RowGroups {
  std::vector<Index> offsets{0};
  std::vector<Index> indices;

  void add_group(const std::vector<Index>& rows) {
    indices.insert(indices.end(), rows.begin(), rows.end());
    offsets.push_back(static_cast<Index>(indices.size()));
  }
  Index groups() const { return static_cast<Index>(offsets.size()) - 1; }
};

// Reverse-mode autodiff tape. Values are dense matrices; backward() computes
// gradients of a scalar loss with respect to every parameter leaf and
// accumulates them into the bound ParameterGraph.
//
// With grad_enabled == false the tape computes values only (used for target
// networks, action selection and proposal scoring); nodes carry no closures.
class Tape {
 public:
  Tape(const ParameterGraph& params, bool grad_enabled)
      : params_(&params), grad_(grad_enabled) {}

  bool grad_enabled() const { return grad_; }
  const ParameterGraph& params() const { return *params_; }

  // ---- leaves ----
  Var leaf(Matrix value);                 // constant input, no gradient
  Var param(const std::string& name);     // parameter leaf (gradient target)

  const Matrix& value(Var v) const;
  Index rows(Var v) const { return value(v).rows(); }
  Index cols(Var v) const { return value(v).cols(); }

  // ---- elementwise / linear ----
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var add_rowvec(Var a, Var bias);        // bias is 1 x cols(a)
  Var scale(Var a, Scalar c);
  Var relu(Var a);
  Var elu(Var a);
  Var abs(Var a);
  Var log(Var a);
  Var square(Var a);
  Var transpose(Var a);

  // ---- softmax ----
  // Rowwise softmax, numerically stabilized by max-subtraction.
  Var softmax_rows(Var logits);
  // Masked variant: disallowed entries get exactly zero weight. A fully
  // masked row yields a zero row and sets *any_empty_row (if given).
  Var softmax_rows_masked(Var logits, const AttentionMask& mask, bool* any_empty_row = nullptr);

  // ---- reductions / reshaping ----
  Var sum_all(Var a);    // 1x1
  Var mean_all(Var a);   // 1x1
  Var slice_rows(Var a, std::vector<Index> rows);
  Var concat_cols(Var a, Var b);
  Var concat_rows(Var a, Var b);
  Var row_add(Var a, Index row, Var delta);              // delta is 1 x cols(a)
  Var gather(Var a, std::vector<std::pair<Index, Index>> elems);  // -> n x 1
  Var row_scale(Var a, Var s);                           // s is rows(a) x 1
  Var segment_sum_rows(Var a, std::vector<Index> segment_of_row, Index n_segments);
  Var group_mean_rows(Var a, RowGroups groups);          // empty group -> zero row
  Var rowwise_dot(Var a, Var b);                         // -> rows x 1

  // ---- attention ----
  // Scaled dot-product attention over `heads` independent head slices of the
  // innermost dimension (heads must divide cols). Masked-out logits are set
  // to -inf before the softmax; fully masked query rows produce zero output
  // rows and set *any_fully_masked.
  Var attention_core(Var q, Var k, Var v, const AttnBatch& batch, int heads,
                     bool* any_fully_masked = nullptr);

  // Analytic entropy of a masked categorical row distribution: -sum p log p
  // over allowed entries (entries with p == 0 contribute zero).
  Var entropy_rows_masked(Var probs, const AttentionMask& mask);  // -> rows x 1

  // ---- backward ----
  // loss must be 1x1 and produced by this tape with grad_enabled; gradients
  // are accumulated into `into`, which must be the graph the tape was built
  // against. Parameters not reachable from the loss keep their current
  // (zero-initialized) gradient.
  void backward(Var loss, ParameterGraph& into);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix val;
    const Matrix* view = nullptr;  // parameter leaves reference the graph's
                                   // storage instead of copying it
    Matrix grad;                   // allocated lazily during backward
    std::function<void()> back;
    std::int32_t param_leaf = -1;  // index into param_leaves_
  };

  Var push(Matrix val);
  Node& node(Var v);
  const Node& node(Var v) const;
  // Accumulate g into the gradient of v (allocating a zero buffer on first use).
  void accum(Var v, const Matrix& g);
  bool has_grad(Var v) const;

  const ParameterGraph* params_;
  bool grad_ = true;
  std::vector<Node> nodes_;
  std::vector<std::string> param_leaves_;       // names, parallel to leaf order
  std::vector<std::int32_t> param_leaf_nodes_;  // node ids
};

}  // namespace alma::diff
