#include "alma/diff/layers.hpp"

namespace alma::diff {

void Dense::register_into(ParameterGraph& pg, Rng& rng) const {
  Tensor& w = pg.add(weight_name(), in_, out_);
  init_uniform_fan_in(w, in_, rng);
  pg.add(bias_name(), 1, out_);  // biases start at zero
}

Var Dense::forward(Tape& t, Var x) const {
  if (t.cols(x) != in_)
    throw ConfigError("Dense '" + prefix_ + "': input width " + std::to_string(t.cols(x)) +
                      " != layer input width " + std::to_string(in_));
  Var w = t.param(weight_name());
  Var b = t.param(bias_name());
  return t.add_rowvec(t.matmul(x, w), b);
}

void MultiHeadAttention::register_into(ParameterGraph& pg, Rng& rng) const {
  wq_.register_into(pg, rng);
  wk_.register_into(pg, rng);
  wv_.register_into(pg, rng);
  wo_.register_into(pg, rng);
}

Var MultiHeadAttention::forward(Tape& t, Var q_in, Var kv_in, const AttnBatch& batch,
                                bool* any_fully_masked) const {
  Var q = wq_.forward(t, q_in);
  Var k = wk_.forward(t, kv_in);
  Var v = wv_.forward(t, kv_in);
  Var core = t.attention_core(q, k, v, batch, heads_, any_fully_masked);
  return wo_.forward(t, core);
}

Var MultiHeadAttention::forward(Tape& t, Var q_in, Var k_in, Var v_in,
                                const AttentionMask& mask, bool* any_fully_masked) const {
  if (mask.n_queries != t.rows(q_in) || mask.n_keys != t.rows(k_in))
    throw ConfigError("MultiHeadAttention: mask dimensions do not match query/key counts");
  Var q = wq_.forward(t, q_in);
  Var k = wk_.forward(t, k_in);
  Var v = wv_.forward(t, v_in);
  AttnBatch batch;
  batch.add(0, 0, mask);
  Var core = t.attention_core(q, k, v, batch, heads_, any_fully_masked);
  return wo_.forward(t, core);
}

}  // namespace alma::diff
