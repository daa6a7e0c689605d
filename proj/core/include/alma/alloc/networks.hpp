#pragma once

#include <vector>

#include "alma/diff/layers.hpp"
#include "alma/diff/popart.hpp"
#include "alma/env/savethecity.hpp"
#include "alma/features.hpp"

namespace alma::alloc {

using diff::Index;
using diff::Matrix;
using diff::Tape;
using diff::Var;

struct AllocConfig {
  int feat_dim = task::kFeatureWidth;
  int embed_dim = 128;  // d
  int heads = 4;
  int subtask_slots = 6;  // one-hot width for assigned-subtask features
  double lambda_aql = 0.01;
  int n_proposals = 32;  // N_p
  double gamma = 0.99;
};

// Proposal distribution modules: agent embedder f^h, subtask embedder f^g
// (attention-pooled over the subtask's entities, with a learned placeholder
// for zero-entity subtasks), and the subtask embedding update f^u applied
// after each assignment.
class ProposalNetwork {
 public:
  explicit ProposalNetwork(const AllocConfig& cfg, const std::string& prefix = "prop");
  void register_into(diff::ParameterGraph& pg, Rng& rng) const;

  struct Embeddings {
    Var h;  // n_agents x d
    Var g;  // n_subtasks x d
  };
  // Embeds one state; g rows exist for every subtask (live or not), terminal
  // subtasks are excluded later by the factor mask.
  Embeddings embed(Tape& t, const env::EnvState& s, const env::EnvConfig& env_cfg) const;

  // f^u(g_row, h_row): the additive update to the chosen subtask's embedding.
  Var update(Tape& t, Var g_row, Var h_row) const;

  // f^g over explicit per-subtask entity row lists (0..k entities each; an
  // empty list selects the learned placeholder embedding).
  Var subtask_embeddings(Tape& t, const Matrix& entity_feats,
                         const std::vector<std::vector<Index>>& rows_per_subtask) const;

  // Parameter names of f^u's two layers (used by the fast sampler).
  const diff::Mlp2& fu() const { return fu_; }

 private:
  diff::Mlp2 fh_;
  diff::Dense g_embed_;
  diff::MultiHeadAttention g_attn_;
  diff::Dense g_out_;
  diff::Mlp2 fu_;
  std::string g_empty_name_;
  AllocConfig cfg_;
};

// Allocation value function Q(s, b): entity features augmented with the
// one-hot of each entity's assigned/owning subtask, self-attention, mean
// pooling, dense head to a scalar. Output is in the Pop-Art-normalized space.
class AllocationValueNetwork {
 public:
  explicit AllocationValueNetwork(const AllocConfig& cfg, const std::string& prefix = "alloc_q");
  void register_into(diff::ParameterGraph& pg, Rng& rng) const;

  // Batched: one scalar per (state, allocation) pair. Returns (n x 1).
  Var forward(Tape& t, const std::vector<const env::EnvState*>& states,
              const std::vector<const task::Allocation*>& allocs,
              const env::EnvConfig& env_cfg) const;

  diff::PopArtHead popart_head() const;

 private:
  diff::Dense embed_;
  diff::MultiHeadAttention attn_;
  diff::Dense post_;
  diff::Dense head_;
  AllocConfig cfg_;
};

}  // namespace alma::alloc
