#pragma once

#include <vector>

#include "alma/diff/layers.hpp"
#include "alma/diff/popart.hpp"
#include "alma/env/savethecity.hpp"
#include "alma/features.hpp"
#include "alma/task/framework.hpp"

namespace alma::exec {

using diff::Index;
using diff::Matrix;
using diff::Tape;
using diff::Var;

struct ExecConfig {
  int feat_dim = task::kFeatureWidth;
  int hidden = 128;       // attention hidden width
  int heads = 4;
  int mixer_hidden = 32;  // mixing network hidden width
  int actions = env::kNumActions;
  bool mask_enabled = true;
  double gamma = 0.99;
};

// AttentionMask restricting an agent to its subtask's entities plus its team
// (exactly the subtask_local_state entity set; self always visible). With the
// no-mask ablation the view admits every entity.
struct MaskedView {
  int agent = -1;
  std::vector<Index> rows;  // admitted entity rows (agents 0..N-1, buildings N..)
};

MaskedView build_masked_view(const env::EnvState& s, const task::Allocation& alloc, int agent,
                             bool mask_enabled);

// Stacked per-step entity groups for batched evaluation. Group g covers entity
// rows [begin, begin+count) of the stacked feature matrix.
struct EntityGroup {
  Index begin = 0;
  Index count = 0;
};

// One utility query: an agent (its entity row) attending to the rows admitted
// by its masked view, all within one group.
struct UtilityQuery {
  int group = 0;
  Index agent_row = 0;              // global row of the agent entity
  std::vector<Index> view_rows;     // global rows admitted by the mask
};

// Shared-parameter attention network over masked local states: the agent's own
// embedding is the query, admitted entities are keys/values, and a dense head
// yields per-action utilities.
class UtilityNetwork {
 public:
  explicit UtilityNetwork(const ExecConfig& cfg, const std::string& prefix = "exec.util");
  void register_into(diff::ParameterGraph& pg, Rng& rng) const;

  // entities: stacked feature matrix leaf; returns (n_queries x actions).
  Var forward(Tape& t, Var entities, const std::vector<EntityGroup>& groups,
              const std::vector<UtilityQuery>& queries) const;

  // Single-agent convenience: utilities for one masked view.
  Matrix utilities(const diff::ParameterGraph& pg, const Matrix& entities,
                   const MaskedView& view) const;

 private:
  diff::Dense embed_;
  diff::MultiHeadAttention attn_;
  diff::Dense post_;
  diff::Dense head_;
  ExecConfig cfg_;
};

// One mixing instance: a subtask's team (possibly empty) with the chosen
// utility of each team agent, plus the rows of the subtask's local state.
struct MixInstance {
  int group = 0;
  std::vector<Index> team_agent_rows;  // entity rows of assigned agents
  std::vector<Index> state_rows;       // local-state rows for the hypernetwork
};

// State-conditioned monotonic mixing: hypernetworks produce non-negative
// (absolute-value) weights per team agent and a state bias; an empty team
// yields the state-dependent bias alone. The output head (w2/b2 generators)
// is the Pop-Art-managed head for the execution value function.
class MonotonicMixer {
 public:
  explicit MonotonicMixer(const ExecConfig& cfg, const std::string& prefix = "exec.mixer");
  void register_into(diff::ParameterGraph& pg, Rng& rng) const;

  // chosen_utils: column with one entry per team agent, ordered as instances'
  // team_agent_rows concatenated. Returns (n_instances x 1) normalized Q_tot.
  Var forward(Tape& t, Var entities, Var chosen_utils,
              const std::vector<MixInstance>& instances) const;

  diff::PopArtHead popart_head() const;

 private:
  diff::Dense state_embed_;
  diff::Dense hyper_w1_;
  diff::Dense hyper_b1_;
  diff::Dense hyper_w2_;
  diff::Dense hyper_b2_l1_;
  diff::Dense hyper_b2_l2_;
  ExecConfig cfg_;
};

// Decentralized greedy selection: each agent independently argmaxes its own
// utilities; ties break to the lowest action index.
std::vector<int> greedy_joint_action(const diff::ParameterGraph& pg, const UtilityNetwork& util,
                                     const env::EnvState& s, const env::EnvConfig& env_cfg,
                                     const task::Allocation& alloc, const ExecConfig& cfg);

// Per agent independently: uniform random action with probability eps, else
// the greedy action.
std::vector<int> epsilon_greedy(const diff::ParameterGraph& pg, const UtilityNetwork& util,
                                const env::EnvState& s, const env::EnvConfig& env_cfg,
                                const task::Allocation& alloc, const ExecConfig& cfg, double eps,
                                Rng& rng);

// One per-step transition for the factored TD loss. `alloc_next` is the
// allocation actually used at t+1 (the new teams at a window boundary).
struct StepItem {
  const env::EnvState* s = nullptr;
  const env::EnvState* s_next = nullptr;
  const task::Allocation* alloc = nullptr;
  const task::Allocation* alloc_next = nullptr;
  const std::vector<int>* actions = nullptr;
  const std::vector<double>* rewards = nullptr;  // per subtask (or {global} for flat)
  std::vector<std::uint8_t> live;                // subtask live at t
  std::vector<std::uint8_t> live_next;           // subtask live at t+1
  bool env_terminal = false;                     // true termination (not step cap)
};

struct TdLossStats {
  Var loss;          // 1x1 on the online tape
  double value = 0;  // scalar loss value
  int instances = 0;
};

// Factored TD loss over (step, live subtask) instances with double-Q targets:
// online-network argmax, target-network evaluation, Pop-Art-normalized
// targets. Subtasks with empty teams contribute only if their reward is
// nonzero; a subtask that is terminal at t+1 (or episode termination) drops
// the bootstrap.
//
// `frozen_targets`, when given, replaces the whole target computation
// (bootstrap, Pop-Art update) with the supplied normalized targets, one per
// included instance; targets carry no gradient, so this yields a pure
// function of the parameters for finite-difference checks and oracles.
TdLossStats execution_td_loss(Tape& online_tape, diff::ParameterGraph& online_pg,
                              const diff::ParameterGraph& target_pg, const UtilityNetwork& util,
                              const MonotonicMixer& mixer, diff::PopArtState& popart,
                              const diff::PopArtState& popart_target,
                              const std::vector<StepItem>& items, const ExecConfig& cfg,
                              const env::EnvConfig& env_cfg,
                              const std::vector<double>* frozen_targets = nullptr);

// Included (item, subtask) instances in loss order, after the live/empty-team
// rules. Lets tests line frozen targets up with instances.
std::vector<std::pair<int, int>> td_loss_instances(const std::vector<StepItem>& items);

}  // namespace alma::exec
