#pragma once

#include <optional>

#include "alma/alloc/networks.hpp"

namespace alma::alloc {

// One autoregressive pass through the proposal distribution, assigning agents
// in ascending id order. Each factor is softmax_i(g_i^T h_a) over live
// subtasks, with the chosen subtask's embedding updated afterwards:
// g' = g + f^u(g, h_a). If `forced` is given the chain is teacher-forced along
// it; otherwise each factor is sampled with `rng`.
struct ChainResult {
  task::Allocation alloc;
  Var log_prob;                   // 1x1
  Var entropy_sum;                // 1x1 (sum of per-factor entropies)
  std::vector<Matrix> factors;    // per agent: 1 x n_subtasks probabilities
};
ChainResult run_proposal_chain(Tape& t, const ProposalNetwork& net, const env::EnvState& s,
                               const env::EnvConfig& env_cfg, const std::vector<int>& live,
                               const task::Allocation* forced, Rng* rng);

// Probability vector of agent `agent`'s factor, conditioned on a partial
// allocation prefix covering agents ordered before it.
std::vector<double> propose_factor(const diff::ParameterGraph& pg, const ProposalNetwork& net,
                                   const env::EnvState& s, const env::EnvConfig& env_cfg,
                                   const std::vector<int>& live,
                                   const std::vector<int>& prefix, int agent);

// Sampled allocation with its log-probability (tape-free fast path; matches
// the chain's factors bit-for-bit given the same embeddings).
struct SampleBatch {
  std::vector<task::Allocation> allocs;
  std::vector<double> log_probs;
};
SampleBatch sample_allocations(const diff::ParameterGraph& pg, const ProposalNetwork& net,
                               const env::EnvState& s, const env::EnvConfig& env_cfg,
                               const std::vector<int>& live, int count, Rng& rng);

// Amortized maximization: the argmax-Q member of `n_proposals` samples from
// the proposal distribution; ties break to the lowest sample index. Q-values
// come from `q_pg` (online during execution, the target graph at loss time).
struct BestOfResult {
  task::Allocation best;
  int best_index = 0;
  double best_q = 0;  // normalized-space value
  SampleBatch samples;
  std::vector<double> q_values;
};
BestOfResult best_of_proposals(const diff::ParameterGraph& prop_pg,
                               const diff::ParameterGraph& q_pg, const ProposalNetwork& net,
                               const AllocationValueNetwork& qnet, const env::EnvState& s,
                               const env::EnvConfig& env_cfg, const std::vector<int>& live,
                               int n_proposals, Rng& rng);

// Batched variant for loss computation: proposal sampling per state, then one
// Q-network pass scoring every (state, sample) pair. Same tie rule.
std::vector<task::Allocation> best_of_proposals_batch(
    const diff::ParameterGraph& prop_pg, const diff::ParameterGraph& q_pg,
    const ProposalNetwork& net, const AllocationValueNetwork& qnet,
    const std::vector<const env::EnvState*>& states, const std::vector<std::vector<int>>& lives,
    const env::EnvConfig& env_cfg, int n_proposals, Rng& rng);

// Allocation-level exploration: with probability eps_p take a raw proposal
// sample instead of the amortized argmax; then, independently per agent, with
// probability eps_r overwrite the assignment uniformly over live subtasks.
task::Allocation exploratory_allocation(const diff::ParameterGraph& prop_pg,
                                        const diff::ParameterGraph& q_pg,
                                        const ProposalNetwork& net,
                                        const AllocationValueNetwork& qnet,
                                        const env::EnvState& s, const env::EnvConfig& env_cfg,
                                        const std::vector<int>& live, int n_proposals,
                                        double eps_p, double eps_r, Rng& rng);

// Proposal (AQL) loss over a batch of states: mean of
// -log f(b*(s)|s) - lambda * sum_a H(factor_a), with b* the argmax-Q proposal
// sample (Q from `q_pg`, the target graph).
struct ProposalLossInput {
  const env::EnvState* s = nullptr;
  std::vector<int> live;
  // b* is a constant in the loss (no gradient flows through its selection);
  // when set it is used directly instead of re-running best_of_proposals.
  std::optional<task::Allocation> bstar;
};
struct ScalarLoss {
  Var loss;
  double value = 0;
};
ScalarLoss aql_proposal_loss(Tape& online_tape, const diff::ParameterGraph& q_pg,
                             const ProposalNetwork& net, const AllocationValueNetwork& qnet,
                             const std::vector<ProposalLossInput>& batch,
                             const env::EnvConfig& env_cfg, const AllocConfig& cfg, Rng& rng);

// Dilated TD loss for the allocation value function: squared error between
// Q(s_t, b_t) and y = sum of global rewards over the window + gamma *
// Q_target(s_next, b*(s_next)), with Pop-Art-normalized targets.
struct AllocTdItem {
  const env::EnvState* s = nullptr;
  const task::Allocation* alloc = nullptr;
  double window_reward = 0;  // global reward summed over the N_t window
  const env::EnvState* s_next = nullptr;
  std::vector<int> live_next;
  bool terminal = false;  // environment termination (time-limit bootstraps)
  // precomputed b*(s_next); when set, all bootstrap values are evaluated in
  // one batched target pass instead of per-item proposal rounds
  std::optional<task::Allocation> bstar_next;
};
// `frozen_targets`, when given, supplies the normalized targets directly (one
// per item), bypassing b* recomputation and the Pop-Art update; targets carry
// no gradient, so this gives a pure function of the parameters for
// finite-difference checks and oracles.
ScalarLoss allocation_td_loss(Tape& online_tape, diff::ParameterGraph& online_pg,
                              const diff::ParameterGraph& target_pg, const ProposalNetwork& net,
                              const AllocationValueNetwork& qnet,
                              diff::PopArtState& popart, const diff::PopArtState& popart_target,
                              const std::vector<AllocTdItem>& items,
                              const env::EnvConfig& env_cfg, const AllocConfig& cfg, Rng& rng,
                              const std::vector<double>* frozen_targets = nullptr);

}  // namespace alma::alloc
