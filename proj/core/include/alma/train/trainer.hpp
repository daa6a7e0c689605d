#pragma once

#include <optional>
#include <string>

#include "alma/alloc/allocator.hpp"
#include "alma/baselines/baselines.hpp"
#include "alma/config.hpp"
#include "alma/diff/checkpoint.hpp"
#include "alma/diff/optim.hpp"
#include "alma/exec/executor.hpp"
#include "alma/train/replay.hpp"

namespace alma::train {

// All learnable state of a run: online and target parameter graphs (identical
// name sets; targets synchronized by hard copy), the network definitions, and
// the Pop-Art statistics for the two value heads (plus the snapshots frozen at
// the last target sync, used to denormalize target predictions).
struct Networks {
  ExperimentConfig cfg;
  diff::ParameterGraph online;
  diff::ParameterGraph target;
  exec::UtilityNetwork util;
  exec::MonotonicMixer mixer;
  alloc::ProposalNetwork proposal;
  alloc::AllocationValueNetwork alloc_q;
  diff::PopArtState popart_exec, popart_alloc;
  diff::PopArtState popart_exec_target, popart_alloc_target;

  Networks(const ExperimentConfig& config, std::uint64_t init_seed);

  void sync_targets();
  bool hierarchical() const {
    return cfg.method == Method::Alma || cfg.method == Method::AlmaNoMask;
  }
};

// Allocation decision for the configured method (greedy when eps_p = eps_r = 0).
task::Allocation choose_allocation(const Networks& nets, const env::EnvState& s,
                                   const std::vector<int>& live, double eps_p, double eps_r,
                                   Rng& rng);

// Joint low-level action for the configured method (greedy when eps = 0).
std::vector<int> choose_actions(const Networks& nets, const env::EnvState& s,
                                const task::Allocation& alloc, double eps, Rng& rng);

struct CollectParams {
  std::uint64_t env_seed = 0;
  std::uint64_t explore_seed = 0;
  double eps = 0, eps_p = 0, eps_r = 0;
};
// One full episode: allocations re-decided every N_t steps (and at t = 0),
// frozen in between; low-level actions eps-greedy.
EpisodeRecord collect_episode(const Networks& nets, env::SaveTheCityEnv& env,
                              const CollectParams& params);

struct TrainLosses {
  bool skipped = false;  // buffer below batch size
  double exec = 0, alloc_q = 0, proposal = 0;
  double total() const { return exec + alloc_q + proposal; }
};
// One gradient step on a uniformly sampled batch of episodes: the execution
// TD loss over all steps, the allocation TD loss over window boundaries, and
// the proposal loss over boundary states, summed with unit weights, then
// global-norm clipping and RMSProp.
TrainLosses train_step(Networks& nets, const ReplayBuffer& buffer, Rng& learner_rng);

struct EvalStats {
  double success_rate = 0;
  double mean_return = 0;
  double mean_length = 0;
};
// Greedy evaluation (all exploration rates zero) over `episodes` episodes with
// env seeds derived from `seed_base`.
EvalStats run_greedy_episodes(const Networks& nets, std::uint64_t seed_base, int episodes,
                              int num_threads);

// The full training loop: lockstep rounds of `num_envs` episodes collected in
// parallel against frozen parameters, one train step per collected episode,
// target syncs every target_update_interval episodes, periodic greedy
// evaluations appended to metrics.csv, and periodic checkpoints.
class Trainer {
 public:
  Trainer(const ExperimentConfig& cfg, std::uint64_t seed);

  // Enables metrics/checkpoint/config-echo writes into `dir`.
  void set_out_dir(const std::string& dir);

  void run();

  // Checkpoints: <base>.ckpt (parameters, optimizer state, Pop-Art state, RNG
  // states, run counters) plus <base>.replay (buffer contents for resume).
  void save_checkpoint(const std::string& base) const;
  void load_checkpoint(const std::string& base, bool with_replay = true);

  Networks& networks() { return nets_; }
  const Networks& networks() const { return nets_; }
  ReplayBuffer& buffer() { return buffer_; }
  std::int64_t env_steps() const { return env_steps_; }
  std::int64_t episodes() const { return episodes_; }
  std::uint64_t seed() const { return seed_; }

  // Exposed for tests: one lockstep round (collect num_envs episodes, then
  // train/sync per episode). Returns steps added.
  std::int64_t round();

  EvalStats evaluate_now();

 private:
  void write_metrics_header();
  void append_metrics_row(const EvalStats& ev);
  void maybe_eval_and_checkpoint(std::int64_t steps_before);

  ExperimentConfig cfg_;
  std::uint64_t seed_;
  Networks nets_;
  ReplayBuffer buffer_;
  Rng learner_rng_;
  std::int64_t env_steps_ = 0;
  std::int64_t episodes_ = 0;
  std::int64_t eval_count_ = 0;
  std::int64_t checkpoint_count_ = 0;
  double loss_exec_sum_ = 0, loss_alloc_sum_ = 0, loss_prop_sum_ = 0;
  std::int64_t loss_count_ = 0;
  std::string out_dir_;
  double wall_start_ = 0;
};

bool all_buildings_terminal(const env::EnvState& s);
std::vector<int> live_subtask_ids(const env::EnvState& s);

}  // namespace alma::train
