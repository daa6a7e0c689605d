#include "alma/train/trainer.hpp"

#include <chrono>
#include <map>
#include <filesystem>
#include <fstream>
#include <thread>

namespace alma::train {

namespace {

constexpr std::uint64_t kEnvStream = 0x01;
constexpr std::uint64_t kExploreStream = 0x02;
constexpr std::uint64_t kEvalStream = 0x03;
constexpr std::uint64_t kInitStream = 0x04;
constexpr std::uint64_t kLearnerStream = 0x05;

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

int resolve_threads(int requested, int num_envs) {
  if (requested > 0) return std::min(requested, num_envs);
  const unsigned hw = std::thread::hardware_concurrency();
  return std::max(1, std::min<int>(hw == 0 ? 1 : static_cast<int>(hw), num_envs));
}

// Runs fn(k) for k in [0, n) across up to nt threads; results must only touch
// slot k, so the outcome is independent of the thread count.
void parallel_for(int n, int nt, const std::function<void(int)>& fn) {
  nt = std::max(1, std::min(nt, n));
  if (nt == 1) {
    for (int k = 0; k < n; ++k) fn(k);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(nt));
  for (int tid = 0; tid < nt; ++tid)
    threads.emplace_back([&, tid] {
      for (int k = tid; k < n; k += nt) fn(k);
    });
  for (auto& t : threads) t.join();
}

}  // namespace

bool all_buildings_terminal(const env::EnvState& s) {
  for (const auto& b : s.buildings)
    if (!b.terminal()) return false;
  return true;
}

std::vector<int> live_subtask_ids(const env::EnvState& s) {
  std::vector<int> live;
  for (std::size_t i = 0; i < s.buildings.size(); ++i)
    if (!s.buildings[i].terminal()) live.push_back(static_cast<int>(i));
  return live;
}

Networks::Networks(const ExperimentConfig& config, std::uint64_t init_seed)
    : cfg(config),
      util(config.exec_config()),
      mixer(config.exec_config()),
      proposal(config.alloc_config()),
      alloc_q(config.alloc_config()) {
  Rng init_rng(derive_seed(init_seed, {kInitStream}));
  util.register_into(online, init_rng);
  mixer.register_into(online, init_rng);
  proposal.register_into(online, init_rng);
  alloc_q.register_into(online, init_rng);
  Rng scratch(0);
  util.register_into(target, scratch);
  mixer.register_into(target, scratch);
  proposal.register_into(target, scratch);
  alloc_q.register_into(target, scratch);
  target.copy_values_from(online);

  popart_exec.decay = popart_alloc.decay = cfg.popart_decay;
  popart_exec.std_floor = popart_alloc.std_floor = cfg.popart_floor;
  popart_exec_target = popart_exec;
  popart_alloc_target = popart_alloc;
}

void Networks::sync_targets() {
  target.copy_values_from(online);
  popart_exec_target = popart_exec;
  popart_alloc_target = popart_alloc;
}

task::Allocation choose_allocation(const Networks& nets, const env::EnvState& s,
                                   const std::vector<int>& live, double eps_p, double eps_r,
                                   Rng& rng) {
  switch (nets.cfg.method) {
    case Method::Alma:
    case Method::AlmaNoMask:
      return alloc::exploratory_allocation(nets.online, nets.online, nets.proposal, nets.alloc_q,
                                           s, nets.cfg.env, live, nets.cfg.n_proposals, eps_p,
                                           eps_r, rng);
    case Method::Heuristic: return baselines::heuristic_allocate(s);
    case Method::Random: return baselines::random_allocate(s, rng);
    case Method::Flat: {
      task::Allocation a;
      a.subtask_of_agent.assign(s.agents.size(), 0);
      return a;
    }
  }
  throw UsageError("choose_allocation: unreachable");
}

std::vector<int> choose_actions(const Networks& nets, const env::EnvState& s,
                                const task::Allocation& alloc, double eps, Rng& rng) {
  return exec::epsilon_greedy(nets.online, nets.util, s, nets.cfg.env, alloc,
                              nets.cfg.exec_config(), eps, rng);
}

EpisodeRecord collect_episode(const Networks& nets, env::SaveTheCityEnv& env,
                              const CollectParams& params) {
  env.reset(params.env_seed);
  Rng explore(params.explore_seed);
  EpisodeRecord rec;
  task::Allocation current;

  for (int t = 0; !env.state().done; ++t) {
    if (t % nets.cfg.alloc_interval == 0 || !nets.hierarchical()) {
      const std::vector<int> live = live_subtask_ids(env.state());
      current = choose_allocation(nets, env.state(), live, params.eps_p, params.eps_r, explore);
    }
    EpisodeStep step;
    step.state = env.state();
    step.alloc = current;
    step.actions = choose_actions(nets, step.state, current, params.eps, explore);

    std::vector<env::Action> acts(step.actions.size());
    for (std::size_t i = 0; i < acts.size(); ++i)
      acts[i] = static_cast<env::Action>(step.actions[i]);
    const env::StepResult sr = env.step(acts);
    step.reward_per_subtask = sr.rewards.per_subtask;
    step.reward_global = sr.rewards.global;
    rec.steps.push_back(std::move(step));
  }
  rec.final_state = env.state();
  rec.terminated = all_buildings_terminal(rec.final_state);
  rec.success = rec.final_state.success;
  return rec;
}

TrainLosses train_step(Networks& nets, const ReplayBuffer& buffer, Rng& learner_rng) {
  const ExperimentConfig& cfg = nets.cfg;
  TrainLosses out;
  if (buffer.size() < static_cast<std::size_t>(cfg.batch_size)) {
    out.skipped = true;
    return out;
  }

  std::vector<const EpisodeRecord*> batch;
  batch.reserve(static_cast<std::size_t>(cfg.batch_size));
  for (int i = 0; i < cfg.batch_size; ++i) batch.push_back(&buffer.sample(learner_rng));

  const bool flat = cfg.method == Method::Flat;
  const bool hier = nets.hierarchical();

  // Scratch storage referenced by the loss items (stable addresses).
  std::size_t total_steps = 0;
  for (const auto* ep : batch) total_steps += ep->steps.size();
  std::vector<std::vector<double>> flat_rewards;
  if (flat) flat_rewards.reserve(total_steps);

  std::vector<exec::StepItem> exec_items;
  exec_items.reserve(total_steps);
  std::vector<alloc::AllocTdItem> alloc_items;
  std::vector<alloc::ProposalLossInput> prop_batch;

  auto live_flags = [](const env::EnvState& s) {
    std::vector<std::uint8_t> f(s.buildings.size());
    for (std::size_t i = 0; i < s.buildings.size(); ++i) f[i] = !s.buildings[i].terminal();
    return f;
  };

  for (const auto* ep : batch) {
    const int len = ep->length();
    for (int t = 0; t < len; ++t) {
      const EpisodeStep& st = ep->steps[static_cast<std::size_t>(t)];
      const bool last = t + 1 == len;
      exec::StepItem item;
      item.s = &st.state;
      item.s_next = last ? &ep->final_state : &ep->steps[static_cast<std::size_t>(t + 1)].state;
      item.alloc = &st.alloc;
      item.alloc_next = last ? &st.alloc : &ep->steps[static_cast<std::size_t>(t + 1)].alloc;
      item.actions = &st.actions;
      if (flat) {
        flat_rewards.push_back({st.reward_global});
        item.rewards = &flat_rewards.back();
        item.live = {1};
        item.live_next = {1};
      } else {
        item.rewards = &st.reward_per_subtask;
        item.live = live_flags(st.state);
        item.live_next = live_flags(*item.s_next);
      }
      item.env_terminal = last && ep->terminated;
      exec_items.push_back(std::move(item));
    }

    if (hier) {
      for (int t = 0; t < len; t += cfg.alloc_interval) {
        const EpisodeStep& st = ep->steps[static_cast<std::size_t>(t)];
        alloc::AllocTdItem item;
        item.s = &st.state;
        item.alloc = &st.alloc;
        const int window_end = std::min(t + cfg.alloc_interval, len);
        for (int u = t; u < window_end; ++u)
          item.window_reward += ep->steps[static_cast<std::size_t>(u)].reward_global;
        item.s_next = window_end == len ? &ep->final_state
                                        : &ep->steps[static_cast<std::size_t>(window_end)].state;
        item.terminal = window_end == len && ep->terminated;
        item.live_next = live_subtask_ids(*item.s_next);
        alloc_items.push_back(std::move(item));

        alloc::ProposalLossInput pin;
        pin.s = &st.state;
        pin.live = live_subtask_ids(st.state);
        if (!pin.live.empty()) prop_batch.push_back(std::move(pin));
      }
    }
  }

  const exec::ExecConfig exec_cfg = cfg.exec_config();
  const alloc::AllocConfig alloc_cfg = cfg.alloc_config();

  // One amortized-argmax pass per unique boundary state, shared by the
  // proposal loss (b*(s_t)) and the allocation TD targets (b*(s_{t+N_t})).
  if (hier) {
    std::map<const env::EnvState*, std::size_t> slot;
    std::vector<const env::EnvState*> uniq;
    std::vector<std::vector<int>> lives;
    auto intern = [&](const env::EnvState* s) {
      auto it = slot.find(s);
      if (it != slot.end()) return it->second;
      const std::size_t idx = uniq.size();
      slot.emplace(s, idx);
      uniq.push_back(s);
      lives.push_back(live_subtask_ids(*s));
      return idx;
    };
    for (const auto& pin : prop_batch) intern(pin.s);
    for (const auto& item : alloc_items)
      if (!item.terminal && !item.live_next.empty()) intern(item.s_next);

    const std::vector<task::Allocation> bstars = alloc::best_of_proposals_batch(
        nets.online, nets.target, nets.proposal, nets.alloc_q, uniq, lives, cfg.env,
        cfg.n_proposals, learner_rng);
    for (auto& pin : prop_batch) pin.bstar = bstars[slot.at(pin.s)];
    for (auto& item : alloc_items)
      if (!item.terminal && !item.live_next.empty())
        item.bstar_next = bstars[slot.at(item.s_next)];
  }

  diff::Tape tape(nets.online, /*grad=*/true);
  const exec::TdLossStats exec_loss =
      exec::execution_td_loss(tape, nets.online, nets.target, nets.util, nets.mixer,
                              nets.popart_exec, nets.popart_exec_target, exec_items, exec_cfg,
                              cfg.env);
  diff::Var total = exec_loss.loss;
  out.exec = exec_loss.value;

  if (hier) {
    const alloc::ScalarLoss alloc_loss = alloc::allocation_td_loss(
        tape, nets.online, nets.target, nets.proposal, nets.alloc_q, nets.popart_alloc,
        nets.popart_alloc_target, alloc_items, cfg.env, alloc_cfg, learner_rng);
    const alloc::ScalarLoss prop_loss =
        alloc::aql_proposal_loss(tape, nets.target, nets.proposal, nets.alloc_q, prop_batch,
                                 cfg.env, alloc_cfg, learner_rng);
    total = tape.add(total, tape.add(alloc_loss.loss, prop_loss.loss));
    out.alloc_q = alloc_loss.value;
    out.proposal = prop_loss.value;
  }

  nets.online.zero_grads();
  tape.backward(total, nets.online);
  diff::clip_global_norm(nets.online, cfg.grad_clip);
  diff::rmsprop_step(nets.online, cfg.lr, cfg.rmsprop_alpha, cfg.rmsprop_eps);
  return out;
}

EvalStats run_greedy_episodes(const Networks& nets, std::uint64_t seed_base, int episodes,
                              int num_threads) {
  std::vector<double> success(static_cast<std::size_t>(episodes));
  std::vector<double> returns(static_cast<std::size_t>(episodes));
  std::vector<double> lengths(static_cast<std::size_t>(episodes));
  parallel_for(episodes, resolve_threads(num_threads, episodes), [&](int j) {
    env::SaveTheCityEnv env(nets.cfg.env);
    CollectParams p;
    p.env_seed = derive_seed(seed_base, {kEnvStream, static_cast<std::uint64_t>(j)});
    p.explore_seed = derive_seed(seed_base, {kExploreStream, static_cast<std::uint64_t>(j)});
    p.eps = p.eps_p = p.eps_r = 0;
    const EpisodeRecord rec = collect_episode(nets, env, p);
    success[static_cast<std::size_t>(j)] = rec.success ? 1.0 : 0.0;
    returns[static_cast<std::size_t>(j)] = rec.total_reward();
    lengths[static_cast<std::size_t>(j)] = rec.length();
  });
  EvalStats st;
  for (int j = 0; j < episodes; ++j) {
    st.success_rate += success[static_cast<std::size_t>(j)];
    st.mean_return += returns[static_cast<std::size_t>(j)];
    st.mean_length += lengths[static_cast<std::size_t>(j)];
  }
  st.success_rate /= episodes;
  st.mean_return /= episodes;
  st.mean_length /= episodes;
  return st;
}

Trainer::Trainer(const ExperimentConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      seed_(seed),
      nets_(cfg, seed),
      buffer_(static_cast<std::size_t>(cfg.buffer_capacity)),
      learner_rng_(derive_seed(seed, {kLearnerStream})) {
  cfg_.validate();
  wall_start_ = now_seconds();
}

void Trainer::set_out_dir(const std::string& dir) {
  out_dir_ = dir;
  std::filesystem::create_directories(dir);
  std::ofstream cfg_echo(out_dir_ + "/config.cfg", std::ios::trunc);
  cfg_echo << cfg_.to_string();
}

std::int64_t Trainer::round() {
  const int n = cfg_.num_envs;
  const double eps = cfg_.eps.value(env_steps_);
  const double eps_p = cfg_.eps_p.value(env_steps_);
  const double eps_r = cfg_.eps_r.value(env_steps_);

  std::vector<EpisodeRecord> collected(static_cast<std::size_t>(n));
  parallel_for(n, resolve_threads(cfg_.num_threads, n), [&](int k) {
    env::SaveTheCityEnv env(cfg_.env);
    CollectParams p;
    const auto ep_index = static_cast<std::uint64_t>(episodes_ + k);
    p.env_seed = derive_seed(seed_, {kEnvStream, static_cast<std::uint64_t>(k), ep_index});
    p.explore_seed =
        derive_seed(seed_, {kExploreStream, static_cast<std::uint64_t>(k), ep_index});
    p.eps = eps;
    p.eps_p = eps_p;
    p.eps_r = eps_r;
    collected[static_cast<std::size_t>(k)] = collect_episode(nets_, env, p);
  });

  std::int64_t added = 0;
  for (int k = 0; k < n; ++k) {
    added += collected[static_cast<std::size_t>(k)].length();
    buffer_.add(std::move(collected[static_cast<std::size_t>(k)]));
    episodes_ += 1;
    for (int i = 0; i < cfg_.train_steps_per_episode; ++i) {
      const TrainLosses losses = train_step(nets_, buffer_, learner_rng_);
      if (!losses.skipped) {
        loss_exec_sum_ += losses.exec;
        loss_alloc_sum_ += losses.alloc_q;
        loss_prop_sum_ += losses.proposal;
        loss_count_ += 1;
      }
    }
    if (episodes_ % cfg_.target_update_interval == 0) nets_.sync_targets();
  }
  env_steps_ += added;
  return added;
}

EvalStats Trainer::evaluate_now() {
  const std::uint64_t base = derive_seed(seed_, {kEvalStream, static_cast<std::uint64_t>(
                                                                  eval_count_)});
  eval_count_ += 1;
  return run_greedy_episodes(nets_, base, cfg_.eval_episodes,
                             resolve_threads(cfg_.num_threads, cfg_.eval_episodes));
}

void Trainer::write_metrics_header() {
  if (out_dir_.empty()) return;
  std::ofstream os(out_dir_ + "/metrics.csv", std::ios::trunc);
  os << "env_steps,episodes,success_rate_eval,mean_return,loss_exec,loss_alloc_q,"
        "loss_proposal,eps,eps_p,eps_r,wall_clock_s\n";
}

void Trainer::append_metrics_row(const EvalStats& ev) {
  if (out_dir_.empty()) return;
  std::ofstream os(out_dir_ + "/metrics.csv", std::ios::app);
  os.precision(17);
  const auto mean = [&](double sum) { return loss_count_ ? sum / loss_count_ : 0.0; };
  os << env_steps_ << ',' << episodes_ << ',' << ev.success_rate << ',' << ev.mean_return << ','
     << mean(loss_exec_sum_) << ',' << mean(loss_alloc_sum_) << ',' << mean(loss_prop_sum_) << ','
     << cfg_.eps.value(env_steps_) << ',' << cfg_.eps_p.value(env_steps_) << ','
     << cfg_.eps_r.value(env_steps_) << ',' << now_seconds() - wall_start_ << "\n";
  loss_exec_sum_ = loss_alloc_sum_ = loss_prop_sum_ = 0;
  loss_count_ = 0;
}

void Trainer::maybe_eval_and_checkpoint(std::int64_t steps_before) {
  const std::int64_t evals_due = env_steps_ / cfg_.eval_interval;
  const std::int64_t evals_done = steps_before / cfg_.eval_interval;
  for (std::int64_t i = evals_done; i < evals_due; ++i) append_metrics_row(evaluate_now());

  if (!out_dir_.empty()) {
    const std::int64_t cks_due = env_steps_ / cfg_.checkpoint_interval;
    if (cks_due > checkpoint_count_) {
      checkpoint_count_ = cks_due;
      save_checkpoint(out_dir_ + "/ckpt_" + std::to_string(env_steps_));
    }
  }
}

void Trainer::run() {
  write_metrics_header();
  if (!out_dir_.empty() && env_steps_ == 0) save_checkpoint(out_dir_ + "/ckpt_init");
  while (env_steps_ < cfg_.total_env_steps) {
    const std::int64_t before = env_steps_;
    round();
    maybe_eval_and_checkpoint(before);
  }
  if (!out_dir_.empty()) save_checkpoint(out_dir_ + "/ckpt_final");
}

void Trainer::save_checkpoint(const std::string& base) const {
  diff::Checkpoint ck;
  ck.put_params("online", nets_.online, /*with_optimizer=*/true);
  ck.put_params("target", nets_.target, /*with_optimizer=*/false);
  ck.put_popart("popart.exec", nets_.popart_exec);
  ck.put_popart("popart.alloc", nets_.popart_alloc);
  ck.put_popart("popart.exec_target", nets_.popart_exec_target);
  ck.put_popart("popart.alloc_target", nets_.popart_alloc_target);
  ck.blobs["rng.learner"] = learner_rng_.serialize();
  ck.put_u64("run.env_steps", static_cast<std::uint64_t>(env_steps_));
  ck.put_u64("run.episodes", static_cast<std::uint64_t>(episodes_));
  ck.put_u64("run.eval_count", static_cast<std::uint64_t>(eval_count_));
  ck.put_u64("run.checkpoint_count", static_cast<std::uint64_t>(checkpoint_count_));
  ck.put_u64("run.loss_count", static_cast<std::uint64_t>(loss_count_));
  diff::Tensor acc(1, 3);
  acc.mat() << loss_exec_sum_, loss_alloc_sum_, loss_prop_sum_;
  ck.tensors["run.loss_sums"] = acc;
  ck.save(base + ".ckpt");
  buffer_.save(base + ".replay");
}

void Trainer::load_checkpoint(const std::string& base, bool with_replay) {
  const diff::Checkpoint ck = diff::Checkpoint::load(base + ".ckpt");
  ck.load_params("online", nets_.online, /*with_optimizer=*/true);
  ck.load_params("target", nets_.target, /*with_optimizer=*/false);
  nets_.popart_exec = ck.get_popart("popart.exec");
  nets_.popart_alloc = ck.get_popart("popart.alloc");
  nets_.popart_exec_target = ck.get_popart("popart.exec_target");
  nets_.popart_alloc_target = ck.get_popart("popart.alloc_target");
  nets_.popart_exec.std_floor = nets_.popart_alloc.std_floor = cfg_.popart_floor;
  nets_.popart_exec_target.std_floor = nets_.popart_alloc_target.std_floor = cfg_.popart_floor;
  auto it = ck.blobs.find("rng.learner");
  if (it == ck.blobs.end()) throw ConfigError("checkpoint: missing learner RNG state");
  learner_rng_.deserialize(it->second);
  env_steps_ = static_cast<std::int64_t>(ck.get_u64("run.env_steps"));
  episodes_ = static_cast<std::int64_t>(ck.get_u64("run.episodes"));
  eval_count_ = static_cast<std::int64_t>(ck.get_u64("run.eval_count"));
  checkpoint_count_ = static_cast<std::int64_t>(ck.get_u64("run.checkpoint_count"));
  loss_count_ = static_cast<std::int64_t>(ck.get_u64("run.loss_count"));
  auto at = ck.tensors.find("run.loss_sums");
  if (at == ck.tensors.end() || at->second.size() != 3)
    throw ConfigError("checkpoint: missing loss accumulators");
  loss_exec_sum_ = at->second.mat()(0, 0);
  loss_alloc_sum_ = at->second.mat()(0, 1);
  loss_prop_sum_ = at->second.mat()(0, 2);
  if (with_replay) buffer_.load(base + ".replay");
}

}  // namespace alma::train
