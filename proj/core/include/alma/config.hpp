#pragma once

#include <cstdint>
#include <string>

#include "alma/alloc/networks.hpp"
#include "alma/env/savethecity.hpp"
#include "alma/exec/executor.hpp"
#include "alma/train/schedule.hpp"

namespace alma {

enum class Method { Alma, AlmaNoMask, Flat, Heuristic, Random };

std::string method_name(Method m);
Method parse_method(const std::string& name);

// Every hyperparameter of a run: defaults mirror the published settings; a
// config file overrides them section by section. Unknown keys are rejected,
// and the resolved config is echoed verbatim into each run's output directory.
struct ExperimentConfig {
  Method method = Method::Alma;

  env::EnvConfig env;

  // [alloc]
  double lambda_aql = 0.01;
  int n_proposals = 32;       // N_p
  int alloc_interval = 5;     // N_t
  int embed_dim = 128;
  train::Schedule eps_p{1.0, 0.05, 3'000'000};
  train::Schedule eps_r{1.0, 0.0, 750'000};

  // [exec]
  int hidden_dim = 128;
  int mixer_hidden = 32;
  int attn_heads = 4;
  train::Schedule eps{1.0, 0.05, 2'000'000};

  // [train]
  double lr = 0.0005;
  double rmsprop_alpha = 0.99;
  double rmsprop_eps = 1e-5;
  int target_update_interval = 200;  // episodes
  int batch_size = 32;               // episodes per gradient step
  double grad_clip = 10.0;
  int buffer_capacity = 5000;
  double gamma = 0.99;
  std::int64_t total_env_steps = 2'000'000;
  int train_steps_per_episode = 1;
  int num_envs = 8;
  int num_threads = 0;  // 0 = min(hardware, num_envs); never affects results
  std::int64_t eval_interval = 10'000;
  int eval_episodes = 32;
  std::int64_t checkpoint_interval = 100'000;
  double popart_decay = 0.01;
  double popart_floor = 1e-4;
  std::string weight_init = "fan_in_uniform";  // recorded for reproducibility

  bool mask_enabled() const { return method != Method::AlmaNoMask && method != Method::Flat; }
  int subtask_slots() const { return env.buildings(env.max_agents); }

  exec::ExecConfig exec_config() const;
  alloc::AllocConfig alloc_config() const;

  void validate() const;
  std::string to_string() const;  // resolved config, parseable by from_string

  static ExperimentConfig from_string(const std::string& text);
  static ExperimentConfig from_file(const std::string& path);
};

}  // namespace alma
