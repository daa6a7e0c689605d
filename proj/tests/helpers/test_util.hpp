#pragma once

#include <vector>

#include "alma/config.hpp"
#include "alma/env/savethecity.hpp"
#include "alma/train/trainer.hpp"

namespace testutil {

// Small deterministic environment config for unit tests.
inline alma::env::EnvConfig tiny_env(int n_agents = 2, int grid = 8) {
  alma::env::EnvConfig cfg;
  cfg.grid_side = grid;
  cfg.min_agents = n_agents;
  cfg.max_agents = n_agents;
  return cfg;
}

// Small network dims so finite differences and exhaustive checks stay fast.
inline alma::ExperimentConfig tiny_experiment(int n_agents = 2, int grid = 8) {
  alma::ExperimentConfig cfg;
  cfg.env = tiny_env(n_agents, grid);
  cfg.hidden_dim = 8;
  cfg.mixer_hidden = 4;
  cfg.attn_heads = 2;
  cfg.embed_dim = 8;
  cfg.n_proposals = 8;
  cfg.batch_size = 2;
  cfg.buffer_capacity = 16;
  cfg.num_envs = 2;
  cfg.num_threads = 1;
  cfg.total_env_steps = 0;
  cfg.eval_episodes = 4;
  return cfg;
}

// A random mid-episode state (direct construction, no env dynamics).
inline alma::env::EnvState random_state(alma::Rng& rng, int n_agents, int n_buildings,
                                        int grid = 8) {
  alma::env::EnvState s;
  for (int a = 0; a < n_agents; ++a) {
    alma::env::AgentBody body;
    body.x = rng.uniform_int(grid);
    body.y = rng.uniform_int(grid);
    body.type = static_cast<alma::env::AgentType>(rng.uniform_int(3));
    s.agents.push_back(body);
  }
  for (int i = 0; i < n_buildings; ++i) {
    alma::env::Building b;
    b.x = rng.uniform_int(grid);
    b.y = rng.uniform_int(grid);
    b.health = rng.uniform(0.1, 0.9);
    b.fire = rng.bernoulli(0.5) ? rng.uniform(0.2, 1.0) : 0.0;
    s.buildings.push_back(b);
  }
  return s;
}

inline alma::task::Allocation random_allocation(alma::Rng& rng, int n_agents, int n_subtasks) {
  alma::task::Allocation a;
  for (int i = 0; i < n_agents; ++i)
    a.subtask_of_agent.push_back(rng.uniform_int(n_subtasks));
  return a;
}

inline std::vector<int> all_live(int n_subtasks) {
  std::vector<int> v(static_cast<std::size_t>(n_subtasks));
  for (int i = 0; i < n_subtasks; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

}  // namespace testutil
