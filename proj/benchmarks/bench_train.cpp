#include <benchmark/benchmark.h>

#include "alma/train/trainer.hpp"

using namespace alma;
using namespace alma::train;

namespace {

ExperimentConfig bench_config() {
  ExperimentConfig cfg;
  cfg.env.grid_side = 8;
  cfg.env.min_agents = 2;
  cfg.env.max_agents = 3;
  cfg.hidden_dim = 32;
  cfg.embed_dim = 32;
  cfg.attn_heads = 4;
  cfg.mixer_hidden = 32;
  cfg.n_proposals = 16;
  cfg.batch_size = 32;
  cfg.num_envs = 8;
  cfg.num_threads = 1;
  return cfg;
}

void BM_collect_episode(benchmark::State& state) {
  const ExperimentConfig cfg = bench_config();
  Networks nets(cfg, 1);
  env::SaveTheCityEnv env(cfg.env);
  std::uint64_t seed = 0;
  std::int64_t steps = 0;
  for (auto _ : state) {
    CollectParams p;
    p.env_seed = seed;
    p.explore_seed = seed + 1;
    p.eps = 0.5;
    p.eps_p = 0.5;
    p.eps_r = 0.25;
    ++seed;
    const EpisodeRecord rec = collect_episode(nets, env, p);
    steps += rec.length();
    benchmark::DoNotOptimize(rec);
  }
  state.counters["env_steps_per_s"] =
      benchmark::Counter(static_cast<double>(steps), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_collect_episode)->Unit(benchmark::kMillisecond);

void BM_train_step(benchmark::State& state) {
  const ExperimentConfig cfg = bench_config();
  Networks nets(cfg, 2);
  ReplayBuffer buffer(64);
  env::SaveTheCityEnv env(cfg.env);
  for (int e = 0; e < 40; ++e) {
    CollectParams p;
    p.env_seed = static_cast<std::uint64_t>(e);
    p.explore_seed = static_cast<std::uint64_t>(e) + 100;
    p.eps = 1.0;
    p.eps_p = 1.0;
    p.eps_r = 0.5;
    buffer.add(collect_episode(nets, env, p));
  }
  Rng lr(3);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(nets, buffer, lr));
}
BENCHMARK(BM_train_step)->Unit(benchmark::kMillisecond);

}  // namespace
