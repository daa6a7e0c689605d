#include <benchmark/benchmark.h>

#include "alma/common.hpp"
#include "alma/env/savethecity.hpp"

using namespace alma;

namespace {

void BM_env_reset(benchmark::State& state) {
  env::EnvConfig cfg;
  env::SaveTheCityEnv e(cfg);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(e.reset(seed++));
}
BENCHMARK(BM_env_reset);

void BM_env_step_random(benchmark::State& state) {
  env::EnvConfig cfg;
  env::SaveTheCityEnv e(cfg);
  Rng rng(1);
  std::uint64_t seed = 0;
  e.reset(seed++);
  for (auto _ : state) {
    if (e.state().done) e.reset(seed++);
    std::vector<env::Action> acts;
    for (std::size_t a = 0; a < e.state().agents.size(); ++a)
      acts.push_back(static_cast<env::Action>(rng.uniform_int(env::kNumActions)));
    benchmark::DoNotOptimize(e.step(acts));
  }
}
BENCHMARK(BM_env_step_random);

}  // namespace
