#pragma once

#include <string>
#include <vector>

#include "alma/train/trainer.hpp"

namespace alma::eval {

// Pure-greedy evaluation report (all exploration rates zero): per-seed success
// rates with mean/stddev across seeds, plus mean return and episode length.
struct EvalReport {
  std::vector<std::uint64_t> seeds;
  int episodes_per_seed = 0;
  std::vector<double> success_per_seed;
  double success_mean = 0;
  double success_std = 0;  // across seeds (population); 0 with a single seed
  double mean_return = 0;
  double mean_length = 0;

  std::string to_json() const;
  std::string to_csv() const;
};

EvalReport evaluate_policy(const train::Networks& nets, const std::vector<std::uint64_t>& seeds,
                           int episodes_per_seed, int num_threads);

}  // namespace alma::eval
