#pragma once

#include <string>

#include "alma/train/trainer.hpp"

namespace alma::eval {

// One greedy episode as structured-text trace records (JSON lines): a header
// record followed by one record per timestep with the state, the allocation in
// force (boundary-marked every N_t steps), the joint action, and the rewards.
// Returns the number of step records written.
int write_trace(const train::Networks& nets, std::uint64_t seed, const std::string& path);

}  // namespace alma::eval
