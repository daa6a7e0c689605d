#pragma once

#include "alma/common.hpp"
#include "alma/env/savethecity.hpp"
#include "alma/task/framework.hpp"

namespace alma::baselines {

// Deterministic rule: each agent goes to the nearest building at which its
// capability is most useful (firefighters: burning buildings; builders:
// extinguished incomplete buildings; generalists: burning buildings not yet
// covered by a generalist in this round). Ties break by Manhattan distance,
// then lowest building id; with no matching building, the nearest live one.
task::Allocation heuristic_allocate(const env::EnvState& s);

// Uniform independent assignment over live subtasks (lower-bound baseline).
task::Allocation random_allocate(const env::EnvState& s, Rng& rng);

}  // namespace alma::baselines
