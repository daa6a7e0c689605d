#pragma once

#include "alma/diff/tensor.hpp"
#include "alma/env/savethecity.hpp"
#include "alma/task/framework.hpp"

namespace alma::feat {

// Entity feature matrix: one row per entity, agents 0..N-1 then buildings
// N..N+B-1, using the documented common layout (task::kFeatureWidth).
diff::Matrix entity_matrix(const env::EnvState& s, const env::EnvConfig& cfg);

// Entity features augmented with the one-hot of the owning subtask (for
// buildings) or the assigned subtask (for agents, from the allocation). The
// one-hot width is fixed per experiment at `subtask_slots`.
diff::Matrix allocation_entity_matrix(const env::EnvState& s, const env::EnvConfig& cfg,
                                      const task::Allocation& alloc, int subtask_slots);

// Row indices admitted for an agent's masked local view: its team b_i plus
// subtask i's entities. With masking disabled, every entity row.
std::vector<diff::Index> local_view_rows(const env::EnvState& s, const task::Allocation& alloc,
                                         int agent, bool mask_enabled);

// Rows of a subtask's local state s_{b_i}: its team plus its entities (used by
// the mixing hypernetwork). With masking disabled, every entity row.
std::vector<diff::Index> subtask_view_rows(const env::EnvState& s, const task::Allocation& alloc,
                                           int subtask, bool mask_enabled);

}  // namespace alma::feat
