#include "alma/task/framework.hpp"

#include <algorithm>

namespace alma::task {

std::vector<EntityState> subtask_local_state(const GlobalState& s,
                                             const std::vector<SubtaskDescriptor>& subtasks,
                                             const Allocation& alloc, int subtask_id) {
  const SubtaskDescriptor* desc = nullptr;
  for (const auto& d : subtasks)
    if (d.id == subtask_id) desc = &d;
  if (!desc) throw LookupError("subtask_local_state: unknown subtask id " +
                               std::to_string(subtask_id));

  std::vector<EntityState> out;
  const std::vector<int> team = alloc.team(subtask_id);
  for (const auto& e : s.entities) {
    if (e.kind == EntityKind::Agent) {
      if (std::find(team.begin(), team.end(), e.id) != team.end()) out.push_back(e);
    } else if (std::find(desc->entity_ids.begin(), desc->entity_ids.end(), e.id) !=
               desc->entity_ids.end()) {
      out.push_back(e);
    }
  }
  return out;
}

std::uint64_t allocation_space_size(int num_agents, int num_subtasks) {
  if (num_agents < 1 || num_subtasks < 1)
    throw UsageError("allocation_space_size: counts must be >= 1");
  std::uint64_t n = 1;
  for (int a = 0; a < num_agents; ++a) n *= static_cast<std::uint64_t>(num_subtasks);
  return n;
}

std::uint64_t encode_allocation(const Allocation& alloc, int num_subtasks) {
  std::uint64_t index = 0;
  std::uint64_t base = 1;
  for (int a = 0; a < alloc.agents(); ++a) {
    const int b = alloc.subtask_of_agent[static_cast<std::size_t>(a)];
    if (b < 0 || b >= num_subtasks)
      throw UsageError("encode_allocation: assignment out of range");
    index += static_cast<std::uint64_t>(b) * base;
    base *= static_cast<std::uint64_t>(num_subtasks);
  }
  return index;
}

Allocation decode_allocation(std::uint64_t index, int num_agents, int num_subtasks) {
  if (index >= allocation_space_size(num_agents, num_subtasks))
    throw LookupError("decode_allocation: index out of range");
  Allocation alloc;
  alloc.subtask_of_agent.resize(static_cast<std::size_t>(num_agents));
  for (int a = 0; a < num_agents; ++a) {
    alloc.subtask_of_agent[static_cast<std::size_t>(a)] =
        static_cast<int>(index % static_cast<std::uint64_t>(num_subtasks));
    index /= static_cast<std::uint64_t>(num_subtasks);
  }
  return alloc;
}

}  // namespace alma::task
