#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alma/common.hpp"

namespace alma::task {

enum class EntityKind { Agent, Building };

// Fixed entity feature layout, common width for agents and buildings:
//   [0] x / (grid-1)        [1] y / (grid-1)
//   [2..4] capability one-hot (firefighter, builder, generalist); zero for buildings
//   [5] building health in [0,1]; zero for agents
//   [6] fire meter in [0,1] (the red bar); zero for agents
//   [7] kind flag: 1 = agent, 0 = building
inline constexpr int kFeatureWidth = 8;

struct EntityState {
  int id = -1;
  EntityKind kind = EntityKind::Building;
  std::vector<double> features;  // width kFeatureWidth
  int subtask = -1;              // owning subtask for non-agent entities; -1 for agents
};

// The environment's full state s: the set of entity states plus the timestep.
struct GlobalState {
  std::vector<EntityState> entities;  // unique ids, agents first by convention
  int timestep = 0;

  int count_agents() const {
    int n = 0;
    for (const auto& e : entities)
      if (e.kind == EntityKind::Agent) ++n;
    return n;
  }
};

struct SubtaskDescriptor {
  int id = -1;
  std::vector<int> entity_ids;  // member (non-agent) entities
  bool completed = false;
  bool failed = false;

  bool terminal() const { return completed || failed; }
};

// Per-agent subtask assignment b; agents are indexed 0..n-1.
struct Allocation {
  std::vector<int> subtask_of_agent;

  int agents() const { return static_cast<int>(subtask_of_agent.size()); }

  // Team assigned to subtask i.
  std::vector<int> team(int subtask) const {
    std::vector<int> out;
    for (int a = 0; a < agents(); ++a)
      if (subtask_of_agent[static_cast<std::size_t>(a)] == subtask) out.push_back(a);
    return out;
  }

  bool operator==(const Allocation& o) const { return subtask_of_agent == o.subtask_of_agent; }
};

struct RewardRecord {
  double global = 0;
  std::vector<double> per_subtask;
};

// Binary observability relation mu(s^a, s^e). Full observability in this
// artifact; kept as an explicit hook.
struct ObservabilityMask {
  bool observes(const EntityState&, const EntityState&) const { return true; }
};

// States of subtask i's entities plus its assigned agents (s_{b_i}) — nothing
// else. Throws LookupError for an unknown subtask id.
std::vector<EntityState> subtask_local_state(const GlobalState& s,
                                             const std::vector<SubtaskDescriptor>& subtasks,
                                             const Allocation& alloc, int subtask_id);

// |I|^|A| unique allocations of `num_agents` agents to `num_subtasks` subtasks.
std::uint64_t allocation_space_size(int num_agents, int num_subtasks);

// Canonical integer index of an allocation: agent-major positional encoding in
// base |I| with agent 0 as the least significant digit.
std::uint64_t encode_allocation(const Allocation& alloc, int num_subtasks);
Allocation decode_allocation(std::uint64_t index, int num_agents, int num_subtasks);

}  // namespace alma::task
