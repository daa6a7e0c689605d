#include "alma/baselines/baselines.hpp"

#include <cstdlib>
#include <limits>

namespace alma::baselines {

namespace {

int manhattan(const env::AgentBody& a, const env::Building& b) {
  return std::abs(a.x - b.x) + std::abs(a.y - b.y);
}

int nearest_of(const env::EnvState& s, const env::AgentBody& agent,
               const std::vector<int>& candidates) {
  int best = -1, best_dist = std::numeric_limits<int>::max();
  for (int i : candidates) {
    const int d = manhattan(agent, s.buildings[static_cast<std::size_t>(i)]);
    if (d < best_dist) {  // strict <: distance ties keep the lowest building id
      best_dist = d;
      best = i;
    }
  }
  return best;
}

}  // namespace

task::Allocation heuristic_allocate(const env::EnvState& s) {
  const int n_buildings = static_cast<int>(s.buildings.size());
  std::vector<int> live;
  for (int i = 0; i < n_buildings; ++i)
    if (!s.buildings[static_cast<std::size_t>(i)].terminal()) live.push_back(i);
  if (live.empty()) throw UsageError("heuristic_allocate: no live building");

  std::vector<bool> generalist_assigned(static_cast<std::size_t>(n_buildings), false);
  task::Allocation alloc;
  alloc.subtask_of_agent.resize(s.agents.size());

  for (std::size_t a = 0; a < s.agents.size(); ++a) {
    const env::AgentBody& agent = s.agents[a];
    std::vector<int> useful;
    for (int i : live) {
      const env::Building& b = s.buildings[static_cast<std::size_t>(i)];
      bool match = false;
      switch (agent.type) {
        case env::AgentType::Firefighter: match = b.burning(); break;
        case env::AgentType::Builder: match = !b.burning(); break;
        case env::AgentType::Generalist:
          match = b.burning() && !generalist_assigned[static_cast<std::size_t>(i)];
          break;
      }
      if (match) useful.push_back(i);
    }
    const int pick = nearest_of(s, agent, useful.empty() ? live : useful);
    alloc.subtask_of_agent[a] = pick;
    if (agent.type == env::AgentType::Generalist)
      generalist_assigned[static_cast<std::size_t>(pick)] = true;
  }
  return alloc;
}

task::Allocation random_allocate(const env::EnvState& s, Rng& rng) {
  std::vector<int> live;
  for (std::size_t i = 0; i < s.buildings.size(); ++i)
    if (!s.buildings[i].terminal()) live.push_back(static_cast<int>(i));
  if (live.empty()) throw UsageError("random_allocate: no live subtask");
  task::Allocation alloc;
  alloc.subtask_of_agent.resize(s.agents.size());
  for (auto& b : alloc.subtask_of_agent)
    b = live[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(live.size())))];
  return alloc;
}

}  // namespace alma::baselines
