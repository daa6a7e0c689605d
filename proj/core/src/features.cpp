#include "alma/features.hpp"

namespace alma::feat {

using diff::Index;
using diff::Matrix;

Matrix entity_matrix(const env::EnvState& s, const env::EnvConfig& cfg) {
  const Index n = static_cast<Index>(s.agents.size());
  const Index m = static_cast<Index>(s.buildings.size());
  Matrix out(n + m, task::kFeatureWidth);
  for (Index a = 0; a < n; ++a) {
    const auto f = env::agent_features(s.agents[static_cast<std::size_t>(a)], cfg);
    for (int c = 0; c < task::kFeatureWidth; ++c) out(a, c) = f[static_cast<std::size_t>(c)];
  }
  for (Index i = 0; i < m; ++i) {
    const auto f = env::building_features(s.buildings[static_cast<std::size_t>(i)], cfg);
    for (int c = 0; c < task::kFeatureWidth; ++c) out(n + i, c) = f[static_cast<std::size_t>(c)];
  }
  return out;
}

Matrix allocation_entity_matrix(const env::EnvState& s, const env::EnvConfig& cfg,
                                const task::Allocation& alloc, int subtask_slots) {
  const Index n = static_cast<Index>(s.agents.size());
  const Index m = static_cast<Index>(s.buildings.size());
  if (alloc.agents() != static_cast<int>(n))
    throw UsageError("allocation_entity_matrix: allocation does not cover the roster");
  if (static_cast<int>(m) > subtask_slots)
    throw ConfigError("allocation_entity_matrix: more subtasks than one-hot slots");
  Matrix base = entity_matrix(s, cfg);
  Matrix out = Matrix::Zero(n + m, task::kFeatureWidth + subtask_slots);
  out.leftCols(task::kFeatureWidth) = base;
  for (Index a = 0; a < n; ++a) {
    const int b = alloc.subtask_of_agent[static_cast<std::size_t>(a)];
    if (b < 0 || b >= static_cast<int>(m))
      throw UsageError("allocation_entity_matrix: assignment out of range");
    out(a, task::kFeatureWidth + b) = 1.0;
  }
  for (Index i = 0; i < m; ++i) out(n + i, task::kFeatureWidth + i) = 1.0;
  return out;
}

std::vector<Index> local_view_rows(const env::EnvState& s, const task::Allocation& alloc,
                                   int agent, bool mask_enabled) {
  const int i = alloc.subtask_of_agent.at(static_cast<std::size_t>(agent));
  return subtask_view_rows(s, alloc, i, mask_enabled);
}

std::vector<Index> subtask_view_rows(const env::EnvState& s, const task::Allocation& alloc,
                                     int subtask, bool mask_enabled) {
  const Index n = static_cast<Index>(s.agents.size());
  const Index m = static_cast<Index>(s.buildings.size());
  if (subtask < 0 || subtask >= static_cast<int>(m))
    throw LookupError("subtask_view_rows: unknown subtask id " + std::to_string(subtask));
  std::vector<Index> rows;
  if (!mask_enabled) {
    for (Index r = 0; r < n + m; ++r) rows.push_back(r);
    return rows;
  }
  for (Index a = 0; a < n; ++a)
    if (alloc.subtask_of_agent[static_cast<std::size_t>(a)] == subtask) rows.push_back(a);
  rows.push_back(n + static_cast<Index>(subtask));
  return rows;
}

}  // namespace alma::feat
