#include "alma/alloc/networks.hpp"

namespace alma::alloc {

AllocationValueNetwork::AllocationValueNetwork(const AllocConfig& cfg, const std::string& prefix)
    : embed_(prefix + ".embed", cfg.feat_dim + cfg.subtask_slots, cfg.embed_dim),
      attn_(prefix + ".attn", cfg.embed_dim, cfg.heads),
      post_(prefix + ".post", cfg.embed_dim, cfg.embed_dim),
      head_(prefix + ".head", cfg.embed_dim, 1),
      cfg_(cfg) {}

void AllocationValueNetwork::register_into(diff::ParameterGraph& pg, Rng& rng) const {
  embed_.register_into(pg, rng);
  attn_.register_into(pg, rng);
  post_.register_into(pg, rng);
  head_.register_into(pg, rng);
}

diff::PopArtHead AllocationValueNetwork::popart_head() const {
  return diff::PopArtHead{{head_.weight_name()}, head_.bias_name()};
}

Var AllocationValueNetwork::forward(Tape& t, const std::vector<const env::EnvState*>& states,
                                    const std::vector<const task::Allocation*>& allocs,
                                    const env::EnvConfig& env_cfg) const {
  if (states.size() != allocs.size() || states.empty())
    throw UsageError("AllocationValueNetwork: states/allocations mismatch");

  Index total = 0;
  for (const auto* s : states)
    total += static_cast<Index>(s->agents.size() + s->buildings.size());
  Matrix stacked(total, cfg_.feat_dim + cfg_.subtask_slots);
  diff::AttnBatch batch;
  diff::RowGroups pool;
  Index cursor = 0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const Matrix m =
        feat::allocation_entity_matrix(*states[i], env_cfg, *allocs[i], cfg_.subtask_slots);
    stacked.block(cursor, 0, m.rows(), m.cols()) = m;
    // full self-attention within the instance
    batch.add(cursor, cursor, diff::AttentionMask(m.rows(), m.rows(), true));
    std::vector<Index> grp(static_cast<std::size_t>(m.rows()));
    for (Index r = 0; r < m.rows(); ++r) grp[static_cast<std::size_t>(r)] = cursor + r;
    pool.add_group(grp);
    cursor += m.rows();
  }

  Var x = t.relu(embed_.forward(t, t.leaf(std::move(stacked))));
  Var attended = attn_.forward(t, x, x, batch);
  Var pooled = t.group_mean_rows(t.relu(attended), std::move(pool));
  Var h = t.relu(post_.forward(t, pooled));
  return head_.forward(t, h);  // n x 1, normalized scale
}

}  // namespace alma::alloc
