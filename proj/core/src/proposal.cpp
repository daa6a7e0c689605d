#include "alma/alloc/networks.hpp"

#include <algorithm>

namespace alma::alloc {

ProposalNetwork::ProposalNetwork(const AllocConfig& cfg, const std::string& prefix)
    : fh_(prefix + ".fh", cfg.feat_dim, cfg.embed_dim, cfg.embed_dim),
      g_embed_(prefix + ".fg.embed", cfg.feat_dim, cfg.embed_dim),
      g_attn_(prefix + ".fg.attn", cfg.embed_dim, cfg.heads),
      g_out_(prefix + ".fg.out", cfg.embed_dim, cfg.embed_dim),
      fu_(prefix + ".fu", 2 * cfg.embed_dim, cfg.embed_dim, cfg.embed_dim),
      g_empty_name_(prefix + ".fg.empty"),
      cfg_(cfg) {}

void ProposalNetwork::register_into(diff::ParameterGraph& pg, Rng& rng) const {
  fh_.register_into(pg, rng);
  g_embed_.register_into(pg, rng);
  g_attn_.register_into(pg, rng);
  g_out_.register_into(pg, rng);
  fu_.register_into(pg, rng);
  diff::Tensor& ge = pg.add(g_empty_name_, 1, cfg_.embed_dim);
  diff::init_uniform_fan_in(ge, cfg_.embed_dim, rng);
}

Var ProposalNetwork::subtask_embeddings(Tape& t, const Matrix& entity_feats,
                                        const std::vector<std::vector<Index>>& rows_per_subtask)
    const {
  const int n_sub = static_cast<int>(rows_per_subtask.size());
  if (n_sub == 0) throw UsageError("subtask_embeddings: no subtasks");

  // Attention-pool within each nonempty subtask; zero-entity subtasks take the
  // learned placeholder embedding.
  std::vector<int> nonempty;
  for (int i = 0; i < n_sub; ++i)
    if (!rows_per_subtask[static_cast<std::size_t>(i)].empty()) nonempty.push_back(i);

  Var pooled_out;  // |nonempty| x d after pooling + output layer
  if (!nonempty.empty()) {
    Var x = t.relu(g_embed_.forward(t, t.leaf(entity_feats)));
    diff::AttnBatch batch;
    diff::RowGroups pool;
    // Queries: one block of rows per nonempty subtask, stacked.
    std::vector<Index> q_rows;
    Index q_cursor = 0;
    std::vector<std::vector<Index>> pool_groups;
    for (int i : nonempty) {
      const auto& rows = rows_per_subtask[static_cast<std::size_t>(i)];
      // members attend to members of the same subtask only
      const auto [lo_it, hi_it] = std::minmax_element(rows.begin(), rows.end());
      const Index lo = *lo_it, hi = *hi_it;
      for (Index r : rows) {
        q_rows.push_back(r);
        diff::AttentionMask mask(1, hi - lo + 1, false);
        for (Index kr : rows) mask.at(0, kr - lo) = 1;
        batch.add(q_cursor++, lo, std::move(mask));
      }
      std::vector<Index> grp;
      for (Index j = 0; j < static_cast<Index>(rows.size()); ++j)
        grp.push_back(q_cursor - static_cast<Index>(rows.size()) + j);
      pool_groups.push_back(std::move(grp));
    }
    Var q_in = t.slice_rows(x, q_rows);
    Var attended = g_attn_.forward(t, q_in, x, batch);
    for (auto& grp : pool_groups) pool.add_group(grp);
    Var pooled = t.group_mean_rows(t.relu(attended), std::move(pool));
    pooled_out = g_out_.forward(t, pooled);
  }

  if (static_cast<int>(nonempty.size()) == n_sub) return pooled_out;

  // Mix pooled rows and placeholder rows back into subtask order.
  Var placeholder = t.param(g_empty_name_);
  // Build by concatenating slices in order via slice_rows on a stacked matrix:
  // stack [pooled_out; placeholder] then select per subtask.
  Var stacked = pooled_out.valid()
                    ? t.concat_rows(pooled_out, placeholder)
                    : placeholder;
  std::vector<Index> sel(static_cast<std::size_t>(n_sub));
  const Index ph_row = pooled_out.valid() ? t.rows(pooled_out) : 0;
  Index k = 0;
  for (int i = 0; i < n_sub; ++i) {
    if (!rows_per_subtask[static_cast<std::size_t>(i)].empty())
      sel[static_cast<std::size_t>(i)] = k++;
    else
      sel[static_cast<std::size_t>(i)] = ph_row;
  }
  return t.slice_rows(stacked, sel);
}

ProposalNetwork::Embeddings ProposalNetwork::embed(Tape& t, const env::EnvState& s,
                                                   const env::EnvConfig& env_cfg) const {
  const int n_agents = static_cast<int>(s.agents.size());
  const int n_sub = static_cast<int>(s.buildings.size());

  const Matrix em = feat::entity_matrix(s, env_cfg);
  Var h = fh_.forward(t, t.leaf(em.topRows(n_agents)));

  // Subtask i's non-agent entities: building i (row i of the building block).
  std::vector<std::vector<Index>> rows(static_cast<std::size_t>(n_sub));
  for (int i = 0; i < n_sub; ++i) rows[static_cast<std::size_t>(i)] = {static_cast<Index>(i)};
  Var g = subtask_embeddings(t, em.bottomRows(n_sub), rows);
  return {h, g};
}

Var ProposalNetwork::update(Tape& t, Var g_row, Var h_row) const {
  return fu_.forward(t, t.concat_cols(g_row, h_row));
}

}  // namespace alma::alloc
