#include "alma/exec/executor.hpp"

#include <algorithm>
#include <map>

namespace alma::exec {

namespace {

int argmax_row_lowest(const Matrix& m, Index row) {
  int best = 0;
  for (Index c = 1; c < m.cols(); ++c)
    if (m(row, c) > m(row, best)) best = static_cast<int>(c);
  return best;
}

}  // namespace

MaskedView build_masked_view(const env::EnvState& s, const task::Allocation& alloc, int agent,
                             bool mask_enabled) {
  MaskedView v;
  v.agent = agent;
  v.rows = feat::local_view_rows(s, alloc, agent, mask_enabled);
  return v;
}

UtilityNetwork::UtilityNetwork(const ExecConfig& cfg, const std::string& prefix)
    : embed_(prefix + ".embed", cfg.feat_dim, cfg.hidden),
      attn_(prefix + ".attn", cfg.hidden, cfg.heads),
      post_(prefix + ".post", 2 * cfg.hidden, cfg.hidden),
      head_(prefix + ".head", cfg.hidden, cfg.actions),
      cfg_(cfg) {}

void UtilityNetwork::register_into(diff::ParameterGraph& pg, Rng& rng) const {
  embed_.register_into(pg, rng);
  attn_.register_into(pg, rng);
  post_.register_into(pg, rng);
  head_.register_into(pg, rng);
}

Var UtilityNetwork::forward(Tape& t, Var entities, const std::vector<EntityGroup>& groups,
                            const std::vector<UtilityQuery>& queries) const {
  Var x = t.relu(embed_.forward(t, entities));

  std::vector<Index> agent_rows;
  agent_rows.reserve(queries.size());
  for (const auto& q : queries) agent_rows.push_back(q.agent_row);
  Var own = t.slice_rows(x, agent_rows);

  diff::AttnBatch batch;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const auto& q = queries[qi];
    const EntityGroup& g = groups.at(static_cast<std::size_t>(q.group));
    diff::AttentionMask mask(1, g.count, false);
    for (Index r : q.view_rows) mask.at(0, r - g.begin) = 1;
    batch.add(static_cast<Index>(qi), g.begin, std::move(mask));
  }
  Var attended = attn_.forward(t, own, x, batch);
  Var h = t.relu(post_.forward(t, t.concat_cols(own, attended)));
  return head_.forward(t, h);
}

Matrix UtilityNetwork::utilities(const diff::ParameterGraph& pg, const Matrix& entities,
                                 const MaskedView& view) const {
  Tape t(pg, /*grad=*/false);
  Var e = t.leaf(entities);
  std::vector<EntityGroup> groups{{0, entities.rows()}};
  std::vector<UtilityQuery> queries{{0, static_cast<Index>(view.agent), view.rows}};
  Var u = forward(t, e, groups, queries);
  return t.value(u);
}

MonotonicMixer::MonotonicMixer(const ExecConfig& cfg, const std::string& prefix)
    : state_embed_(prefix + ".se", cfg.feat_dim, cfg.hidden),
      hyper_w1_(prefix + ".hw1", cfg.hidden, cfg.mixer_hidden),
      hyper_b1_(prefix + ".hb1", cfg.hidden, cfg.mixer_hidden),
      hyper_w2_(prefix + ".hw2", cfg.hidden, cfg.mixer_hidden),
      hyper_b2_l1_(prefix + ".hb2a", cfg.hidden, cfg.mixer_hidden),
      hyper_b2_l2_(prefix + ".hb2b", cfg.mixer_hidden, 1),
      cfg_(cfg) {}

void MonotonicMixer::register_into(diff::ParameterGraph& pg, Rng& rng) const {
  state_embed_.register_into(pg, rng);
  hyper_w1_.register_into(pg, rng);
  hyper_b1_.register_into(pg, rng);
  hyper_w2_.register_into(pg, rng);
  hyper_b2_l1_.register_into(pg, rng);
  hyper_b2_l2_.register_into(pg, rng);
}

diff::PopArtHead MonotonicMixer::popart_head() const {
  // Positive rescaling commutes with |.|, so scaling hyper_w2's affine output
  // scales w2 itself; the scalar shift lands on hyper_b2's final bias.
  return diff::PopArtHead{{hyper_w2_.weight_name(), hyper_w2_.bias_name(),
                           hyper_b2_l2_.weight_name()},
                          hyper_b2_l2_.bias_name()};
}

Var MonotonicMixer::forward(Tape& t, Var entities, Var chosen_utils,
                            const std::vector<MixInstance>& instances) const {
  Var xm = t.relu(state_embed_.forward(t, entities));

  diff::RowGroups state_groups;
  std::vector<Index> team_rows;
  std::vector<Index> segment_of_agent;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    state_groups.add_group(instances[i].state_rows);
    for (Index r : instances[i].team_agent_rows) {
      team_rows.push_back(r);
      segment_of_agent.push_back(static_cast<Index>(i));
    }
  }
  const auto n = static_cast<Index>(instances.size());
  if (t.rows(chosen_utils) != static_cast<Index>(team_rows.size()) || t.cols(chosen_utils) != 1)
    throw UsageError("MonotonicMixer: one chosen utility per team agent required");

  Var s_emb = t.group_mean_rows(xm, std::move(state_groups));  // n x hidden

  Var b1 = hyper_b1_.forward(t, s_emb);                        // n x m
  Var w2 = t.abs(hyper_w2_.forward(t, s_emb));                 // n x m
  Var b2 = hyper_b2_l2_.forward(t, t.elu(hyper_b2_l1_.forward(t, s_emb)));  // n x 1

  Var hidden_in = b1;
  if (!team_rows.empty()) {
    Var agent_emb = t.slice_rows(xm, team_rows);               // sumA x hidden
    Var w1 = t.abs(hyper_w1_.forward(t, agent_emb));           // sumA x m
    Var contrib = t.row_scale(w1, chosen_utils);               // sumA x m
    Var summed = t.segment_sum_rows(contrib, std::move(segment_of_agent), n);
    hidden_in = t.add(summed, b1);
  }
  Var hidden = t.elu(hidden_in);
  return t.add(t.rowwise_dot(hidden, w2), b2);  // n x 1
}

std::vector<int> greedy_joint_action(const diff::ParameterGraph& pg, const UtilityNetwork& util,
                                     const env::EnvState& s, const env::EnvConfig& env_cfg,
                                     const task::Allocation& alloc, const ExecConfig& cfg) {
  const Matrix entities = feat::entity_matrix(s, env_cfg);
  Tape t(pg, /*grad=*/false);
  Var e = t.leaf(entities);
  std::vector<EntityGroup> groups{{0, entities.rows()}};
  std::vector<UtilityQuery> queries;
  const int n = static_cast<int>(s.agents.size());
  for (int a = 0; a < n; ++a)
    queries.push_back(
        {0, static_cast<Index>(a), feat::local_view_rows(s, alloc, a, cfg.mask_enabled)});
  const Matrix u = t.value(util.forward(t, e, groups, queries));
  std::vector<int> actions(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) actions[static_cast<std::size_t>(a)] = argmax_row_lowest(u, a);
  return actions;
}

std::vector<int> epsilon_greedy(const diff::ParameterGraph& pg, const UtilityNetwork& util,
                                const env::EnvState& s, const env::EnvConfig& env_cfg,
                                const task::Allocation& alloc, const ExecConfig& cfg, double eps,
                                Rng& rng) {
  std::vector<int> actions = greedy_joint_action(pg, util, s, env_cfg, alloc, cfg);
  for (auto& a : actions)
    if (rng.uniform() < eps) a = rng.uniform_int(cfg.actions);
  return actions;
}

std::vector<std::pair<int, int>> td_loss_instances(const std::vector<StepItem>& items) {
  std::vector<std::pair<int, int>> out;
  for (std::size_t ii = 0; ii < items.size(); ++ii) {
    const StepItem& it = items[ii];
    const int n_sub = static_cast<int>(it.rewards->size());
    for (int i = 0; i < n_sub; ++i) {
      if (i < static_cast<int>(it.live.size()) && !it.live[static_cast<std::size_t>(i)]) continue;
      if (it.alloc->team(i).empty() && (*it.rewards)[static_cast<std::size_t>(i)] == 0.0)
        continue;
      out.emplace_back(static_cast<int>(ii), i);
    }
  }
  return out;
}

TdLossStats execution_td_loss(Tape& online_tape, diff::ParameterGraph& online_pg,
                              const diff::ParameterGraph& target_pg, const UtilityNetwork& util,
                              const MonotonicMixer& mixer, diff::PopArtState& popart,
                              const diff::PopArtState& popart_target,
                              const std::vector<StepItem>& items, const ExecConfig& cfg,
                              const env::EnvConfig& env_cfg,
                              const std::vector<double>* frozen_targets) {
  for (const auto& it : items)
    if (!it.s || !it.s_next || !it.alloc || !it.alloc_next || !it.actions || !it.rewards)
      throw UsageError("execution_td_loss: batch item missing state/allocation metadata");

  // Unique (state, allocation) pairs, first-appearance order; consecutive
  // steps of an episode share pointers so each state is embedded once.
  struct Pair {
    const env::EnvState* s;
    const task::Allocation* alloc;
  };
  std::map<std::pair<const void*, const void*>, int> pair_index;
  std::vector<Pair> pairs;
  auto intern = [&](const env::EnvState* s, const task::Allocation* alloc) {
    auto key = std::make_pair(static_cast<const void*>(s), static_cast<const void*>(alloc));
    auto it = pair_index.find(key);
    if (it != pair_index.end()) return it->second;
    const int idx = static_cast<int>(pairs.size());
    pair_index.emplace(key, idx);
    pairs.push_back({s, alloc});
    return idx;
  };
  std::vector<int> item_pair_t, item_pair_next;
  item_pair_t.reserve(items.size());
  item_pair_next.reserve(items.size());
  for (const auto& it : items) {
    item_pair_t.push_back(intern(it.s, it.alloc));
    item_pair_next.push_back(intern(it.s_next, it.alloc_next));
  }

  // Stack entity matrices and build per-agent utility queries per pair.
  std::vector<EntityGroup> groups(pairs.size());
  std::vector<UtilityQuery> queries;
  std::vector<Index> pair_query_offset(pairs.size());
  Index row_cursor = 0;
  Index total_rows = 0;
  for (const auto& p : pairs)
    total_rows += static_cast<Index>(p.s->agents.size() + p.s->buildings.size());
  Matrix entities(total_rows, cfg.feat_dim);
  for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
    const auto& p = pairs[pi];
    const Matrix em = feat::entity_matrix(*p.s, env_cfg);
    entities.block(row_cursor, 0, em.rows(), em.cols()) = em;
    groups[pi] = {row_cursor, em.rows()};
    pair_query_offset[pi] = static_cast<Index>(queries.size());
    const int n_agents = static_cast<int>(p.s->agents.size());
    for (int a = 0; a < n_agents; ++a) {
      std::vector<Index> view = feat::local_view_rows(*p.s, *p.alloc, a, cfg.mask_enabled);
      for (auto& r : view) r += row_cursor;
      queries.push_back({static_cast<int>(pi), row_cursor + a, std::move(view)});
    }
    row_cursor += em.rows();
  }

  const bool frozen = frozen_targets != nullptr;

  // Online utilities (with grad) and target utilities (values only).
  Var e_on = online_tape.leaf(entities);
  Var util_on = util.forward(online_tape, e_on, groups, queries);
  const Matrix& u_on = online_tape.value(util_on);

  Tape target_tape(target_pg, /*grad=*/false);
  Var e_tg = target_tape.leaf(entities);
  Matrix u_tg;
  if (!frozen) u_tg = target_tape.value(util.forward(target_tape, e_tg, groups, queries));

  auto util_row = [&](int pair, int agent) {
    return pair_query_offset[static_cast<std::size_t>(pair)] + agent;
  };

  // Collect included (item, subtask) instances and their targets.
  struct Included {
    std::size_t item;
    int subtask;
  };
  std::vector<Included> included;
  std::vector<MixInstance> online_instances;
  std::vector<std::pair<Index, Index>> online_gather;  // (utility row, action)
  std::vector<MixInstance> target_instances;
  std::vector<std::pair<Index, Index>> target_gather;
  std::vector<int> bootstrap_slot;  // per included: index into target outputs or -1

  for (std::size_t ii = 0; ii < items.size(); ++ii) {
    const StepItem& it = items[ii];
    const int pt = item_pair_t[ii];
    const int pn = item_pair_next[ii];
    const int n_sub = static_cast<int>(it.rewards->size());
    for (int i = 0; i < n_sub; ++i) {
      if (i < static_cast<int>(it.live.size()) && !it.live[static_cast<std::size_t>(i)]) continue;
      const std::vector<int> team = it.alloc->team(i);
      const double r_i = (*it.rewards)[static_cast<std::size_t>(i)];
      if (team.empty() && r_i == 0.0) continue;

      MixInstance mi;
      mi.group = pt;
      for (int a : team) {
        mi.team_agent_rows.push_back(groups[static_cast<std::size_t>(pt)].begin + a);
        online_gather.emplace_back(util_row(pt, a),
                                   static_cast<Index>((*it.actions)[static_cast<std::size_t>(a)]));
      }
      mi.state_rows = feat::subtask_view_rows(*it.s, *it.alloc, i, cfg.mask_enabled);
      for (auto& r : mi.state_rows) r += groups[static_cast<std::size_t>(pt)].begin;
      online_instances.push_back(std::move(mi));

      const bool sub_terminal_next =
          i < static_cast<int>(it.live_next.size()) && !it.live_next[static_cast<std::size_t>(i)];
      if (frozen || it.env_terminal || sub_terminal_next) {
        bootstrap_slot.push_back(-1);
      } else {
        MixInstance ti;
        ti.group = pn;
        const std::vector<int> team_next = it.alloc_next->team(i);
        for (int a : team_next) {
          ti.team_agent_rows.push_back(groups[static_cast<std::size_t>(pn)].begin + a);
          // double-Q: online-network argmax, target-network evaluation
          const int act = argmax_row_lowest(u_on, util_row(pn, a));
          target_gather.emplace_back(util_row(pn, a), static_cast<Index>(act));
        }
        ti.state_rows = feat::subtask_view_rows(*it.s_next, *it.alloc_next, i, cfg.mask_enabled);
        for (auto& r : ti.state_rows) r += groups[static_cast<std::size_t>(pn)].begin;
        bootstrap_slot.push_back(static_cast<int>(target_instances.size()));
        target_instances.push_back(std::move(ti));
      }
      included.push_back({ii, i});
    }
  }

  TdLossStats out{online_tape.leaf(Matrix::Zero(1, 1)), 0.0, 0};
  if (included.empty()) return out;

  // Target Q_tot values, denormalized with the target-head statistics.
  std::vector<double> q_target(target_instances.size(), 0.0);
  if (!target_instances.empty()) {
    Matrix tg_col(static_cast<Index>(target_gather.size()), 1);
    for (std::size_t i = 0; i < target_gather.size(); ++i)
      tg_col(static_cast<Index>(i), 0) = u_tg(target_gather[i].first, target_gather[i].second);
    Var chosen_tg = target_tape.leaf(std::move(tg_col));
    const Matrix qt =
        target_tape.value(mixer.forward(target_tape, e_tg, chosen_tg, target_instances));
    const double mu = popart_target.mean(), sigma = popart_target.sigma();
    for (std::size_t i = 0; i < q_target.size(); ++i)
      q_target[i] = sigma * qt(static_cast<Index>(i), 0) + mu;
  }

  std::vector<double> ys_norm;
  if (frozen) {
    if (frozen_targets->size() != included.size())
      throw UsageError("execution_td_loss: frozen target count does not match instances");
    ys_norm = *frozen_targets;
  } else {
    std::vector<double> ys(included.size());
    for (std::size_t k = 0; k < included.size(); ++k) {
      const StepItem& it = items[included[k].item];
      const double r_i = (*it.rewards)[static_cast<std::size_t>(included[k].subtask)];
      ys[k] = bootstrap_slot[k] < 0
                  ? r_i
                  : r_i + cfg.gamma * q_target[static_cast<std::size_t>(bootstrap_slot[k])];
    }
    // Update normalization statistics (rescales the online mixer head), then
    // build the online graph against the rescaled parameters.
    ys_norm = diff::popart_update_and_normalize(popart, ys, online_pg, mixer.popart_head());
  }

  Var chosen_on = online_tape.gather(util_on, std::move(online_gather));
  Var q_on = mixer.forward(online_tape, e_on, chosen_on, online_instances);

  Matrix y_col(static_cast<Index>(ys_norm.size()), 1);
  for (std::size_t i = 0; i < ys_norm.size(); ++i) y_col(static_cast<Index>(i), 0) = ys_norm[i];
  Var y = online_tape.leaf(std::move(y_col));
  Var loss = online_tape.mean_all(online_tape.square(online_tape.sub(y, q_on)));

  out.loss = loss;
  out.value = online_tape.value(loss)(0, 0);
  out.instances = static_cast<int>(included.size());
  return out;
}

}  // namespace alma::exec
