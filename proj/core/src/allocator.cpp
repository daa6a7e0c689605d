#include "alma/alloc/allocator.hpp"

#include <algorithm>
#include <cmath>

namespace alma::alloc {

namespace {

diff::AttentionMask live_mask(int n_subtasks, const std::vector<int>& live) {
  diff::AttentionMask m(1, n_subtasks, false);
  for (int i : live) {
    if (i < 0 || i >= n_subtasks) throw UsageError("live subtask id out of range");
    m.at(0, i) = 1;
  }
  return m;
}

int sample_categorical(const Matrix& probs_row, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0;
  int last_positive = -1;
  for (Index i = 0; i < probs_row.cols(); ++i) {
    const double p = probs_row(0, i);
    if (p <= 0) continue;
    last_positive = static_cast<int>(i);
    acc += p;
    if (u < acc) return static_cast<int>(i);
  }
  if (last_positive < 0) throw UsageError("sample_categorical: no positive mass");
  return last_positive;  // guard against rounding in the cumulative sum
}

}  // namespace

ChainResult run_proposal_chain(Tape& t, const ProposalNetwork& net, const env::EnvState& s,
                               const env::EnvConfig& env_cfg, const std::vector<int>& live,
                               const task::Allocation* forced, Rng* rng) {
  if (live.empty()) throw UsageError("run_proposal_chain: zero live subtasks");
  const int n_agents = static_cast<int>(s.agents.size());
  const int n_sub = static_cast<int>(s.buildings.size());
  const diff::AttentionMask mask = live_mask(n_sub, live);

  auto emb = net.embed(t, s, env_cfg);
  Var g = emb.g;

  ChainResult out;
  out.alloc.subtask_of_agent.resize(static_cast<std::size_t>(n_agents));
  out.log_prob = t.leaf(Matrix::Zero(1, 1));
  out.entropy_sum = t.leaf(Matrix::Zero(1, 1));

  for (int a = 0; a < n_agents; ++a) {
    Var h_a = t.slice_rows(emb.h, {static_cast<Index>(a)});
    Var logits = t.transpose(t.matmul(g, t.transpose(h_a)));  // 1 x n_sub
    Var probs = t.softmax_rows_masked(logits, mask);
    out.factors.push_back(t.value(probs));

    int choice;
    if (forced) {
      choice = forced->subtask_of_agent.at(static_cast<std::size_t>(a));
      if (choice < 0 || choice >= n_sub || !mask.at(0, choice))
        throw UsageError("run_proposal_chain: forced assignment not live");
    } else {
      choice = sample_categorical(t.value(probs), *rng);
    }
    out.alloc.subtask_of_agent[static_cast<std::size_t>(a)] = choice;

    out.log_prob = t.add(out.log_prob, t.log(t.gather(probs, {{0, choice}})));
    out.entropy_sum = t.add(out.entropy_sum, t.entropy_rows_masked(probs, mask));

    if (a + 1 < n_agents) {
      Var g_row = t.slice_rows(g, {static_cast<Index>(choice)});
      Var delta = net.update(t, g_row, h_a);
      g = t.row_add(g, choice, delta);
    }
  }
  return out;
}

std::vector<double> propose_factor(const diff::ParameterGraph& pg, const ProposalNetwork& net,
                                   const env::EnvState& s, const env::EnvConfig& env_cfg,
                                   const std::vector<int>& live,
                                   const std::vector<int>& prefix, int agent) {
  if (static_cast<int>(prefix.size()) != agent)
    throw UsageError("propose_factor: prefix must cover agents ordered before the target");
  if (live.empty()) throw UsageError("propose_factor: zero live subtasks");
  const int n_sub = static_cast<int>(s.buildings.size());
  const diff::AttentionMask mask = live_mask(n_sub, live);

  Tape t(pg, /*grad=*/false);
  auto emb = net.embed(t, s, env_cfg);
  Var g = emb.g;
  for (int a = 0; a < agent; ++a) {
    const int choice = prefix[static_cast<std::size_t>(a)];
    Var h_a = t.slice_rows(emb.h, {static_cast<Index>(a)});
    Var g_row = t.slice_rows(g, {static_cast<Index>(choice)});
    g = t.row_add(g, choice, net.update(t, g_row, h_a));
  }
  Var h_a = t.slice_rows(emb.h, {static_cast<Index>(agent)});
  Var logits = t.transpose(t.matmul(g, t.transpose(h_a)));
  Var probs = t.softmax_rows_masked(logits, mask);
  const Matrix& p = t.value(probs);
  return {p.data(), p.data() + p.size()};
}

SampleBatch sample_allocations(const diff::ParameterGraph& pg, const ProposalNetwork& net,
                               const env::EnvState& s, const env::EnvConfig& env_cfg,
                               const std::vector<int>& live, int count, Rng& rng) {
  if (live.empty()) throw UsageError("sample_allocations: zero live subtasks");
  if (count < 1) throw UsageError("sample_allocations: count must be >= 1");
  const int n_agents = static_cast<int>(s.agents.size());
  const int n_sub = static_cast<int>(s.buildings.size());

  // Embeddings once per state (tape, no grad), then a batched sampling loop:
  // each sample keeps its own copy of the subtask embedding matrix, and the
  // f^u updates for all samples are computed as one matrix product per agent.
  Matrix h, g0;
  {
    Tape t(pg, /*grad=*/false);
    auto emb = net.embed(t, s, env_cfg);
    h = t.value(emb.h);
    g0 = t.value(emb.g);
  }
  const Index d = g0.cols();
  const auto& fu1 = net.fu().first();
  const auto& fu2 = net.fu().second();
  const Matrix& w1 = pg.value(fu1.weight_name()).mat();
  const Matrix& b1 = pg.value(fu1.bias_name()).mat();
  const Matrix& w2 = pg.value(fu2.weight_name()).mat();
  const Matrix& b2 = pg.value(fu2.bias_name()).mat();

  Matrix g_all(static_cast<Index>(count) * n_sub, d);
  for (int k = 0; k < count; ++k) g_all.block(static_cast<Index>(k) * n_sub, 0, n_sub, d) = g0;

  SampleBatch out;
  out.allocs.assign(static_cast<std::size_t>(count), task::Allocation{});
  for (auto& a : out.allocs)
    a.subtask_of_agent.resize(static_cast<std::size_t>(n_agents));
  out.log_probs.assign(static_cast<std::size_t>(count), 0.0);

  std::vector<int> choices(static_cast<std::size_t>(count));
  for (int a = 0; a < n_agents; ++a) {
    const Matrix h_a = h.row(a).transpose();            // d x 1
    const Matrix logits_all = g_all * h_a;              // (count*n_sub) x 1
    for (int k = 0; k < count; ++k) {
      // masked softmax over live subtasks
      double m = -std::numeric_limits<double>::infinity();
      for (int i : live) m = std::max(m, logits_all(static_cast<Index>(k) * n_sub + i, 0));
      Matrix probs = Matrix::Zero(1, n_sub);
      double z = 0;
      for (int i : live) {
        probs(0, i) = std::exp(logits_all(static_cast<Index>(k) * n_sub + i, 0) - m);
        z += probs(0, i);
      }
      probs /= z;
      const int choice = sample_categorical(probs, rng);
      choices[static_cast<std::size_t>(k)] = choice;
      out.allocs[static_cast<std::size_t>(k)].subtask_of_agent[static_cast<std::size_t>(a)] =
          choice;
      out.log_probs[static_cast<std::size_t>(k)] += std::log(probs(0, choice));
    }
    if (a + 1 == n_agents) break;
    // batched f^u update of each sample's chosen row
    Matrix x(static_cast<Index>(count), 2 * d);
    for (int k = 0; k < count; ++k) {
      x.block(k, 0, 1, d) =
          g_all.row(static_cast<Index>(k) * n_sub + choices[static_cast<std::size_t>(k)]);
      x.block(k, d, 1, d) = h.row(a);
    }
    Matrix z1 = (x * w1).rowwise() + b1.row(0);
    z1 = z1.cwiseMax(0.0);
    Matrix delta = (z1 * w2).rowwise() + b2.row(0);
    for (int k = 0; k < count; ++k)
      g_all.row(static_cast<Index>(k) * n_sub + choices[static_cast<std::size_t>(k)]) +=
          delta.row(k);
  }
  return out;
}

BestOfResult best_of_proposals(const diff::ParameterGraph& prop_pg,
                               const diff::ParameterGraph& q_pg, const ProposalNetwork& net,
                               const AllocationValueNetwork& qnet, const env::EnvState& s,
                               const env::EnvConfig& env_cfg, const std::vector<int>& live,
                               int n_proposals, Rng& rng) {
  BestOfResult out;
  out.samples = sample_allocations(prop_pg, net, s, env_cfg, live, n_proposals, rng);

  Tape t(q_pg, /*grad=*/false);
  std::vector<const env::EnvState*> states(static_cast<std::size_t>(n_proposals), &s);
  std::vector<const task::Allocation*> allocs;
  allocs.reserve(out.samples.allocs.size());
  for (const auto& a : out.samples.allocs) allocs.push_back(&a);
  const Matrix q = t.value(qnet.forward(t, states, allocs, env_cfg));

  out.q_values.assign(q.data(), q.data() + q.size());
  out.best_index = 0;
  for (int k = 1; k < n_proposals; ++k)
    if (out.q_values[static_cast<std::size_t>(k)] >
        out.q_values[static_cast<std::size_t>(out.best_index)])
      out.best_index = k;  // strict >: ties keep the lowest sample index
  out.best = out.samples.allocs[static_cast<std::size_t>(out.best_index)];
  out.best_q = out.q_values[static_cast<std::size_t>(out.best_index)];
  return out;
}

std::vector<task::Allocation> best_of_proposals_batch(
    const diff::ParameterGraph& prop_pg, const diff::ParameterGraph& q_pg,
    const ProposalNetwork& net, const AllocationValueNetwork& qnet,
    const std::vector<const env::EnvState*>& states, const std::vector<std::vector<int>>& lives,
    const env::EnvConfig& env_cfg, int n_proposals, Rng& rng) {
  if (states.size() != lives.size())
    throw UsageError("best_of_proposals_batch: states/live sets mismatch");
  if (states.empty()) return {};

  std::vector<SampleBatch> batches;
  batches.reserve(states.size());
  std::vector<const env::EnvState*> q_states;
  std::vector<const task::Allocation*> q_allocs;
  q_states.reserve(states.size() * static_cast<std::size_t>(n_proposals));
  for (std::size_t i = 0; i < states.size(); ++i) {
    batches.push_back(
        sample_allocations(prop_pg, net, *states[i], env_cfg, lives[i], n_proposals, rng));
    for (const auto& a : batches.back().allocs) {
      q_states.push_back(states[i]);
      q_allocs.push_back(&a);
    }
  }

  Tape t(q_pg, /*grad=*/false);
  const Matrix q = t.value(qnet.forward(t, q_states, q_allocs, env_cfg));

  std::vector<task::Allocation> out;
  out.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    const Index base = static_cast<Index>(i) * n_proposals;
    int best = 0;
    for (int k = 1; k < n_proposals; ++k)
      if (q(base + k, 0) > q(base + best, 0)) best = k;
    out.push_back(batches[i].allocs[static_cast<std::size_t>(best)]);
  }
  return out;
}

task::Allocation exploratory_allocation(const diff::ParameterGraph& prop_pg,
                                        const diff::ParameterGraph& q_pg,
                                        const ProposalNetwork& net,
                                        const AllocationValueNetwork& qnet,
                                        const env::EnvState& s, const env::EnvConfig& env_cfg,
                                        const std::vector<int>& live, int n_proposals,
                                        double eps_p, double eps_r, Rng& rng) {
  task::Allocation alloc;
  if (rng.uniform() < eps_p) {
    alloc = sample_allocations(prop_pg, net, s, env_cfg, live, 1, rng).allocs[0];
  } else {
    alloc = best_of_proposals(prop_pg, q_pg, net, qnet, s, env_cfg, live, n_proposals, rng).best;
  }
  for (auto& b : alloc.subtask_of_agent)
    if (rng.uniform() < eps_r) b = live[static_cast<std::size_t>(rng.uniform_int(
        static_cast<int>(live.size())))];
  return alloc;
}

ScalarLoss aql_proposal_loss(Tape& online_tape, const diff::ParameterGraph& q_pg,
                             const ProposalNetwork& net, const AllocationValueNetwork& qnet,
                             const std::vector<ProposalLossInput>& batch,
                             const env::EnvConfig& env_cfg, const AllocConfig& cfg, Rng& rng) {
  if (batch.empty()) return {online_tape.leaf(Matrix::Zero(1, 1)), 0.0};

  Var total = online_tape.leaf(Matrix::Zero(1, 1));
  for (const auto& item : batch) {
    const task::Allocation bstar =
        item.bstar ? *item.bstar
                   : best_of_proposals(online_tape.params(), q_pg, net, qnet, *item.s, env_cfg,
                                       item.live, cfg.n_proposals, rng)
                         .best;
    ChainResult chain =
        run_proposal_chain(online_tape, net, *item.s, env_cfg, item.live, &bstar, nullptr);
    Var term = online_tape.sub(online_tape.scale(chain.log_prob, -1.0),
                               online_tape.scale(chain.entropy_sum, cfg.lambda_aql));
    total = online_tape.add(total, term);
  }
  Var loss = online_tape.scale(total, 1.0 / static_cast<double>(batch.size()));
  return {loss, online_tape.value(loss)(0, 0)};
}

ScalarLoss allocation_td_loss(Tape& online_tape, diff::ParameterGraph& online_pg,
                              const diff::ParameterGraph& target_pg, const ProposalNetwork& net,
                              const AllocationValueNetwork& qnet,
                              diff::PopArtState& popart, const diff::PopArtState& popart_target,
                              const std::vector<AllocTdItem>& items,
                              const env::EnvConfig& env_cfg, const AllocConfig& cfg, Rng& rng,
                              const std::vector<double>* frozen_targets) {
  for (const auto& it : items)
    if (!it.s || !it.alloc || (!it.terminal && !it.live_next.empty() && !it.s_next))
      throw UsageError("allocation_td_loss: item missing state/allocation data");
  if (items.empty()) return {online_tape.leaf(Matrix::Zero(1, 1)), 0.0};

  std::vector<double> ys_norm;
  if (frozen_targets) {
    if (frozen_targets->size() != items.size())
      throw UsageError("allocation_td_loss: frozen target count does not match items");
    ys_norm = *frozen_targets;
  } else {
    // Targets: b*(s_next) from current proposals, evaluated by the target
    // network; denormalize with the target-head statistics. Items carrying a
    // precomputed b* are scored in one batched target pass.
    std::vector<double> ys(items.size());
    const double mu_t = popart_target.mean(), sigma_t = popart_target.sigma();
    std::vector<const env::EnvState*> batch_states;
    std::vector<const task::Allocation*> batch_allocs;
    std::vector<std::size_t> batch_item;
    for (std::size_t i = 0; i < items.size(); ++i) {
      const AllocTdItem& it = items[i];
      if (it.terminal || it.live_next.empty()) {
        ys[i] = it.window_reward;
      } else if (it.bstar_next) {
        batch_states.push_back(it.s_next);
        batch_allocs.push_back(&*it.bstar_next);
        batch_item.push_back(i);
      } else {
        const BestOfResult best = best_of_proposals(online_tape.params(), target_pg, net, qnet,
                                                    *it.s_next, env_cfg, it.live_next,
                                                    cfg.n_proposals, rng);
        ys[i] = it.window_reward + cfg.gamma * (sigma_t * best.best_q + mu_t);
      }
    }
    if (!batch_states.empty()) {
      Tape tt(target_pg, /*grad=*/false);
      const Matrix qv = tt.value(qnet.forward(tt, batch_states, batch_allocs, env_cfg));
      for (std::size_t k = 0; k < batch_item.size(); ++k)
        ys[batch_item[k]] = items[batch_item[k]].window_reward +
                            cfg.gamma * (sigma_t * qv(static_cast<Index>(k), 0) + mu_t);
    }
    ys_norm = diff::popart_update_and_normalize(popart, ys, online_pg, qnet.popart_head());
  }

  std::vector<const env::EnvState*> states;
  std::vector<const task::Allocation*> allocs;
  states.reserve(items.size());
  allocs.reserve(items.size());
  for (const auto& it : items) {
    states.push_back(it.s);
    allocs.push_back(it.alloc);
  }
  Var q = qnet.forward(online_tape, states, allocs, env_cfg);

  Matrix y_col(static_cast<Index>(ys_norm.size()), 1);
  for (std::size_t i = 0; i < ys_norm.size(); ++i) y_col(static_cast<Index>(i), 0) = ys_norm[i];
  Var y = online_tape.leaf(std::move(y_col));
  Var loss = online_tape.mean_all(online_tape.square(online_tape.sub(y, q)));
  return {loss, online_tape.value(loss)(0, 0)};
}

}  // namespace alma::alloc
