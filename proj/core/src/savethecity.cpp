#include "alma/env/savethecity.hpp"

#include <algorithm>
#include <string>

namespace alma::env {

namespace {

bool in_range01(double p) { return p >= 0.0 && p <= 1.0; }

double extinguish_rate(const EnvConfig& cfg, AgentType t) {
  switch (t) {
    case AgentType::Firefighter: return cfg.ext_firefighter;
    case AgentType::Builder: return cfg.ext_builder;
    case AgentType::Generalist: return cfg.ext_generalist;
  }
  return 0;
}

double repair_rate(const EnvConfig& cfg, AgentType t) {
  switch (t) {
    case AgentType::Firefighter: return cfg.rep_firefighter;
    case AgentType::Builder: return cfg.rep_builder;
    case AgentType::Generalist: return cfg.rep_generalist;
  }
  return 0;
}

// The capability an agent is weak at, boosted by a co-located generalist:
// builders extinguish weakly, firefighters repair weakly.
bool weak_at_extinguish(AgentType t) { return t == AgentType::Builder; }
bool weak_at_repair(AgentType t) { return t == AgentType::Firefighter; }

}  // namespace

void EnvConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("env: " + msg); };
  if (grid_side < 2) fail("grid_side must be >= 2");
  if (min_agents < 1 || max_agents < min_agents) fail("agent count range invalid");
  if (!in_range01(p_initial_fire)) fail("p_initial_fire must be in [0,1]");
  if (!in_range01(p_ignite)) fail("p_ignite must be in [0,1]");
  if (burn_damage <= 0) fail("burn_damage must be > 0");
  if (ext_firefighter <= 0 || ext_builder <= 0) fail("extinguish rates must be > 0");
  if (rep_builder <= 0 || rep_firefighter <= 0) fail("repair rates must be > 0");
  if (assist_multiplier <= 0) fail("assist_multiplier must be > 0");
  if (generalist_speed < 1) fail("generalist_speed must be >= 1");
  if (step_cap < 1) fail("step_cap must be >= 1");
  if (!(init_health_min > 0 && init_health_max < 1 && init_health_min <= init_health_max))
    fail("initial health range must satisfy 0 < min <= max < 1");
  if (buildings(max_agents) > grid_side * grid_side)
    fail("building count exceeds free cells");
}

SaveTheCityEnv::SaveTheCityEnv(EnvConfig cfg) : cfg_(cfg) { cfg_.validate(); }

const EnvState& SaveTheCityEnv::reset(std::uint64_t seed) {
  rng_.seed(seed);
  state_ = EnvState{};

  const int n_agents = cfg_.min_agents + rng_.uniform_int(cfg_.max_agents - cfg_.min_agents + 1);
  const int n_buildings = cfg_.buildings(n_agents);

  // Roster: uniform types, optionally resampled until a firefighter and a
  // builder are both present (rosters without both cannot complete buildings).
  std::vector<AgentType> types(static_cast<std::size_t>(n_agents));
  for (int attempt = 0;; ++attempt) {
    bool ff = false, bu = false;
    for (auto& t : types) {
      t = static_cast<AgentType>(rng_.uniform_int(3));
      ff = ff || t == AgentType::Firefighter;
      bu = bu || t == AgentType::Builder;
    }
    if (!cfg_.guarantee_core_types || (ff && bu)) break;
    if (attempt > 10000) throw ConfigError("env: roster resampling did not converge");
  }

  // Buildings at distinct random cells.
  std::vector<int> cells;
  for (int i = 0; i < n_buildings; ++i) {
    for (;;) {
      const int cell = rng_.uniform_int(cfg_.grid_side * cfg_.grid_side);
      if (std::find(cells.begin(), cells.end(), cell) == cells.end()) {
        cells.push_back(cell);
        break;
      }
    }
  }
  for (int i = 0; i < n_buildings; ++i) {
    Building b;
    b.x = cells[static_cast<std::size_t>(i)] % cfg_.grid_side;
    b.y = cells[static_cast<std::size_t>(i)] / cfg_.grid_side;
    b.health = rng_.uniform(cfg_.init_health_min, cfg_.init_health_max);
    b.fire = rng_.bernoulli(cfg_.p_initial_fire) ? 1.0 : 0.0;
    state_.buildings.push_back(b);
  }

  // Agents clustered in the 2x2 center block.
  const int c0 = cfg_.grid_side / 2 - 1;
  for (int a = 0; a < n_agents; ++a) {
    AgentBody body;
    body.type = types[static_cast<std::size_t>(a)];
    body.x = c0 + rng_.uniform_int(2);
    body.y = c0 + rng_.uniform_int(2);
    state_.agents.push_back(body);
  }

  state_.t = 0;
  state_.done = false;
  state_.success = false;
  return state_;
}

StepResult SaveTheCityEnv::step(const std::vector<Action>& actions) {
  if (state_.done) throw UsageError("step: episode already done");
  if (actions.size() != state_.agents.size())
    throw UsageError("step: expected " + std::to_string(state_.agents.size()) +
                     " actions, got " + std::to_string(actions.size()));

  const int side = cfg_.grid_side;
  const int n_buildings = static_cast<int>(state_.buildings.size());
  std::vector<BuildingEvents> events(static_cast<std::size_t>(n_buildings));

  // 1. Movement (generalists cover generalist_speed cells), clamped to grid.
  for (std::size_t a = 0; a < state_.agents.size(); ++a) {
    AgentBody& body = state_.agents[a];
    const int speed = body.type == AgentType::Generalist ? cfg_.generalist_speed : 1;
    int dx = 0, dy = 0;
    switch (actions[a]) {
      case Action::Up: dy = -speed; break;
      case Action::Down: dy = speed; break;
      case Action::Left: dx = -speed; break;
      case Action::Right: dx = speed; break;
      case Action::Stay:
      case Action::Act: break;
    }
    body.x = std::clamp(body.x + dx, 0, side - 1);
    body.y = std::clamp(body.y + dy, 0, side - 1);
  }

  // Generalist presence per building (co-location; optionally requiring act).
  std::vector<bool> generalist_at(static_cast<std::size_t>(n_buildings), false);
  for (std::size_t a = 0; a < state_.agents.size(); ++a) {
    const AgentBody& body = state_.agents[a];
    if (body.type != AgentType::Generalist) continue;
    if (cfg_.generalist_requires_act && actions[a] != Action::Act) continue;
    for (int i = 0; i < n_buildings; ++i) {
      const Building& b = state_.buildings[static_cast<std::size_t>(i)];
      if (b.x == body.x && b.y == body.y) generalist_at[static_cast<std::size_t>(i)] = true;
    }
  }

  // 2. Act resolution in agent-id order: extinguish while the fire meter is
  // positive, repair otherwise.
  for (std::size_t a = 0; a < state_.agents.size(); ++a) {
    if (actions[a] != Action::Act) continue;
    const AgentBody& body = state_.agents[a];
    for (int i = 0; i < n_buildings; ++i) {
      Building& b = state_.buildings[static_cast<std::size_t>(i)];
      if (b.x != body.x || b.y != body.y || b.terminal()) continue;
      BuildingEvents& ev = events[static_cast<std::size_t>(i)];
      if (b.fire > 0) {
        double rate = extinguish_rate(cfg_, body.type);
        if (weak_at_extinguish(body.type) && generalist_at[static_cast<std::size_t>(i)])
          rate *= cfg_.assist_multiplier;
        if (rate > 0) {
          const double next = std::max(0.0, b.fire - rate);
          if (next == 0.0) ev.fires_extinguished += 1;
          b.fire = next;
        }
      } else {
        double rate = repair_rate(cfg_, body.type);
        if (weak_at_repair(body.type) && generalist_at[static_cast<std::size_t>(i)])
          rate *= cfg_.assist_multiplier;
        if (rate > 0) {
          const double gain = std::min(1.0 - b.health, rate);
          b.health += gain;
          ev.health_gained += gain;
          if (b.health >= 1.0) {
            b.health = 1.0;
            b.complete = true;  // permanently fireproof from here on
            ev.completed = true;
          }
        }
      }
    }
  }

  // 3. Fire dynamics: one RNG draw per building per step, in building-id
  // order, whether or not the draw is used (keeps transitions of subtask i
  // independent of other subtasks' entities).
  for (int i = 0; i < n_buildings; ++i) {
    const double u = rng_.uniform();
    Building& b = state_.buildings[static_cast<std::size_t>(i)];
    if (b.terminal()) continue;
    BuildingEvents& ev = events[static_cast<std::size_t>(i)];
    if (b.fire > 0) {
      if (!generalist_at[static_cast<std::size_t>(i)]) {
        const double loss = std::min(b.health, cfg_.burn_damage);
        b.health -= loss;
        ev.health_lost += loss;
        if (b.health <= 0.0) {
          b.health = 0.0;
          b.fire = 0.0;
          b.destroyed = true;
          ev.destroyed = true;
        }
      }
    } else if (u < cfg_.p_ignite) {
      b.fire = 1.0;
    }
  }

  // 4. Rewards and termination.
  bool all_terminal = true, all_complete = true, any_destroyed = false;
  for (const Building& b : state_.buildings) {
    all_terminal = all_terminal && b.terminal();
    all_complete = all_complete && b.complete;
    any_destroyed = any_destroyed || b.destroyed;
  }

  StepResult out;
  out.rewards = subtask_rewards(events, all_complete, cfg_);

  state_.t += 1;
  out.done = all_terminal || state_.t >= cfg_.step_cap;
  out.success = out.done && !any_destroyed;
  state_.done = out.done;
  state_.success = out.success;
  return out;
}

task::RewardRecord subtask_rewards(const std::vector<BuildingEvents>& events, bool all_complete,
                                   const EnvConfig& cfg) {
  task::RewardRecord rec;
  rec.per_subtask.resize(events.size(), 0.0);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const BuildingEvents& ev = events[i];
    double r = 0;
    r += cfg.w_health_gain * ev.health_gained;
    r += cfg.w_extinguish * ev.fires_extinguished;
    r += cfg.w_complete * (ev.completed ? 1.0 : 0.0);
    r -= cfg.w_health_loss * ev.health_lost;
    r -= cfg.w_destroyed * (ev.destroyed ? 1.0 : 0.0);
    rec.per_subtask[i] = r;
    rec.global += r;
  }
  if (all_complete) rec.global += cfg.w_all_complete;
  return rec;
}

std::vector<double> agent_features(const AgentBody& a, const EnvConfig& cfg) {
  std::vector<double> f(task::kFeatureWidth, 0.0);
  const double denom = cfg.grid_side > 1 ? cfg.grid_side - 1 : 1;
  f[0] = a.x / denom;
  f[1] = a.y / denom;
  f[2 + static_cast<int>(a.type)] = 1.0;
  f[7] = 1.0;
  return f;
}

std::vector<double> building_features(const Building& b, const EnvConfig& cfg) {
  std::vector<double> f(task::kFeatureWidth, 0.0);
  const double denom = cfg.grid_side > 1 ? cfg.grid_side - 1 : 1;
  f[0] = b.x / denom;
  f[1] = b.y / denom;
  f[5] = b.health;
  f[6] = b.fire;
  f[7] = 0.0;
  return f;
}

task::GlobalState SaveTheCityEnv::global_state() const {
  task::GlobalState g;
  g.timestep = state_.t;
  const int n = num_agents();
  for (int a = 0; a < n; ++a) {
    task::EntityState e;
    e.id = a;
    e.kind = task::EntityKind::Agent;
    e.features = agent_features(state_.agents[static_cast<std::size_t>(a)], cfg_);
    e.subtask = -1;
    g.entities.push_back(std::move(e));
  }
  for (int i = 0; i < num_subtasks(); ++i) {
    task::EntityState e;
    e.id = n + i;
    e.kind = task::EntityKind::Building;
    e.features = building_features(state_.buildings[static_cast<std::size_t>(i)], cfg_);
    e.subtask = i;
    g.entities.push_back(std::move(e));
  }
  return g;
}

std::vector<task::SubtaskDescriptor> SaveTheCityEnv::subtasks() const {
  std::vector<task::SubtaskDescriptor> out;
  const int n = num_agents();
  for (int i = 0; i < num_subtasks(); ++i) {
    task::SubtaskDescriptor d;
    d.id = i;
    d.entity_ids = {n + i};
    d.completed = state_.buildings[static_cast<std::size_t>(i)].complete;
    d.failed = state_.buildings[static_cast<std::size_t>(i)].destroyed;
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<int> SaveTheCityEnv::live_subtasks() const {
  std::vector<int> out;
  for (int i = 0; i < num_subtasks(); ++i)
    if (!state_.buildings[static_cast<std::size_t>(i)].terminal()) out.push_back(i);
  return out;
}

}  // namespace alma::env
