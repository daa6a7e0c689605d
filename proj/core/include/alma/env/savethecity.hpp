#pragma once

#include <cstdint>
#include <vector>

#include "alma/common.hpp"
#include "alma/task/framework.hpp"

namespace alma::env {

enum class AgentType : int { Firefighter = 0, Builder = 1, Generalist = 2 };

enum class Action : int { Up = 0, Down = 1, Left = 2, Right = 3, Stay = 4, Act = 5 };
inline constexpr int kNumActions = 6;

struct EnvConfig {
  int grid_side = 16;
  int min_agents = 2;
  int max_agents = 5;  // buildings = agents + 1
  double p_initial_fire = 0.4;
  double p_ignite = 0.05;        // per incomplete, non-burning building per step
  double burn_damage = 0.04;     // health lost per step while burning unattended
  double ext_firefighter = 0.25;  // fire meter reduction per act
  double ext_builder = 0.05;
  double ext_generalist = 0.0;
  double rep_builder = 0.10;  // health gained per act on an extinguished building
  double rep_firefighter = 0.02;
  double rep_generalist = 0.0;
  double assist_multiplier = 2.0;  // generalist boost to a co-located agent's weak ability
  int generalist_speed = 2;        // cells per move action
  int step_cap = 100;
  double init_health_min = 0.3;
  double init_health_max = 0.8;
  // reward weights
  double w_health_gain = 1.0;
  double w_extinguish = 0.25;  // per fire fully put out by an agent
  double w_complete = 1.0;
  double w_health_loss = 1.0;
  double w_destroyed = 2.0;
  double w_all_complete = 5.0;  // global-only bonus
  // a generalist halts burning / assists when co-located; if true the
  // generalist must also take the act action
  bool generalist_requires_act = false;
  // resample rosters until they contain >=1 firefighter and >=1 builder
  bool guarantee_core_types = true;

  int buildings(int agents) const { return agents + 1; }
  void validate() const;
};

struct Building {
  int x = 0, y = 0;
  double health = 0;  // black bar, in [0,1]
  double fire = 0;    // red bar, in [0,1]; burning while > 0
  bool complete = false;   // health reached 1: permanently fireproof
  bool destroyed = false;  // health reached 0

  bool terminal() const { return complete || destroyed; }
  bool burning() const { return fire > 0; }
};

struct AgentBody {
  int x = 0, y = 0;
  AgentType type = AgentType::Firefighter;
};

struct EnvState {
  std::vector<AgentBody> agents;
  std::vector<Building> buildings;
  int t = 0;
  bool done = false;
  bool success = false;
};

struct StepResult {
  task::RewardRecord rewards;
  bool done = false;
  bool success = false;
};

// The SaveTheCity composite task: N agents of three capability types repair
// and extinguish N+1 burning buildings on a square grid. Deterministic given
// (config, seed, action sequence). Fire dynamics consume exactly one RNG draw
// per building per step, in building-id order, so subtask-i transitions are
// unaffected by other subtasks' entities.
class SaveTheCityEnv {
 public:
  explicit SaveTheCityEnv(EnvConfig cfg);

  const EnvState& reset(std::uint64_t seed);
  // One action per agent. Throws UsageError on a malformed action vector.
  StepResult step(const std::vector<Action>& actions);

  // Replaces the current state without touching the RNG stream (state
  // injection for replay and factorization probes).
  void set_state(EnvState s) { state_ = std::move(s); }

  const EnvState& state() const { return state_; }
  const EnvConfig& config() const { return cfg_; }

  int num_agents() const { return static_cast<int>(state_.agents.size()); }
  int num_subtasks() const { return static_cast<int>(state_.buildings.size()); }

  // Subtask i <-> building i; entity ids: agents 0..N-1, building i = N + i.
  std::vector<task::SubtaskDescriptor> subtasks() const;
  task::GlobalState global_state() const;

  // Subtasks that are not complete/destroyed, in id order.
  std::vector<int> live_subtasks() const;

 private:
  EnvConfig cfg_;
  EnvState state_;
  Rng rng_;
};

// Per-step reward computation from the step's building events. Exposed so the
// summation identity (global = sum of per-subtask + all-complete bonus) can be
// exercised on synthetic event logs.
struct BuildingEvents {
  double health_gained = 0;
  double health_lost = 0;
  int fires_extinguished = 0;
  bool completed = false;
  bool destroyed = false;
};
task::RewardRecord subtask_rewards(const std::vector<BuildingEvents>& events,
                                   bool all_complete, const EnvConfig& cfg);

// Entity feature vectors per the documented layout (task::kFeatureWidth).
std::vector<double> agent_features(const AgentBody& a, const EnvConfig& cfg);
std::vector<double> building_features(const Building& b, const EnvConfig& cfg);

}  // namespace alma::env
