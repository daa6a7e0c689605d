#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <vector>

#include "alma/common.hpp"
#include "alma/env/savethecity.hpp"
#include "alma/task/framework.hpp"

namespace alma::train {

struct EpisodeStep {
  env::EnvState state;       // state before the step
  task::Allocation alloc;    // allocation in force during the step
  std::vector<int> actions;  // per agent
  std::vector<double> reward_per_subtask;
  double reward_global = 0;
};

// Self-contained replay unit: every per-step tuple plus the final state and
// termination/success flags.
struct EpisodeRecord {
  std::vector<EpisodeStep> steps;
  env::EnvState final_state;
  bool terminated = false;  // environment termination (false = step-cap truncation)
  bool success = false;

  int length() const { return static_cast<int>(steps.size()); }
  double total_reward() const {
    double r = 0;
    for (const auto& s : steps) r += s.reward_global;
    return r;
  }
};

void serialize_episode(std::ostream& os, const EpisodeRecord& ep);
EpisodeRecord deserialize_episode(std::istream& is);

// FIFO ring of episodes with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void add(EpisodeRecord ep);
  std::size_t size() const { return episodes_.size(); }
  std::size_t capacity() const { return capacity_; }
  const EpisodeRecord& at(std::size_t i) const { return episodes_.at(i); }
  const EpisodeRecord& sample(Rng& rng) const;

  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  std::size_t capacity_;
  std::deque<EpisodeRecord> episodes_;
};

}  // namespace alma::train
