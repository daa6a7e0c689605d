#include "alma/train/replay.hpp"

#include <fstream>

namespace alma::train {

namespace {

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

void put_state(std::ostream& os, const env::EnvState& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.agents.size()));
  for (const auto& a : s.agents) {
    put<std::int32_t>(os, a.x);
    put<std::int32_t>(os, a.y);
    put<std::int32_t>(os, static_cast<std::int32_t>(a.type));
  }
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.buildings.size()));
  for (const auto& b : s.buildings) {
    put<std::int32_t>(os, b.x);
    put<std::int32_t>(os, b.y);
    put<double>(os, b.health);
    put<double>(os, b.fire);
    put<std::uint8_t>(os, b.complete);
    put<std::uint8_t>(os, b.destroyed);
  }
  put<std::int32_t>(os, s.t);
  put<std::uint8_t>(os, s.done);
  put<std::uint8_t>(os, s.success);
}

env::EnvState get_state(std::istream& is) {
  env::EnvState s;
  const auto na = get<std::uint32_t>(is);
  s.agents.resize(na);
  for (auto& a : s.agents) {
    a.x = get<std::int32_t>(is);
    a.y = get<std::int32_t>(is);
    a.type = static_cast<env::AgentType>(get<std::int32_t>(is));
  }
  const auto nb = get<std::uint32_t>(is);
  s.buildings.resize(nb);
  for (auto& b : s.buildings) {
    b.x = get<std::int32_t>(is);
    b.y = get<std::int32_t>(is);
    b.health = get<double>(is);
    b.fire = get<double>(is);
    b.complete = get<std::uint8_t>(is);
    b.destroyed = get<std::uint8_t>(is);
  }
  s.t = get<std::int32_t>(is);
  s.done = get<std::uint8_t>(is);
  s.success = get<std::uint8_t>(is);
  return s;
}

}  // namespace

void serialize_episode(std::ostream& os, const EpisodeRecord& ep) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ep.steps.size()));
  for (const auto& step : ep.steps) {
    put_state(os, step.state);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(step.alloc.subtask_of_agent.size()));
    for (int b : step.alloc.subtask_of_agent) put<std::int32_t>(os, b);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(step.actions.size()));
    for (int a : step.actions) put<std::int32_t>(os, a);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(step.reward_per_subtask.size()));
    for (double r : step.reward_per_subtask) put<double>(os, r);
    put<double>(os, step.reward_global);
  }
  put_state(os, ep.final_state);
  put<std::uint8_t>(os, ep.terminated);
  put<std::uint8_t>(os, ep.success);
}

EpisodeRecord deserialize_episode(std::istream& is) {
  EpisodeRecord ep;
  const auto n = get<std::uint32_t>(is);
  ep.steps.resize(n);
  for (auto& step : ep.steps) {
    step.state = get_state(is);
    step.alloc.subtask_of_agent.resize(get<std::uint32_t>(is));
    for (auto& b : step.alloc.subtask_of_agent) b = get<std::int32_t>(is);
    step.actions.resize(get<std::uint32_t>(is));
    for (auto& a : step.actions) a = get<std::int32_t>(is);
    step.reward_per_subtask.resize(get<std::uint32_t>(is));
    for (auto& r : step.reward_per_subtask) r = get<double>(is);
    step.reward_global = get<double>(is);
  }
  ep.final_state = get_state(is);
  ep.terminated = get<std::uint8_t>(is);
  ep.success = get<std::uint8_t>(is);
  return ep;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::add(EpisodeRecord ep) {
  episodes_.push_back(std::move(ep));
  while (episodes_.size() > capacity_) episodes_.pop_front();
}

const EpisodeRecord& ReplayBuffer::sample(Rng& rng) const {
  if (episodes_.empty()) throw UsageError("ReplayBuffer: sample from empty buffer");
  return episodes_[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(episodes_.size())))];
}

void ReplayBuffer::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("ReplayBuffer: cannot write '" + path + "'");
  put<std::uint64_t>(os, capacity_);
  put<std::uint64_t>(os, episodes_.size());
  for (const auto& ep : episodes_) serialize_episode(os, ep);
  if (!os) throw ConfigError("ReplayBuffer: write failed for '" + path + "'");
}

void ReplayBuffer::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("ReplayBuffer: cannot open '" + path + "'");
  capacity_ = get<std::uint64_t>(is);
  const auto n = get<std::uint64_t>(is);
  episodes_.clear();
  for (std::uint64_t i = 0; i < n; ++i) episodes_.push_back(deserialize_episode(is));
  if (!is) throw ConfigError("ReplayBuffer: truncated file '" + path + "'");
}

}  // namespace alma::train
