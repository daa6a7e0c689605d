#include "alma/eval/trace.hpp"

#include <fstream>

#include "json.hpp"

namespace alma::eval {

namespace {

nlohmann::json state_json(const env::EnvState& s) {
  nlohmann::json entities = nlohmann::json::array();
  for (std::size_t a = 0; a < s.agents.size(); ++a) {
    const auto& b = s.agents[a];
    entities.push_back({{"id", a},
                        {"kind", "agent"},
                        {"x", b.x},
                        {"y", b.y},
                        {"type", static_cast<int>(b.type)}});
  }
  for (std::size_t i = 0; i < s.buildings.size(); ++i) {
    const auto& b = s.buildings[i];
    entities.push_back({{"id", s.agents.size() + i},
                        {"kind", "building"},
                        {"subtask", i},
                        {"x", b.x},
                        {"y", b.y},
                        {"health", b.health},
                        {"fire", b.fire},
                        {"complete", b.complete},
                        {"destroyed", b.destroyed}});
  }
  return {{"t", s.t}, {"entities", entities}};
}

}  // namespace

int write_trace(const train::Networks& nets, std::uint64_t seed, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("trace: cannot open '" + path + "' for writing");

  env::SaveTheCityEnv env(nets.cfg.env);
  train::CollectParams p;
  p.env_seed = derive_seed(seed, {0x01});
  p.explore_seed = derive_seed(seed, {0x02});
  p.eps = p.eps_p = p.eps_r = 0;
  const train::EpisodeRecord rec = train::collect_episode(nets, env, p);

  nlohmann::json header;
  header["record"] = "header";
  header["method"] = method_name(nets.cfg.method);
  header["seed"] = seed;
  header["alloc_interval"] = nets.cfg.alloc_interval;
  header["steps"] = rec.length();
  header["terminated"] = rec.terminated;
  header["success"] = rec.success;
  os << header.dump() << "\n";

  for (int t = 0; t < rec.length(); ++t) {
    const train::EpisodeStep& st = rec.steps[static_cast<std::size_t>(t)];
    nlohmann::json row;
    row["record"] = "step";
    row["t"] = t;
    row["state"] = state_json(st.state);
    row["allocation"] = st.alloc.subtask_of_agent;
    row["allocation_boundary"] = nets.hierarchical() && t % nets.cfg.alloc_interval == 0;
    row["actions"] = st.actions;
    row["reward_global"] = st.reward_global;
    row["reward_per_subtask"] = st.reward_per_subtask;
    row["done"] = t + 1 == rec.length();
    os << row.dump() << "\n";
  }
  return rec.length();
}

}  // namespace alma::eval
