#include "alma/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace alma {

std::string method_name(Method m) {
  switch (m) {
    case Method::Alma: return "alma";
    case Method::AlmaNoMask: return "alma_nomask";
    case Method::Flat: return "flat";
    case Method::Heuristic: return "heuristic";
    case Method::Random: return "random";
  }
  return "alma";
}

Method parse_method(const std::string& name) {
  if (name == "alma") return Method::Alma;
  if (name == "alma_nomask") return Method::AlmaNoMask;
  if (name == "flat") return Method::Flat;
  if (name == "heuristic") return Method::Heuristic;
  if (name == "random") return Method::Random;
  throw ConfigError("config: unknown method '" + name +
                    "' (expected alma|flat|heuristic|random|alma_nomask)");
}

exec::ExecConfig ExperimentConfig::exec_config() const {
  exec::ExecConfig c;
  c.feat_dim = task::kFeatureWidth;
  c.hidden = hidden_dim;
  c.heads = attn_heads;
  c.mixer_hidden = mixer_hidden;
  c.actions = env::kNumActions;
  c.mask_enabled = mask_enabled();
  c.gamma = gamma;
  return c;
}

alloc::AllocConfig ExperimentConfig::alloc_config() const {
  alloc::AllocConfig c;
  c.feat_dim = task::kFeatureWidth;
  c.embed_dim = embed_dim;
  c.heads = attn_heads;
  c.subtask_slots = subtask_slots();
  c.lambda_aql = lambda_aql;
  c.n_proposals = n_proposals;
  c.gamma = gamma;
  return c;
}

void ExperimentConfig::validate() const {
  env.validate();
  auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
  if (lambda_aql < 0) fail("lambda_aql must be >= 0");
  if (n_proposals < 1) fail("n_proposals must be >= 1");
  if (alloc_interval < 1) fail("alloc_interval must be >= 1");
  if (embed_dim < 1 || hidden_dim < 1 || mixer_hidden < 1) fail("network widths must be >= 1");
  if (attn_heads < 1) fail("attn_heads must be >= 1");
  if (embed_dim % attn_heads != 0) fail("attn_heads must divide embed_dim");
  if (hidden_dim % attn_heads != 0) fail("attn_heads must divide hidden_dim");
  auto sched_ok = [&](const train::Schedule& s, const std::string& n) {
    if (s.start < 0 || s.start > 1 || s.end < 0 || s.end > 1)
      fail(n + " schedule values must be in [0,1]");
    if (s.horizon < 0) fail(n + " anneal horizon must be >= 0");
  };
  sched_ok(eps, "eps");
  sched_ok(eps_p, "eps_p");
  sched_ok(eps_r, "eps_r");
  if (lr <= 0) fail("lr must be > 0");
  if (rmsprop_alpha <= 0 || rmsprop_alpha >= 1) fail("rmsprop_alpha must be in (0,1)");
  if (rmsprop_eps <= 0) fail("rmsprop_eps must be > 0");
  if (target_update_interval < 1) fail("target_update_interval must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (grad_clip <= 0) fail("grad_clip must be > 0");
  if (buffer_capacity < 1) fail("buffer_capacity must be >= 1");
  if (gamma < 0 || gamma > 1) fail("gamma must be in [0,1]");
  if (total_env_steps < 0) fail("total_env_steps must be >= 0");
  if (train_steps_per_episode < 0) fail("train_steps_per_episode must be >= 0");
  if (num_envs < 1) fail("num_envs must be >= 1");
  if (num_threads < 0) fail("num_threads must be >= 0");
  if (eval_interval < 1) fail("eval_interval must be >= 1");
  if (eval_episodes < 1) fail("eval_episodes must be >= 1");
  if (checkpoint_interval < 1) fail("checkpoint_interval must be >= 1");
  if (popart_decay <= 0 || popart_decay > 1) fail("popart_decay must be in (0,1]");
  if (popart_floor <= 0) fail("popart_floor must be > 0");
  if (weight_init != "fan_in_uniform")
    fail("weight_init: only 'fan_in_uniform' is supported");
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Binder {
  // section -> key -> setter
  std::map<std::string, std::map<std::string, std::function<void(const std::string&)>>> set;

  static double to_double(const std::string& s, const std::string& key) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "': expected a number, got '" + s + "'");
    }
  }
  static std::int64_t to_int(const std::string& s, const std::string& key) {
    const double v = to_double(s, key);
    if (std::floor(v) != v)
      throw ConfigError("config: key '" + key + "': expected an integer, got '" + s + "'");
    return static_cast<std::int64_t>(v);
  }
  static bool to_bool(const std::string& s, const std::string& key) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("config: key '" + key + "': expected true/false, got '" + s + "'");
  }

  void d(const std::string& sec, const std::string& key, double* p) {
    set[sec][key] = [p, key](const std::string& v) { *p = to_double(v, key); };
  }
  void i(const std::string& sec, const std::string& key, int* p) {
    set[sec][key] = [p, key](const std::string& v) { *p = static_cast<int>(to_int(v, key)); };
  }
  void i64(const std::string& sec, const std::string& key, std::int64_t* p) {
    set[sec][key] = [p, key](const std::string& v) { *p = to_int(v, key); };
  }
  void b(const std::string& sec, const std::string& key, bool* p) {
    set[sec][key] = [p, key](const std::string& v) { *p = to_bool(v, key); };
  }
  void s(const std::string& sec, const std::string& key, std::string* p) {
    set[sec][key] = [p](const std::string& v) { *p = v; };
  }
};

Binder make_binder(ExperimentConfig& c) {
  Binder b;
  b.set[""]["method"] = [&c](const std::string& v) { c.method = parse_method(v); };

  b.i("env", "grid_side", &c.env.grid_side);
  b.i("env", "min_agents", &c.env.min_agents);
  b.i("env", "max_agents", &c.env.max_agents);
  b.d("env", "p_initial_fire", &c.env.p_initial_fire);
  b.d("env", "p_ignite", &c.env.p_ignite);
  b.d("env", "burn_damage", &c.env.burn_damage);
  b.d("env", "extinguish_firefighter", &c.env.ext_firefighter);
  b.d("env", "extinguish_builder", &c.env.ext_builder);
  b.d("env", "extinguish_generalist", &c.env.ext_generalist);
  b.d("env", "repair_builder", &c.env.rep_builder);
  b.d("env", "repair_firefighter", &c.env.rep_firefighter);
  b.d("env", "repair_generalist", &c.env.rep_generalist);
  b.d("env", "assist_multiplier", &c.env.assist_multiplier);
  b.i("env", "generalist_speed", &c.env.generalist_speed);
  b.i("env", "step_cap", &c.env.step_cap);
  b.d("env", "init_health_min", &c.env.init_health_min);
  b.d("env", "init_health_max", &c.env.init_health_max);
  b.d("env", "reward_health_gain", &c.env.w_health_gain);
  b.d("env", "reward_extinguish", &c.env.w_extinguish);
  b.d("env", "reward_complete", &c.env.w_complete);
  b.d("env", "reward_health_loss", &c.env.w_health_loss);
  b.d("env", "reward_destroyed", &c.env.w_destroyed);
  b.d("env", "reward_all_complete", &c.env.w_all_complete);
  b.b("env", "generalist_requires_act", &c.env.generalist_requires_act);
  b.b("env", "guarantee_core_types", &c.env.guarantee_core_types);

  b.d("alloc", "lambda_aql", &c.lambda_aql);
  b.i("alloc", "n_proposals", &c.n_proposals);
  b.i("alloc", "alloc_interval", &c.alloc_interval);
  b.i("alloc", "embed_dim", &c.embed_dim);
  b.d("alloc", "eps_p_start", &c.eps_p.start);
  b.d("alloc", "eps_p_end", &c.eps_p.end);
  b.i64("alloc", "eps_p_anneal_steps", &c.eps_p.horizon);
  b.d("alloc", "eps_r_start", &c.eps_r.start);
  b.d("alloc", "eps_r_end", &c.eps_r.end);
  b.i64("alloc", "eps_r_anneal_steps", &c.eps_r.horizon);

  b.i("exec", "hidden_dim", &c.hidden_dim);
  b.i("exec", "mixer_hidden", &c.mixer_hidden);
  b.i("exec", "attn_heads", &c.attn_heads);
  b.d("exec", "eps_start", &c.eps.start);
  b.d("exec", "eps_end", &c.eps.end);
  b.i64("exec", "eps_anneal_steps", &c.eps.horizon);

  b.d("train", "lr", &c.lr);
  b.d("train", "rmsprop_alpha", &c.rmsprop_alpha);
  b.d("train", "rmsprop_eps", &c.rmsprop_eps);
  b.i("train", "target_update_interval", &c.target_update_interval);
  b.i("train", "batch_size", &c.batch_size);
  b.d("train", "grad_clip", &c.grad_clip);
  b.i("train", "buffer_capacity", &c.buffer_capacity);
  b.d("train", "gamma", &c.gamma);
  b.i64("train", "total_env_steps", &c.total_env_steps);
  b.i("train", "train_steps_per_episode", &c.train_steps_per_episode);
  b.i("train", "num_envs", &c.num_envs);
  b.i("train", "num_threads", &c.num_threads);
  b.i64("train", "eval_interval", &c.eval_interval);
  b.i("train", "eval_episodes", &c.eval_episodes);
  b.i64("train", "checkpoint_interval", &c.checkpoint_interval);
  b.d("train", "popart_decay", &c.popart_decay);
  b.d("train", "popart_floor", &c.popart_floor);
  b.s("train", "weight_init", &c.weight_init);
  return b;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto z = s.find_last_not_of(" \t\r\n");
  return s.substr(a, z - a + 1);
}

}  // namespace

ExperimentConfig ExperimentConfig::from_string(const std::string& text) {
  ExperimentConfig cfg;
  Binder binder = make_binder(cfg);

  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config: line " + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!binder.set.count(section))
        throw ConfigError("config: line " + std::to_string(lineno) + ": unknown section [" +
                          section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    auto sec_it = binder.set.find(section);
    auto key_it = sec_it->second.find(key);
    if (key_it == sec_it->second.end())
      throw ConfigError("config: line " + std::to_string(lineno) + ": unknown key '" + key +
                        "' in section [" + section + "]");
    key_it->second(val);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return from_string(buf.str());
}

std::string ExperimentConfig::to_string() const {
  std::ostringstream os;
  os << "method = " << method_name(method) << "\n\n";
  os << "[env]\n";
  os << "grid_side = " << env.grid_side << "\n";
  os << "min_agents = " << env.min_agents << "\n";
  os << "max_agents = " << env.max_agents << "\n";
  os << "p_initial_fire = " << fmt(env.p_initial_fire) << "\n";
  os << "p_ignite = " << fmt(env.p_ignite) << "\n";
  os << "burn_damage = " << fmt(env.burn_damage) << "\n";
  os << "extinguish_firefighter = " << fmt(env.ext_firefighter) << "\n";
  os << "extinguish_builder = " << fmt(env.ext_builder) << "\n";
  os << "extinguish_generalist = " << fmt(env.ext_generalist) << "\n";
  os << "repair_builder = " << fmt(env.rep_builder) << "\n";
  os << "repair_firefighter = " << fmt(env.rep_firefighter) << "\n";
  os << "repair_generalist = " << fmt(env.rep_generalist) << "\n";
  os << "assist_multiplier = " << fmt(env.assist_multiplier) << "\n";
  os << "generalist_speed = " << env.generalist_speed << "\n";
  os << "step_cap = " << env.step_cap << "\n";
  os << "init_health_min = " << fmt(env.init_health_min) << "\n";
  os << "init_health_max = " << fmt(env.init_health_max) << "\n";
  os << "reward_health_gain = " << fmt(env.w_health_gain) << "\n";
  os << "reward_extinguish = " << fmt(env.w_extinguish) << "\n";
  os << "reward_complete = " << fmt(env.w_complete) << "\n";
  os << "reward_health_loss = " << fmt(env.w_health_loss) << "\n";
  os << "reward_destroyed = " << fmt(env.w_destroyed) << "\n";
  os << "reward_all_complete = " << fmt(env.w_all_complete) << "\n";
  os << "generalist_requires_act = " << (env.generalist_requires_act ? "true" : "false") << "\n";
  os << "guarantee_core_types = " << (env.guarantee_core_types ? "true" : "false") << "\n\n";
  os << "[alloc]\n";
  os << "lambda_aql = " << fmt(lambda_aql) << "\n";
  os << "n_proposals = " << n_proposals << "\n";
  os << "alloc_interval = " << alloc_interval << "\n";
  os << "embed_dim = " << embed_dim << "\n";
  os << "eps_p_start = " << fmt(eps_p.start) << "\n";
  os << "eps_p_end = " << fmt(eps_p.end) << "\n";
  os << "eps_p_anneal_steps = " << eps_p.horizon << "\n";
  os << "eps_r_start = " << fmt(eps_r.start) << "\n";
  os << "eps_r_end = " << fmt(eps_r.end) << "\n";
  os << "eps_r_anneal_steps = " << eps_r.horizon << "\n\n";
  os << "[exec]\n";
  os << "hidden_dim = " << hidden_dim << "\n";
  os << "mixer_hidden = " << mixer_hidden << "\n";
  os << "attn_heads = " << attn_heads << "\n";
  os << "eps_start = " << fmt(eps.start) << "\n";
  os << "eps_end = " << fmt(eps.end) << "\n";
  os << "eps_anneal_steps = " << eps.horizon << "\n\n";
  os << "[train]\n";
  os << "lr = " << fmt(lr) << "\n";
  os << "rmsprop_alpha = " << fmt(rmsprop_alpha) << "\n";
  os << "rmsprop_eps = " << fmt(rmsprop_eps) << "\n";
  os << "target_update_interval = " << target_update_interval << "\n";
  os << "batch_size = " << batch_size << "\n";
  os << "grad_clip = " << fmt(grad_clip) << "\n";
  os << "buffer_capacity = " << buffer_capacity << "\n";
  os << "gamma = " << fmt(gamma) << "\n";
  os << "total_env_steps = " << total_env_steps << "\n";
  os << "train_steps_per_episode = " << train_steps_per_episode << "\n";
  os << "num_envs = " << num_envs << "\n";
  os << "num_threads = " << num_threads << "\n";
  os << "eval_interval = " << eval_interval << "\n";
  os << "eval_episodes = " << eval_episodes << "\n";
  os << "checkpoint_interval = " << checkpoint_interval << "\n";
  os << "popart_decay = " << fmt(popart_decay) << "\n";
  os << "popart_floor = " << fmt(popart_floor) << "\n";
  os << "weight_init = " << weight_init << "\n";
  return os.str();
}

}  // namespace alma
