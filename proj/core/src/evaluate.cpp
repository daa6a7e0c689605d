#include "alma/eval/evaluate.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"

namespace alma::eval {

EvalReport evaluate_policy(const train::Networks& nets, const std::vector<std::uint64_t>& seeds,
                           int episodes_per_seed, int num_threads) {
  if (seeds.empty()) throw UsageError("evaluate_policy: at least one seed required");
  if (episodes_per_seed < 1) throw UsageError("evaluate_policy: episodes must be >= 1");

  EvalReport rep;
  rep.seeds = seeds;
  rep.episodes_per_seed = episodes_per_seed;

  double ret_sum = 0, len_sum = 0;
  for (std::uint64_t seed : seeds) {
    const train::EvalStats st =
        train::run_greedy_episodes(nets, seed, episodes_per_seed, num_threads);
    rep.success_per_seed.push_back(st.success_rate);
    ret_sum += st.mean_return;
    len_sum += st.mean_length;
  }
  const auto n = static_cast<double>(seeds.size());
  for (double s : rep.success_per_seed) rep.success_mean += s;
  rep.success_mean /= n;
  double var = 0;
  for (double s : rep.success_per_seed) var += (s - rep.success_mean) * (s - rep.success_mean);
  rep.success_std = std::sqrt(var / n);
  rep.mean_return = ret_sum / n;
  rep.mean_length = len_sum / n;
  return rep;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["seeds"] = seeds;
  j["episodes_per_seed"] = episodes_per_seed;
  j["success_per_seed"] = success_per_seed;
  j["success_mean"] = success_mean;
  j["success_std"] = success_std;
  j["mean_return"] = mean_return;
  j["mean_length"] = mean_length;
  return j.dump(2);
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "seed,episodes,success_rate\n";
  for (std::size_t i = 0; i < seeds.size(); ++i)
    os << seeds[i] << ',' << episodes_per_seed << ',' << success_per_seed[i] << "\n";
  os << "mean," << episodes_per_seed << ',' << success_mean << "\n";
  os << "std," << episodes_per_seed << ',' << success_std << "\n";
  return os.str();
}

}  // namespace alma::eval
