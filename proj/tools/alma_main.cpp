#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "alma/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"alma: hierarchical multi-agent RL lab for the SaveTheCity task"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "runs/default";
  std::string checkpoint;
  std::string trace_out = "trace.jsonl";
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;
  int episodes = 32;
  std::string method;

  auto* train = app.add_subcommand("train", "Train a policy");
  train->add_option("--config", config_path, "Experiment config file")->required();
  train->add_option("--seed", seed, "Run seed");
  train->add_option("--out", out_dir, "Output directory (metrics, checkpoints)");
  train->add_option("--method", method, "Override the config's method");
  train->add_option("--checkpoint", checkpoint, "Resume from this checkpoint");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint greedily");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate")->required();
  eval->add_option("--config", config_path, "Experiment config file")->required();
  eval->add_option("--seed", seeds, "Evaluation seed (repeatable)")->expected(-1);
  eval->add_option("--episodes", episodes, "Episodes per seed");
  eval->add_option("--out", out_dir, "Report output directory");

  auto* trace = app.add_subcommand("trace", "Write a per-step trace of one greedy episode");
  trace->add_option("--checkpoint", checkpoint, "Checkpoint to trace")->required();
  trace->add_option("--config", config_path, "Experiment config file")->required();
  trace->add_option("--seed", seed, "Episode seed");
  trace->add_option("--out", trace_out, "Trace file (JSON lines)");

  auto* validate = app.add_subcommand("validate-config", "Parse and echo a config file");
  validate->add_option("--config", config_path, "Experiment config file")->required();

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) {
    std::optional<std::string> method_opt, resume_opt;
    if (!method.empty()) method_opt = method;
    if (!checkpoint.empty()) resume_opt = checkpoint;
    return alma::cli::cmd_train(config_path, seed, out_dir, method_opt, resume_opt);
  }
  if (eval->parsed()) {
    if (seeds.empty()) seeds.push_back(0);
    return alma::cli::cmd_eval(checkpoint, config_path, seeds, episodes, out_dir);
  }
  if (trace->parsed()) return alma::cli::cmd_trace(checkpoint, config_path, seed, trace_out);
  if (validate->parsed()) return alma::cli::cmd_validate(config_path);
  return 1;
}
