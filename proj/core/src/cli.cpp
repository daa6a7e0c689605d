#include "alma/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "alma/eval/evaluate.hpp"
#include "alma/eval/trace.hpp"

namespace alma::cli {

namespace {

// Strips a trailing ".ckpt" so both the base path and the container file are
// accepted on the command line.
std::string checkpoint_base(const std::string& path) {
  const std::string suffix = ".ckpt";
  if (path.size() > suffix.size() &&
      path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0)
    return path.substr(0, path.size() - suffix.size());
  return path;
}

}  // namespace

std::string resolve_out_dir(const std::string& out) {
  const char* root = std::getenv(kOutRootEnvVar);
  if (!root || *root == '\0') return out;
  const std::filesystem::path p(out);
  if (p.is_absolute()) return out;
  return (std::filesystem::path(root) / p).string();
}

ExperimentConfig load_config(const std::string& config_path,
                             const std::optional<std::string>& method_override) {
  ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
  if (method_override) {
    cfg.method = parse_method(*method_override);
    cfg.validate();
  }
  return cfg;
}

int cmd_train(const std::string& config_path, std::uint64_t seed, const std::string& out_dir,
              const std::optional<std::string>& method_override,
              const std::optional<std::string>& resume_checkpoint) {
  try {
    const ExperimentConfig cfg = load_config(config_path, method_override);
    train::Trainer trainer(cfg, seed);
    trainer.set_out_dir(resolve_out_dir(out_dir));
    if (resume_checkpoint) trainer.load_checkpoint(checkpoint_base(*resume_checkpoint));
    trainer.run();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "train: " << e.what() << "\n";
    return 1;
  }
}

int cmd_eval(const std::string& checkpoint, const std::string& config_path,
             const std::vector<std::uint64_t>& seeds, int episodes, const std::string& out_dir) {
  try {
    const ExperimentConfig cfg = load_config(config_path, std::nullopt);
    train::Trainer trainer(cfg, 0);
    trainer.load_checkpoint(checkpoint_base(checkpoint), /*with_replay=*/false);
    const eval::EvalReport rep =
        eval::evaluate_policy(trainer.networks(), seeds, episodes, cfg.num_threads);

    const std::string dir = resolve_out_dir(out_dir);
    std::filesystem::create_directories(dir);
    std::ofstream(dir + "/eval_report.json", std::ios::trunc) << rep.to_json() << "\n";
    std::ofstream(dir + "/eval_report.csv", std::ios::trunc) << rep.to_csv();
    std::cout << rep.to_json() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "eval: " << e.what() << "\n";
    return 1;
  }
}

int cmd_trace(const std::string& checkpoint, const std::string& config_path, std::uint64_t seed,
              const std::string& out_path) {
  try {
    const ExperimentConfig cfg = load_config(config_path, std::nullopt);
    train::Trainer trainer(cfg, 0);
    trainer.load_checkpoint(checkpoint_base(checkpoint), /*with_replay=*/false);
    const int steps = eval::write_trace(trainer.networks(), seed, out_path);
    std::cout << "wrote " << steps << " step records to " << out_path << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "trace: " << e.what() << "\n";
    return 1;
  }
}

int cmd_validate(const std::string& config_path) {
  try {
    const ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
    std::cout << cfg.to_string();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "validate-config: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace alma::cli
