#pragma once

#include <optional>
#include <string>
#include <vector>

#include "alma/config.hpp"

namespace alma::cli {

// Output root override; when set, relative --out paths are placed under it.
inline constexpr const char* kOutRootEnvVar = "ALMA_OUT_ROOT";

std::string resolve_out_dir(const std::string& out);

// Subcommand bodies. Errors are reported on stderr; nonzero exit on failure.
int cmd_train(const std::string& config_path, std::uint64_t seed, const std::string& out_dir,
              const std::optional<std::string>& method_override,
              const std::optional<std::string>& resume_checkpoint);

int cmd_eval(const std::string& checkpoint_base, const std::string& config_path,
             const std::vector<std::uint64_t>& seeds, int episodes, const std::string& out_dir);

int cmd_trace(const std::string& checkpoint_base, const std::string& config_path,
              std::uint64_t seed, const std::string& out_path);

int cmd_validate(const std::string& config_path);

// Loads config (+ optional method override) and builds networks restored from
// a checkpoint written by the trainer. Throws on version/architecture
// mismatch.
ExperimentConfig load_config(const std::string& config_path,
                             const std::optional<std::string>& method_override);

}  // namespace alma::cli
