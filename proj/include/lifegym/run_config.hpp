#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lifegym/agents.hpp"
#include "lifegym/cmaes.hpp"
#include "lifegym/environment.hpp"
#include "lifegym/rewards.hpp"

namespace lifegym {

struct OptimizerConfig {
  double sigma = 1.0;
  std::string init = "zeros";  // zeros | random (network-style init for CA agents)
  double init_value = 0.0;     // added to every coordinate of the initial mean
  CmaOptions cma;              // lambda and constant overrides; cma.seed is derived from the run seed
};

/// Everything needed to reproduce an evolution run.
struct RunConfig {
  EnvConfig env;
  AgentConfig agent;  // obs/act sizes always follow env
  std::vector<WrapperSpec> wrappers;
  OptimizerConfig optimizer;
  int steps = 256;      // episode length T
  int episodes = 1;     // episodes averaged per fitness evaluation
  int generations = 100;
  std::uint64_t seed = 0;
  std::string out;
  bool persistent_novelty = false;  // share one wrapper chain across all rollouts
  double target_fitness = 0.0;      // stop early once best-ever exceeds it (if stop_at_target)
  bool stop_at_target = false;

  /// Throws InvalidConfig.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
/// Unknown keys are rejected. Throws InvalidConfig.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Converts a YAML document to the equivalent JSON tree. Throws InvalidConfig.
nlohmann::json yaml_to_json(const std::string& text);
/// Reads a .yaml/.yml or .json run config. Throws IoError / InvalidConfig.
RunConfig load_run_config(const std::filesystem::path& path);

/// Parses "name[:weight],name[:weight],..." into default-configured wrapper specs.
std::vector<WrapperSpec> parse_wrapper_list(const std::string& text);

}  // namespace lifegym
