#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctd4/agent.hpp"

namespace ctd4 {

struct RunConfig {
  std::string env_id = "pendulum_swingup";
  AgentConfig agent;
  std::size_t total_steps = 50'000;
  std::size_t eval_interval = 10'000;
  std::size_t eval_episodes = 10;
  std::vector<std::uint64_t> seeds = {0};
  std::filesystem::path out_dir = "runs";
  std::size_t replay_capacity = 100'000;
  // Evaluation episodes draw from this seed instead of the run seed when set.
  std::optional<std::uint64_t> eval_seed;
  // When false the wall_clock_seconds column is written as 0 so metrics
  // files of repeated runs compare byte for byte.
  bool record_wall_clock = true;

  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Flat object: every RunConfig and AgentConfig field under its own name.
nlohmann::json to_json(const RunConfig& config);
// Starts from `base` and overrides whatever keys are present. Unknown keys
// are an error.
RunConfig merge_json(RunConfig base, const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

std::vector<std::uint64_t> parse_seed_list(const std::string& csv);

}  // namespace ctd4
