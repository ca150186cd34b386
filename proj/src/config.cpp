#include "ctd4/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ctd4 {

using nlohmann::json;

void RunConfig::validate() const {
  agent.validate();
  if (eval_interval == 0) throw std::invalid_argument("RunConfig: eval_interval must be positive");
  if (eval_episodes == 0) throw std::invalid_argument("RunConfig: eval_episodes must be positive");
  if (seeds.empty()) throw std::invalid_argument("RunConfig: at least one seed required");
  if (replay_capacity == 0) throw std::invalid_argument("RunConfig: replay_capacity must be positive");
}

json to_json(const RunConfig& c) {
  const AgentConfig& a = c.agent;
  json j = {
      {"env_id", c.env_id},
      {"total_steps", c.total_steps},
      {"eval_interval", c.eval_interval},
      {"eval_episodes", c.eval_episodes},
      {"seeds", c.seeds},
      {"out_dir", c.out_dir.string()},
      {"replay_capacity", c.replay_capacity},
      {"record_wall_clock", c.record_wall_clock},
      {"gamma", a.gamma},
      {"tau", a.tau},
      {"num_critics", a.num_critics},
      {"batch_size", a.batch_size},
      {"policy_delay", a.policy_delay},
      {"fusion", std::string(to_string(a.fusion))},
      {"fusion_variance", std::string(to_string(a.fusion_variance))},
      {"actor_lr", a.actor_lr},
      {"critic_lr", a.critic_lr},
      {"explore_noise_init", a.explore_noise_init},
      {"explore_noise_min", a.explore_noise_min},
      {"noise_decay", a.noise_decay},
      {"target_noise_init", a.target_noise_init},
      {"target_noise_clip", a.target_noise_clip},
      {"warmup_steps", a.warmup_steps},
      {"sigma_terminal", a.sigma_terminal},
      {"hidden_sizes", a.hidden_sizes},
  };
  j["eval_seed"] = c.eval_seed ? json(*c.eval_seed) : json(nullptr);
  return j;
}

RunConfig merge_json(RunConfig c, const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  AgentConfig& a = c.agent;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "env_id") c.env_id = value.get<std::string>();
      else if (key == "total_steps") c.total_steps = value.get<std::size_t>();
      else if (key == "eval_interval") c.eval_interval = value.get<std::size_t>();
      else if (key == "eval_episodes") c.eval_episodes = value.get<std::size_t>();
      else if (key == "seeds") c.seeds = value.get<std::vector<std::uint64_t>>();
      else if (key == "out_dir") c.out_dir = value.get<std::string>();
      else if (key == "replay_capacity") c.replay_capacity = value.get<std::size_t>();
      else if (key == "record_wall_clock") c.record_wall_clock = value.get<bool>();
      else if (key == "eval_seed") {
        c.eval_seed = value.is_null() ? std::nullopt
                                      : std::optional<std::uint64_t>(value.get<std::uint64_t>());
      }
      else if (key == "gamma") a.gamma = value.get<double>();
      else if (key == "tau") a.tau = value.get<double>();
      else if (key == "num_critics") a.num_critics = value.get<std::size_t>();
      else if (key == "batch_size") a.batch_size = value.get<std::size_t>();
      else if (key == "policy_delay") a.policy_delay = value.get<std::size_t>();
      else if (key == "fusion") a.fusion = parse_fusion_strategy(value.get<std::string>());
      else if (key == "fusion_variance") a.fusion_variance = parse_fusion_variance(value.get<std::string>());
      else if (key == "actor_lr") a.actor_lr = value.get<double>();
      else if (key == "critic_lr") a.critic_lr = value.get<double>();
      else if (key == "explore_noise_init") a.explore_noise_init = value.get<double>();
      else if (key == "explore_noise_min") a.explore_noise_min = value.get<double>();
      else if (key == "noise_decay") a.noise_decay = value.get<double>();
      else if (key == "target_noise_init") a.target_noise_init = value.get<double>();
      else if (key == "target_noise_clip") a.target_noise_clip = value.get<double>();
      else if (key == "warmup_steps") a.warmup_steps = value.get<std::size_t>();
      else if (key == "sigma_terminal") a.sigma_terminal = value.get<double>();
      else if (key == "hidden_sizes") a.hidden_sizes = value.get<std::vector<std::size_t>>();
      else throw std::invalid_argument("unknown key");
    } catch (const json::exception& e) {
      throw std::invalid_argument("config key '" + key + "': " + e.what());
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config key '" + key + "': " + e.what());
    }
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return merge_json(std::move(base), j);
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write config " + path.string());
  out << to_json(config).dump(2) << '\n';
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const auto v = std::stoull(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad seed '" + item + "'");
    seeds.push_back(v);
  }
  if (seeds.empty()) throw std::invalid_argument("empty seed list");
  return seeds;
}

}  // namespace ctd4
