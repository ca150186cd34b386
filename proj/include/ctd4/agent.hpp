#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "ctd4/gauss.hpp"
#include "ctd4/nn.hpp"
#include "ctd4/replay.hpp"
#include "ctd4/rng.hpp"

namespace ctd4 {

// Defaults other than num_critics follow the TD3 lineage rather than
// published CTD4 values.
struct AgentConfig {
  double gamma = 0.99;
  double tau = 0.005;
  std::size_t num_critics = 3;
  std::size_t batch_size = 256;
  std::size_t policy_delay = 2;
  FusionStrategy fusion = FusionStrategy::Kalman;
  FusionVariance fusion_variance = FusionVariance::Paper;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double explore_noise_init = 0.1;
  double explore_noise_min = 0.01;
  double noise_decay = 0.9999;
  double target_noise_init = 0.2;
  double target_noise_clip = 0.5;
  std::size_t warmup_steps = 1000;
  double sigma_terminal = 1e-2;
  std::vector<std::size_t> hidden_sizes = {256, 256};

  void validate() const;
  friend bool operator==(const AgentConfig&, const AgentConfig&) = default;
};

// max(floor, init * decay^t)
double decayed_noise(double init, double floor, double decay, std::uint64_t t);

struct TrainStepResult {
  double critic_loss = 0.0;
  std::optional<double> actor_loss;
};

class Ctd4Agent {
 public:
  // Actor first, then critics 1..N, all drawn from init_rng. Targets start
  // as copies of the live networks.
  Ctd4Agent(AgentConfig config, std::size_t obs_dim, std::size_t action_dim, Rng& init_rng);

  const AgentConfig& config() const { return config_; }
  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t action_dim() const { return action_dim_; }

  // explore = true: uniform random during warmup, otherwise actor output plus
  // Gaussian noise, clipped to [-1, 1]; either way the noise schedule then
  // advances one step. explore = false is the deterministic policy and
  // touches neither rng nor schedule.
  Eigen::VectorXd select_action(const Eigen::VectorXd& state, bool explore, Rng& rng);
  Eigen::VectorXd act(const Eigen::VectorXd& state) const;

  // Distributional Bellman targets from the target networks, with clipped
  // smoothing noise on the target action.
  std::vector<Gaussian1D> compute_targets(const Batch& batch, Rng& noise_rng) const;
  // Mean over the batch of the summed KL of every critic to the shared
  // target. One Adam step per critic.
  double critic_update(const Batch& batch, std::span<const Gaussian1D> targets);
  // Returns -(1/M) sum mu_k(s, pi(s)); one Adam step on the actor only.
  double actor_update(const Batch& batch);
  // Throws std::runtime_error on an empty buffer or non-finite parameters.
  TrainStepResult train_step(const ReplayBuffer& replay, Rng& sample_rng, Rng& noise_rng);

  struct ActorGradient {
    double objective;
    MlpParams grads;
  };
  // Actor loss and its gradient with respect to the actor parameters.
  ActorGradient actor_objective(const Batch& batch) const;

  // Each live critic's prediction at (state, action), and their fusion.
  std::vector<Gaussian1D> critic_values(const Eigen::VectorXd& state,
                                        const Eigen::VectorXd& action) const;
  Gaussian1D fused_value(const Eigen::VectorXd& state, const Eigen::VectorXd& action) const;

  const MlpParams& actor() const { return actor_; }
  const MlpParams& actor_target() const { return actor_target_; }
  const MlpParams& critic(std::size_t n) const { return critics_.at(n); }
  const MlpParams& critic_target(std::size_t n) const { return critic_targets_.at(n); }
  const AdamState& actor_adam() const { return actor_adam_; }
  const AdamState& critic_adam(std::size_t n) const { return critic_adam_.at(n); }
  MlpParams& mutable_actor() { return actor_; }
  MlpParams& mutable_critic(std::size_t n) { return critics_.at(n); }
  MlpParams& mutable_critic_target(std::size_t n) { return critic_targets_.at(n); }

  std::uint64_t explore_steps() const { return explore_steps_; }
  std::uint64_t train_steps() const { return train_steps_; }
  double explore_noise_std() const { return explore_std_; }
  double target_noise_std() const { return target_std_; }

  bool all_finite() const;
  // Parameters, optimizer states, counters and noise stds, bitwise.
  bool bit_equal(const Ctd4Agent& other) const;

  void save_checkpoint(const std::filesystem::path& path) const;
  // Throws std::runtime_error on bad magic or version, truncation, or a
  // checkpoint whose networks do not match (config, obs_dim, action_dim).
  static Ctd4Agent load_checkpoint(const std::filesystem::path& path, const AgentConfig& config,
                                   std::size_t obs_dim, std::size_t action_dim);

 private:
  Ctd4Agent(AgentConfig config, std::size_t obs_dim, std::size_t action_dim);

  Eigen::MatrixXd critic_input(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const;
  void advance_noise();

  AgentConfig config_;
  std::size_t obs_dim_;
  std::size_t action_dim_;
  MlpSpec actor_spec_;
  MlpSpec critic_spec_;

  MlpParams actor_;
  MlpParams actor_target_;
  AdamState actor_adam_;
  std::vector<MlpParams> critics_;
  std::vector<MlpParams> critic_targets_;
  std::vector<AdamState> critic_adam_;

  std::uint64_t explore_steps_ = 0;
  std::uint64_t train_steps_ = 0;
  double explore_std_;
  double target_std_;
};

}  // namespace ctd4
