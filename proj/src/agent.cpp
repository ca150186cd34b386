#include "ctd4/agent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "ctd4/binary_io.hpp"

namespace ctd4 {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

Gaussian1D gaussian_at(const std::vector<Eigen::MatrixXd>& heads, Eigen::Index i) {
  return {heads[0](0, i), heads[1](0, i)};
}

}  // namespace

void AgentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("AgentConfig: " + msg); };
  if (!(gamma > 0.0 && gamma < 1.0)) fail("gamma must lie in (0, 1)");
  if (!(tau >= 0.0 && tau <= 1.0)) fail("tau must lie in [0, 1]");
  if (num_critics < 1) fail("num_critics must be at least 1");
  if (batch_size < 1) fail("batch_size must be positive");
  if (policy_delay < 1) fail("policy_delay must be positive");
  if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) fail("learning rates must be positive");
  if (!(explore_noise_init >= 0.0) || !(explore_noise_min >= 0.0)) fail("noise stds must be >= 0");
  if (!(target_noise_init >= 0.0) || !(target_noise_clip >= 0.0)) fail("target noise must be >= 0");
  if (!(noise_decay > 0.0 && noise_decay <= 1.0)) fail("noise_decay must lie in (0, 1]");
  if (!(sigma_terminal > 0.0)) fail("sigma_terminal must be positive");
  if (hidden_sizes.empty()) fail("hidden_sizes must not be empty");
}

double decayed_noise(double init, double floor, double decay, std::uint64_t t) {
  return std::max(floor, init * std::pow(decay, static_cast<double>(t)));
}

Ctd4Agent::Ctd4Agent(AgentConfig config, std::size_t obs_dim, std::size_t action_dim)
    : config_(std::move(config)),
      obs_dim_(obs_dim),
      action_dim_(action_dim),
      actor_spec_(MlpSpec::actor(obs_dim, action_dim, config_.hidden_sizes)),
      critic_spec_(MlpSpec::critic(obs_dim + action_dim, config_.hidden_sizes)) {
  config_.validate();
  actor_spec_.validate();
  critic_spec_.validate();
  explore_std_ = decayed_noise(config_.explore_noise_init, config_.explore_noise_min,
                               config_.noise_decay, 0);
  target_std_ = decayed_noise(config_.target_noise_init, config_.explore_noise_min,
                              config_.noise_decay, 0);
}

Ctd4Agent::Ctd4Agent(AgentConfig config, std::size_t obs_dim, std::size_t action_dim,
                     Rng& init_rng)
    : Ctd4Agent(std::move(config), obs_dim, action_dim) {
  actor_ = init_mlp(actor_spec_, init_rng);
  actor_target_ = actor_;
  actor_adam_ = AdamState(actor_spec_);
  for (std::size_t n = 0; n < config_.num_critics; ++n) {
    critics_.push_back(init_mlp(critic_spec_, init_rng));
    critic_targets_.push_back(critics_.back());
    critic_adam_.emplace_back(critic_spec_);
  }
}

Eigen::MatrixXd Ctd4Agent::critic_input(const Eigen::MatrixXd& states,
                                        const Eigen::MatrixXd& actions) const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(obs_dim_ + action_dim_), states.cols());
  x.topRows(static_cast<Eigen::Index>(obs_dim_)) = states;
  x.bottomRows(static_cast<Eigen::Index>(action_dim_)) = actions;
  return x;
}

void Ctd4Agent::advance_noise() {
  ++explore_steps_;
  explore_std_ = decayed_noise(config_.explore_noise_init, config_.explore_noise_min,
                               config_.noise_decay, explore_steps_);
  target_std_ = decayed_noise(config_.target_noise_init, config_.explore_noise_min,
                              config_.noise_decay, explore_steps_);
}

Eigen::VectorXd Ctd4Agent::act(const Eigen::VectorXd& state) const {
  if (static_cast<std::size_t>(state.size()) != obs_dim_) {
    throw std::invalid_argument("act: state dimension mismatch");
  }
  if (!state.allFinite()) throw std::invalid_argument("act: non-finite state");
  return predict(actor_, state)[0].col(0);
}

Eigen::VectorXd Ctd4Agent::select_action(const Eigen::VectorXd& state, bool explore, Rng& rng) {
  if (!explore) return act(state);
  Eigen::VectorXd action;
  if (explore_steps_ < config_.warmup_steps) {
    if (static_cast<std::size_t>(state.size()) != obs_dim_ || !state.allFinite()) {
      throw std::invalid_argument("select_action: bad state");
    }
    std::uniform_real_distribution<double> uniform(-1.0, 1.0);
    action.resize(static_cast<Eigen::Index>(action_dim_));
    for (Eigen::Index i = 0; i < action.size(); ++i) action[i] = uniform(rng);
  } else {
    action = act(state);
    if (explore_std_ > 0.0) {
      std::normal_distribution<double> noise(0.0, explore_std_);
      for (Eigen::Index i = 0; i < action.size(); ++i) action[i] += noise(rng);
    }
    action = action.cwiseMax(-1.0).cwiseMin(1.0);
  }
  advance_noise();
  return action;
}

std::vector<Gaussian1D> Ctd4Agent::compute_targets(const Batch& batch, Rng& noise_rng) const {
  const auto m = static_cast<Eigen::Index>(batch.size());
  if (batch.next_states.rows() != static_cast<Eigen::Index>(obs_dim_) ||
      batch.next_states.cols() != m || batch.terminated.size() != batch.size()) {
    throw std::invalid_argument("compute_targets: batch does not match agent");
  }

  Eigen::MatrixXd next_actions = predict(actor_target_, batch.next_states)[0];
  if (target_std_ > 0.0) {
    std::normal_distribution<double> noise(0.0, target_std_);
    const double clip = config_.target_noise_clip;
    for (Eigen::Index i = 0; i < next_actions.size(); ++i) {
      const double eps = std::clamp(noise(noise_rng), -clip, clip);
      next_actions.data()[i] = std::clamp(next_actions.data()[i] + eps, -1.0, 1.0);
    }
  }
  const Eigen::MatrixXd input = critic_input(batch.next_states, next_actions);

  std::vector<std::vector<Eigen::MatrixXd>> outputs;
  outputs.reserve(critic_targets_.size());
  for (const auto& critic : critic_targets_) outputs.push_back(predict(critic, input));

  std::vector<Gaussian1D> targets;
  targets.reserve(batch.size());
  std::vector<Gaussian1D> ensemble;
  ensemble.reserve(outputs.size());
  for (Eigen::Index i = 0; i < m; ++i) {
    const double reward = batch.rewards[i];
    if (batch.terminated[static_cast<std::size_t>(i)]) {
      targets.emplace_back(reward, config_.sigma_terminal);
      continue;
    }
    ensemble.clear();
    for (const auto& heads : outputs) ensemble.push_back(gaussian_at(heads, i));
    const Gaussian1D fused = fuse_ensemble(ensemble, config_.fusion, config_.fusion_variance);
    targets.push_back(affine(fused, config_.gamma, reward));
  }
  return targets;
}

double Ctd4Agent::critic_update(const Batch& batch, std::span<const Gaussian1D> targets) {
  const auto m = static_cast<Eigen::Index>(batch.size());
  if (targets.size() != batch.size()) {
    throw std::invalid_argument("critic_update: " + std::to_string(targets.size()) +
                                " targets for a batch of " + std::to_string(batch.size()));
  }
  const Eigen::MatrixXd input = critic_input(batch.states, batch.actions);
  const double inv_m = 1.0 / static_cast<double>(m);
  const AdamOptions opts{config_.critic_lr};

  double total = 0.0;
  std::vector<Eigen::MatrixXd> upstream{Eigen::MatrixXd(1, m), Eigen::MatrixXd(1, m)};
  for (std::size_t n = 0; n < critics_.size(); ++n) {
    const ForwardPass pass = forward(critics_[n], input);
    for (Eigen::Index i = 0; i < m; ++i) {
      const Gaussian1D current = gaussian_at(pass.heads, i);
      const Gaussian1D& target = targets[static_cast<std::size_t>(i)];
      total += kl(current, target);
      const GaussianGrad g = kl_grad(current, target);
      upstream[0](0, i) = g.dmean * inv_m;
      upstream[1](0, i) = g.dstd * inv_m;
    }
    const BackwardPass grads = backward(critics_[n], pass.cache, upstream);
    adam_step(critics_[n], grads.param_grads, critic_adam_[n], opts);
  }
  return total * inv_m;
}

Ctd4Agent::ActorGradient Ctd4Agent::actor_objective(const Batch& batch) const {
  const auto m = static_cast<Eigen::Index>(batch.size());
  if (batch.states.rows() != static_cast<Eigen::Index>(obs_dim_)) {
    throw std::invalid_argument("actor_objective: batch does not match agent");
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  const ForwardPass actor_pass = forward(actor_, batch.states);
  const Eigen::MatrixXd input = critic_input(batch.states, actor_pass.heads[0]);

  std::vector<ForwardPass> critic_passes;
  critic_passes.reserve(critics_.size());
  for (const auto& critic : critics_) critic_passes.push_back(forward(critic, input));

  const std::size_t n_critics = critics_.size();
  std::vector<std::vector<Eigen::MatrixXd>> upstream(
      n_critics, {Eigen::MatrixXd(1, m), Eigen::MatrixXd(1, m)});
  double objective = 0.0;
  std::vector<Gaussian1D> ensemble;
  ensemble.reserve(n_critics);
  for (Eigen::Index i = 0; i < m; ++i) {
    ensemble.clear();
    for (const auto& pass : critic_passes) ensemble.push_back(gaussian_at(pass.heads, i));
    objective -= fuse_ensemble(ensemble, config_.fusion, config_.fusion_variance).mean();
    const auto grads = fuse_ensemble_grad(ensemble, config_.fusion, config_.fusion_variance);
    for (std::size_t n = 0; n < n_critics; ++n) {
      upstream[n][0](0, i) = -grads[n].dmean * inv_m;
      upstream[n][1](0, i) = -grads[n].dstd * inv_m;
    }
  }

  Eigen::MatrixXd d_action = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(action_dim_), m);
  for (std::size_t n = 0; n < n_critics; ++n) {
    const BackwardPass bw = backward(critics_[n], critic_passes[n].cache, upstream[n], false);
    d_action += bw.input_grad.bottomRows(static_cast<Eigen::Index>(action_dim_));
  }
  BackwardPass actor_bw = backward(actor_, actor_pass.cache, {d_action});
  return {objective * inv_m, std::move(actor_bw.param_grads)};
}

double Ctd4Agent::actor_update(const Batch& batch) {
  ActorGradient g = actor_objective(batch);
  adam_step(actor_, g.grads, actor_adam_, AdamOptions{config_.actor_lr});
  return g.objective;
}

TrainStepResult Ctd4Agent::train_step(const ReplayBuffer& replay, Rng& sample_rng, Rng& noise_rng) {
  if (replay.size() == 0) throw std::runtime_error("train_step: replay buffer is empty");
  const Batch batch = replay.sample(config_.batch_size, sample_rng);
  const std::vector<Gaussian1D> targets = compute_targets(batch, noise_rng);

  TrainStepResult result;
  result.critic_loss = critic_update(batch, targets);
  ++train_steps_;
  if (train_steps_ % config_.policy_delay == 0) {
    result.actor_loss = actor_update(batch);
    polyak(actor_target_, actor_, config_.tau);
    for (std::size_t n = 0; n < critics_.size(); ++n) {
      polyak(critic_targets_[n], critics_[n], config_.tau);
    }
  }
  if (!all_finite() || !std::isfinite(result.critic_loss)) {
    throw std::runtime_error("train_step " + std::to_string(train_steps_) +
                             ": non-finite parameters or loss (critic loss " +
                             std::to_string(result.critic_loss) + ")");
  }
  return result;
}

std::vector<Gaussian1D> Ctd4Agent::critic_values(const Eigen::VectorXd& state,
                                                 const Eigen::VectorXd& action) const {
  const Eigen::MatrixXd input = critic_input(state, action);
  std::vector<Gaussian1D> values;
  values.reserve(critics_.size());
  for (const auto& critic : critics_) values.push_back(gaussian_at(predict(critic, input), 0));
  return values;
}

Gaussian1D Ctd4Agent::fused_value(const Eigen::VectorXd& state, const Eigen::VectorXd& action) const {
  const auto values = critic_values(state, action);
  return fuse_ensemble(values, config_.fusion, config_.fusion_variance);
}

bool Ctd4Agent::all_finite() const {
  auto ok = [](const MlpParams& p) { return p.all_finite(); };
  return ok(actor_) && ok(actor_target_) && std::all_of(critics_.begin(), critics_.end(), ok) &&
         std::all_of(critic_targets_.begin(), critic_targets_.end(), ok);
}

bool Ctd4Agent::bit_equal(const Ctd4Agent& other) const {
  auto same_adam = [](const AdamState& a, const AdamState& b) {
    return a.t == b.t && a.m.bit_equal(b.m) && a.v.bit_equal(b.v);
  };
  if (critics_.size() != other.critics_.size()) return false;
  if (!actor_.bit_equal(other.actor_) || !actor_target_.bit_equal(other.actor_target_) ||
      !same_adam(actor_adam_, other.actor_adam_)) {
    return false;
  }
  for (std::size_t n = 0; n < critics_.size(); ++n) {
    if (!critics_[n].bit_equal(other.critics_[n]) ||
        !critic_targets_[n].bit_equal(other.critic_targets_[n]) ||
        !same_adam(critic_adam_[n], other.critic_adam_[n])) {
      return false;
    }
  }
  return explore_steps_ == other.explore_steps_ && train_steps_ == other.train_steps_ &&
         std::bit_cast<std::uint64_t>(explore_std_) ==
             std::bit_cast<std::uint64_t>(other.explore_std_) &&
         std::bit_cast<std::uint64_t>(target_std_) == std::bit_cast<std::uint64_t>(other.target_std_);
}

// Layout: "CTD4", u32 version, u64 network count (actor + N critics); per
// network its live params, target params and Adam state (u64 t, m, v); then
// u64 explore steps, u64 train steps, f64 explore std, f64 target std.
void Ctd4Agent::save_checkpoint(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  binary::write_magic(out);
  binary::write_u32(out, kCheckpointVersion);
  binary::write_u64(out, 1 + critics_.size());
  write_params(out, actor_);
  write_params(out, actor_target_);
  write_adam(out, actor_adam_);
  for (std::size_t n = 0; n < critics_.size(); ++n) {
    write_params(out, critics_[n]);
    write_params(out, critic_targets_[n]);
    write_adam(out, critic_adam_[n]);
  }
  binary::write_u64(out, explore_steps_);
  binary::write_u64(out, train_steps_);
  binary::write_f64(out, explore_std_);
  binary::write_f64(out, target_std_);
  out.flush();
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

Ctd4Agent Ctd4Agent::load_checkpoint(const std::filesystem::path& path, const AgentConfig& config,
                                     std::size_t obs_dim, std::size_t action_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  try {
    binary::expect_magic(in, "checkpoint");
    const std::uint32_t version = binary::read_u32(in);
    if (version != kCheckpointVersion) {
      throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint64_t networks = binary::read_u64(in);
    if (networks != 1 + config.num_critics) {
      throw std::runtime_error("spec mismatch: checkpoint holds " + std::to_string(networks - 1) +
                               " critics, config expects " + std::to_string(config.num_critics));
    }
    Ctd4Agent agent(config, obs_dim, action_dim);
    agent.actor_ = read_params(in, agent.actor_spec_);
    agent.actor_target_ = read_params(in, agent.actor_spec_);
    agent.actor_adam_ = read_adam(in, agent.actor_spec_);
    for (std::size_t n = 0; n < config.num_critics; ++n) {
      agent.critics_.push_back(read_params(in, agent.critic_spec_));
      agent.critic_targets_.push_back(read_params(in, agent.critic_spec_));
      agent.critic_adam_.push_back(read_adam(in, agent.critic_spec_));
    }
    agent.explore_steps_ = binary::read_u64(in);
    agent.train_steps_ = binary::read_u64(in);
    agent.explore_std_ = binary::read_f64(in);
    agent.target_std_ = binary::read_f64(in);
    if (in.peek() != std::char_traits<char>::eof()) {
      throw std::runtime_error("trailing bytes after checkpoint trailer");
    }
    return agent;
  } catch (const std::runtime_error& e) {
    throw std::runtime_error("load_checkpoint(" + path.string() + "): " + e.what());
  }
}

}  // namespace ctd4
