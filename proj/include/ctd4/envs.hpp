#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

namespace ctd4 {

struct StepResult {
  Eigen::VectorXd observation;
  double reward = 0.0;
  bool terminated = false;  // absorbing failure state; do not bootstrap
  bool truncated = false;   // time limit; bootstrap as usual
};

// Deterministic continuous-control task. Rewards lie in [0, 1] per step.
class Env {
 public:
  virtual ~Env() = default;

  virtual std::string_view id() const = 0;
  virtual std::size_t obs_dim() const = 0;
  virtual std::size_t action_dim() const = 0;
  virtual Eigen::VectorXd action_low() const = 0;
  virtual Eigen::VectorXd action_high() const = 0;
  virtual std::size_t max_steps() const = 0;

  virtual Eigen::VectorXd reset(std::uint64_t seed) = 0;
  // Throws std::invalid_argument on non-finite or out-of-bounds actions.
  virtual StepResult step(const Eigen::VectorXd& action) = 0;

  virtual std::unique_ptr<Env> clone() const = 0;

 protected:
  void check_action(const Eigen::VectorXd& action) const;
};

// Swing-up of a rigid rod, theta = 0 upright.
//   theta'' = (3g / 2l) sin(theta) + (3 / m l^2) u,  g = 10, m = l = 1
// Semi-implicit Euler at dt = 0.05; theta' clipped to [-8, 8]; u in [-2, 2].
// Observation (cos, sin, theta' / 8), reward (1 + cos theta) / 2, 200 steps.
// Reset: theta ~ U(-pi, pi], theta' ~ U(-1, 1).
class PendulumSwingup final : public Env {
 public:
  static constexpr double kGravity = 10.0;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;
  static constexpr double kDt = 0.05;
  static constexpr double kMaxSpeed = 8.0;
  static constexpr double kMaxTorque = 2.0;

  std::string_view id() const override { return "pendulum_swingup"; }
  std::size_t obs_dim() const override { return 3; }
  std::size_t action_dim() const override { return 1; }
  Eigen::VectorXd action_low() const override { return Eigen::VectorXd::Constant(1, -kMaxTorque); }
  Eigen::VectorXd action_high() const override { return Eigen::VectorXd::Constant(1, kMaxTorque); }
  std::size_t max_steps() const override { return 200; }

  Eigen::VectorXd reset(std::uint64_t seed) override;
  StepResult step(const Eigen::VectorXd& action) override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<PendulumSwingup>(*this); }

  void set_state(double theta, double theta_dot);
  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }
  // Rod about its pivot: I theta'^2 / 2 + m g (l / 2) cos(theta), I = m l^2 / 3.
  double mechanical_energy() const;
  Eigen::VectorXd observation() const;

 private:
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
  std::size_t t_ = 0;
};

// Cart-pole swing-up (Barto et al. dynamics, explicit Euler at dt = 0.02).
// m_cart = 1, m_pole = 0.1, half-length 0.5, g = 9.8, force 10 a, a in [-1, 1].
// Starts hanging: theta = pi + U(-0.05, 0.05), x, x', theta' ~ U(-0.05, 0.05).
// Observation (x, x', cos, sin, theta'), reward (1 + cos theta) / 2,
// terminates when |x| > 2.4, 500 steps.
class CartpoleSwingup final : public Env {
 public:
  static constexpr double kGravity = 9.8;
  static constexpr double kCartMass = 1.0;
  static constexpr double kPoleMass = 0.1;
  static constexpr double kHalfLength = 0.5;
  static constexpr double kForceScale = 10.0;
  static constexpr double kDt = 0.02;
  static constexpr double kTrackLimit = 2.4;

  std::string_view id() const override { return "cartpole_swingup"; }
  std::size_t obs_dim() const override { return 5; }
  std::size_t action_dim() const override { return 1; }
  Eigen::VectorXd action_low() const override { return Eigen::VectorXd::Constant(1, -1.0); }
  Eigen::VectorXd action_high() const override { return Eigen::VectorXd::Constant(1, 1.0); }
  std::size_t max_steps() const override { return 500; }

  Eigen::VectorXd reset(std::uint64_t seed) override;
  StepResult step(const Eigen::VectorXd& action) override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<CartpoleSwingup>(*this); }

  void set_state(double x, double x_dot, double theta, double theta_dot);
  Eigen::VectorXd observation() const;

 private:
  double x_ = 0.0;
  double x_dot_ = 0.0;
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
  std::size_t t_ = 0;
};

// Observation always [0], action ignored, reward 1, 100 steps, never terminates.
class ConstProbe final : public Env {
 public:
  std::string_view id() const override { return "const_probe"; }
  std::size_t obs_dim() const override { return 1; }
  std::size_t action_dim() const override { return 1; }
  Eigen::VectorXd action_low() const override { return Eigen::VectorXd::Constant(1, -1.0); }
  Eigen::VectorXd action_high() const override { return Eigen::VectorXd::Constant(1, 1.0); }
  std::size_t max_steps() const override { return 100; }

  Eigen::VectorXd reset(std::uint64_t seed) override;
  StepResult step(const Eigen::VectorXd& action) override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<ConstProbe>(*this); }

 private:
  std::size_t t_ = 0;
};

// "pendulum_swingup", "cartpole_swingup" or "const_probe".
std::unique_ptr<Env> make_env(std::string_view id);

// Maps a normalized action in [-1, 1]^d onto the environment's bounds.
Eigen::VectorXd rescale_action(const Env& env, const Eigen::VectorXd& normalized);

// Wraps an angle to (-pi, pi].
double wrap_angle(double theta);

}  // namespace ctd4
