#include "ctd4/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "ctd4/rng.hpp"

namespace ctd4 {

double wrap_angle(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double wrapped = std::fmod(theta + std::numbers::pi, two_pi);
  if (wrapped < 0.0) wrapped += two_pi;
  wrapped -= std::numbers::pi;
  // fmod maps +pi to -pi; keep the interval half-open on the left.
  return wrapped == -std::numbers::pi ? std::numbers::pi : wrapped;
}

void Env::check_action(const Eigen::VectorXd& action) const {
  if (static_cast<std::size_t>(action.size()) != action_dim()) {
    throw std::invalid_argument(std::string(id()) + ": action has " +
                                std::to_string(action.size()) + " components, expected " +
                                std::to_string(action_dim()));
  }
  if (!action.allFinite()) throw std::invalid_argument(std::string(id()) + ": non-finite action");
  const Eigen::VectorXd lo = action_low();
  const Eigen::VectorXd hi = action_high();
  if ((action.array() < lo.array()).any() || (action.array() > hi.array()).any()) {
    throw std::invalid_argument(std::string(id()) + ": action out of bounds");
  }
}

// Pendulum ------------------------------------------------------------------

Eigen::VectorXd PendulumSwingup::reset(std::uint64_t seed) {
  Rng rng = make_stream(seed, "pendulum_reset");
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> speed(-1.0, 1.0);
  // U[-pi, pi) negated is U(-pi, pi].
  theta_ = -angle(rng);
  theta_dot_ = speed(rng);
  t_ = 0;
  return observation();
}

StepResult PendulumSwingup::step(const Eigen::VectorXd& action) {
  check_action(action);
  const double u = action[0];
  const double accel = 3.0 * kGravity / (2.0 * kLength) * std::sin(theta_) +
                       3.0 / (kMass * kLength * kLength) * u;
  theta_dot_ = std::clamp(theta_dot_ + accel * kDt, -kMaxSpeed, kMaxSpeed);
  theta_ = wrap_angle(theta_ + theta_dot_ * kDt);
  ++t_;
  return {observation(), 0.5 * (1.0 + std::cos(theta_)), false, t_ >= max_steps()};
}

void PendulumSwingup::set_state(double theta, double theta_dot) {
  theta_ = wrap_angle(theta);
  theta_dot_ = theta_dot;
}

double PendulumSwingup::mechanical_energy() const {
  const double inertia = kMass * kLength * kLength / 3.0;
  return 0.5 * inertia * theta_dot_ * theta_dot_ +
         kMass * kGravity * 0.5 * kLength * std::cos(theta_);
}

Eigen::VectorXd PendulumSwingup::observation() const {
  return Eigen::Vector3d(std::cos(theta_), std::sin(theta_), theta_dot_ / kMaxSpeed);
}

// Cart-pole -----------------------------------------------------------------

Eigen::VectorXd CartpoleSwingup::reset(std::uint64_t seed) {
  Rng rng = make_stream(seed, "cartpole_reset");
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  x_ = jitter(rng);
  x_dot_ = jitter(rng);
  theta_ = wrap_angle(std::numbers::pi + jitter(rng));
  theta_dot_ = jitter(rng);
  t_ = 0;
  return observation();
}

StepResult CartpoleSwingup::step(const Eigen::VectorXd& action) {
  check_action(action);
  const double force = kForceScale * action[0];
  const double total_mass = kCartMass + kPoleMass;
  const double pole_ml = kPoleMass * kHalfLength;
  const double cos_t = std::cos(theta_);
  const double sin_t = std::sin(theta_);

  const double temp = (force + pole_ml * theta_dot_ * theta_dot_ * sin_t) / total_mass;
  const double theta_acc = (kGravity * sin_t - cos_t * temp) /
                           (kHalfLength * (4.0 / 3.0 - kPoleMass * cos_t * cos_t / total_mass));
  const double x_acc = temp - pole_ml * theta_acc * cos_t / total_mass;

  x_ += kDt * x_dot_;
  x_dot_ += kDt * x_acc;
  theta_ = wrap_angle(theta_ + kDt * theta_dot_);
  theta_dot_ += kDt * theta_acc;
  ++t_;

  const bool terminated = std::abs(x_) > kTrackLimit;
  return {observation(), 0.5 * (1.0 + std::cos(theta_)), terminated,
          !terminated && t_ >= max_steps()};
}

void CartpoleSwingup::set_state(double x, double x_dot, double theta, double theta_dot) {
  x_ = x;
  x_dot_ = x_dot;
  theta_ = wrap_angle(theta);
  theta_dot_ = theta_dot;
}

Eigen::VectorXd CartpoleSwingup::observation() const {
  Eigen::VectorXd obs(5);
  obs << x_, x_dot_, std::cos(theta_), std::sin(theta_), theta_dot_;
  return obs;
}

// Probe ---------------------------------------------------------------------

Eigen::VectorXd ConstProbe::reset(std::uint64_t) {
  t_ = 0;
  return Eigen::VectorXd::Zero(1);
}

StepResult ConstProbe::step(const Eigen::VectorXd& action) {
  check_action(action);
  ++t_;
  return {Eigen::VectorXd::Zero(1), 1.0, false, t_ >= max_steps()};
}

// ---------------------------------------------------------------------------

std::unique_ptr<Env> make_env(std::string_view id) {
  if (id == "pendulum_swingup") return std::make_unique<PendulumSwingup>();
  if (id == "cartpole_swingup") return std::make_unique<CartpoleSwingup>();
  if (id == "const_probe") return std::make_unique<ConstProbe>();
  throw std::invalid_argument("unknown environment '" + std::string(id) +
                              "' (expected pendulum_swingup, cartpole_swingup or const_probe)");
}

Eigen::VectorXd rescale_action(const Env& env, const Eigen::VectorXd& normalized) {
  const Eigen::ArrayXd lo = env.action_low().array();
  const Eigen::ArrayXd hi = env.action_high().array();
  const Eigen::ArrayXd a = normalized.array().max(-1.0).min(1.0);
  return (lo + 0.5 * (a + 1.0) * (hi - lo)).max(lo).min(hi).matrix();
}

}  // namespace ctd4
