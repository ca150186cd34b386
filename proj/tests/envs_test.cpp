#include "ctd4/envs.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

namespace ctd4 {
namespace {

using std::numbers::pi;

Eigen::VectorXd scalar(double v) { return Eigen::VectorXd::Constant(1, v); }

TEST(Envs, FactoryAndShapes) {
  for (const char* id : {"pendulum_swingup", "cartpole_swingup", "const_probe"}) {
    auto env = make_env(id);
    EXPECT_EQ(env->id(), id);
    EXPECT_EQ(static_cast<std::size_t>(env->reset(1).size()), env->obs_dim());
    EXPECT_EQ(static_cast<std::size_t>(env->action_low().size()), env->action_dim());
  }
  EXPECT_EQ(make_env("pendulum_swingup")->max_steps(), 200u);
  EXPECT_EQ(make_env("cartpole_swingup")->max_steps(), 500u);
  EXPECT_EQ(make_env("const_probe")->max_steps(), 100u);
  EXPECT_THROW(make_env("humanoid_run"), std::invalid_argument);
}

TEST(Envs, ResetDeterministicPerSeed) {
  for (const char* id : {"pendulum_swingup", "cartpole_swingup", "const_probe"}) {
    auto a = make_env(id);
    auto b = make_env(id);
    EXPECT_TRUE(a->reset(17) == b->reset(17)) << id;
  }
  PendulumSwingup p;
  EXPECT_FALSE(p.reset(1) == p.reset(2));
}

TEST(Envs, ActionValidation) {
  PendulumSwingup p;
  p.reset(0);
  EXPECT_THROW(p.step(scalar(2.5)), std::invalid_argument);
  EXPECT_THROW(p.step(scalar(NAN)), std::invalid_argument);
  EXPECT_THROW(p.step(Eigen::Vector2d(0, 0)), std::invalid_argument);
  EXPECT_NO_THROW(p.step(scalar(-2.0)));
  ConstProbe c;
  c.reset(0);
  EXPECT_THROW(c.step(scalar(1.01)), std::invalid_argument);
}

TEST(Envs, RescaleActionMapsUnitBoxToBounds) {
  PendulumSwingup p;
  EXPECT_DOUBLE_EQ(rescale_action(p, scalar(-1.0))[0], -2.0);
  EXPECT_DOUBLE_EQ(rescale_action(p, scalar(1.0))[0], 2.0);
  EXPECT_DOUBLE_EQ(rescale_action(p, scalar(0.25))[0], 0.5);
  EXPECT_DOUBLE_EQ(rescale_action(p, scalar(7.0))[0], 2.0);
}

TEST(Envs, WrapAngle) {
  EXPECT_DOUBLE_EQ(wrap_angle(pi), pi);
  EXPECT_DOUBLE_EQ(wrap_angle(-pi), pi);
  EXPECT_NEAR(wrap_angle(3 * pi / 2), -pi / 2, 1e-12);
  EXPECT_NEAR(wrap_angle(-5 * pi / 2), -pi / 2, 1e-12);
  EXPECT_DOUBLE_EQ(wrap_angle(0.3), 0.3);
}

TEST(Pendulum, ResetDistribution) {
  PendulumSwingup p;
  double theta_min = 10, theta_max = -10, speed_max = 0;
  double theta_mean = 0;
  const int n = 20000;
  for (int s = 0; s < n; ++s) {
    p.reset(static_cast<std::uint64_t>(s));
    EXPECT_GT(p.theta(), -pi);
    EXPECT_LE(p.theta(), pi);
    theta_min = std::min(theta_min, p.theta());
    theta_max = std::max(theta_max, p.theta());
    speed_max = std::max(speed_max, std::abs(p.theta_dot()));
    theta_mean += p.theta() / n;
  }
  EXPECT_LT(theta_min, -pi + 0.01);
  EXPECT_GT(theta_max, pi - 0.01);
  EXPECT_LE(speed_max, 1.0);
  EXPECT_GT(speed_max, 0.99);
  // Uniform on a 2 pi interval: std of the sample mean is ~0.0128.
  EXPECT_NEAR(theta_mean, 0.0, 0.05);
}

TEST(Pendulum, UprightRestIsFixedPointWithFullReward) {
  PendulumSwingup p;
  p.reset(0);
  p.set_state(0.0, 0.0);
  const StepResult r = p.step(scalar(0.0));
  EXPECT_EQ(r.reward, 1.0);
  EXPECT_EQ(p.theta(), 0.0);
  EXPECT_EQ(p.theta_dot(), 0.0);
  EXPECT_NEAR(r.observation[0], 1.0, 0.0);
  EXPECT_FALSE(r.terminated);
}

TEST(Pendulum, HangingDownGivesZeroReward) {
  PendulumSwingup p;
  p.reset(0);
  p.set_state(pi, 0.0);
  EXPECT_NEAR(p.step(scalar(0.0)).reward, 0.0, 1e-12);
}

TEST(Pendulum, DynamicsMatchHandComputedStep) {
  PendulumSwingup p;
  p.reset(0);
  p.set_state(0.4, -0.3);
  const StepResult r = p.step(scalar(1.5));
  const double speed = -0.3 + (15.0 * std::sin(0.4) + 3.0 * 1.5) * 0.05;
  const double angle = 0.4 + speed * 0.05;
  EXPECT_NEAR(p.theta_dot(), speed, 1e-14);
  EXPECT_NEAR(p.theta(), angle, 1e-14);
  EXPECT_NEAR(r.reward, 0.5 * (1 + std::cos(angle)), 1e-14);
  EXPECT_NEAR(r.observation[2], speed / 8.0, 1e-14);
}

TEST(Pendulum, SpeedClippedAndTruncatesAtTimeLimit) {
  PendulumSwingup p;
  p.reset(3);
  p.set_state(1.0, 7.9);
  p.step(scalar(2.0));
  EXPECT_EQ(p.theta_dot(), 8.0);
  p.reset(3);
  StepResult r;
  for (int i = 0; i < 200; ++i) {
    r = p.step(scalar(0.0));
    EXPECT_FALSE(r.terminated);
    EXPECT_EQ(r.truncated, i == 199);
  }
}

// Semi-implicit Euler does not conserve energy exactly. Per-step change is
// measured against the potential scale m g l for moderate speeds.
TEST(Pendulum, EnergyDriftPerStepUnderOnePercent) {
  PendulumSwingup p;
  p.reset(0);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> angle(-pi, pi), speed(-2.0, 2.0);
  const double scale = PendulumSwingup::kMass * PendulumSwingup::kGravity * PendulumSwingup::kLength;
  for (int i = 0; i < 5000; ++i) {
    p.set_state(angle(rng), speed(rng));
    const double before = p.mechanical_energy();
    p.step(scalar(0.0));
    EXPECT_LT(std::abs(p.mechanical_energy() - before), 0.01 * scale);
  }
}

TEST(Cartpole, StartsHangingAndTerminatesOffTrack) {
  CartpoleSwingup c;
  const Eigen::VectorXd obs = c.reset(5);
  EXPECT_NEAR(obs[2], -1.0, 0.002);  // cos(theta) near -1
  EXPECT_LE(std::abs(obs[0]), 0.05);

  c.set_state(2.39, 1.0, pi, 0.0);
  const StepResult r = c.step(scalar(1.0));
  EXPECT_TRUE(r.terminated);
  EXPECT_FALSE(r.truncated);
  EXPECT_GE(r.reward, 0.0);
  EXPECT_LE(r.reward, 1.0);
}

TEST(Cartpole, PushAcceleratesCart) {
  CartpoleSwingup c;
  c.reset(0);
  c.set_state(0, 0, pi, 0);
  c.step(scalar(1.0));
  const Eigen::VectorXd obs = c.step(scalar(1.0)).observation;
  EXPECT_GT(obs[1], 0.0);
  EXPECT_GT(obs[0], 0.0);
}

TEST(Cartpole, TruncatesAt500) {
  CartpoleSwingup c;
  c.reset(1);
  StepResult r;
  int steps = 0;
  do {
    r = c.step(scalar(0.0));
    ++steps;
  } while (!r.terminated && !r.truncated);
  EXPECT_EQ(steps, 500);
  EXPECT_TRUE(r.truncated);
}

TEST(ConstProbe, Definition) {
  ConstProbe c;
  EXPECT_TRUE(c.reset(123) == Eigen::VectorXd::Zero(1));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 100; ++i) {
    const StepResult r = c.step(scalar(u(rng)));
    EXPECT_EQ(r.reward, 1.0);
    EXPECT_EQ(r.observation[0], 0.0);
    EXPECT_FALSE(r.terminated);
    EXPECT_EQ(r.truncated, i == 99);
  }
}

TEST(ConstProbe, DiscountedReturnIsGeometricSum) {
  const double gamma = 0.99;
  for (int start : {0, 37, 99}) {
    ConstProbe c;
    c.reset(0);
    for (int i = 0; i < start; ++i) c.step(scalar(0.0));
    double g = 0.0, disc = 1.0;
    StepResult r;
    do {
      r = c.step(scalar(0.0));
      g += disc * r.reward;
      disc *= gamma;
    } while (!r.truncated);
    const int horizon = 100 - start;
    EXPECT_NEAR(g, (1 - std::pow(gamma, horizon)) / (1 - gamma), 1e-9);
  }
}

// Same seed and action sequence reproduce the trajectory bit for bit; every
// reward stays in [0, 1].
TEST(Envs, DeterministicTrajectoriesAndRewardBounds) {
  for (const char* id : {"pendulum_swingup", "cartpole_swingup", "const_probe"}) {
    auto a = make_env(id);
    auto b = make_env(id);
    a->reset(99);
    b->reset(99);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1, 1);
    double total = 0.0;
    for (std::size_t i = 0; i < a->max_steps(); ++i) {
      const Eigen::VectorXd act = rescale_action(*a, scalar(u(rng)));
      const StepResult ra = a->step(act);
      const StepResult rb = b->step(act);
      ASSERT_TRUE(ra.observation == rb.observation);
      ASSERT_EQ(ra.reward, rb.reward);
      ASSERT_GE(ra.reward, 0.0);
      ASSERT_LE(ra.reward, 1.0);
      total += ra.reward;
      if (ra.terminated || ra.truncated) break;
    }
    EXPECT_LE(total, static_cast<double>(a->max_steps()));
  }
}

}  // namespace
}  // namespace ctd4
