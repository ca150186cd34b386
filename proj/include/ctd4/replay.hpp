#pragma once

#include <Eigen/Core>
#include <vector>

#include "ctd4/rng.hpp"

namespace ctd4 {

struct Transition {
  Eigen::VectorXd state;
  Eigen::VectorXd action;  // normalized to [-1, 1]
  double reward = 0.0;
  Eigen::VectorXd next_state;
  bool terminated = false;
};

// Column i of every matrix belongs to sample i.
struct Batch {
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;
  Eigen::VectorXd rewards;
  Eigen::MatrixXd next_states;
  std::vector<char> terminated;

  std::size_t size() const { return static_cast<std::size_t>(rewards.size()); }
  Transition at(std::size_t i) const;
  static Batch from(const std::vector<Transition>& transitions);
};

// Fixed-capacity ring buffer with uniform sampling (with replacement).
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t obs_dim, std::size_t action_dim);

  void push(const Transition& t);
  // Throws std::runtime_error when empty.
  Batch sample(std::size_t m, Rng& rng) const;

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  // 0 is the oldest retained transition, size() - 1 the newest.
  Transition at(std::size_t i) const;

 private:
  std::size_t capacity_;
  std::size_t obs_dim_;
  std::size_t action_dim_;
  std::size_t size_ = 0;
  std::size_t head_ = 0;  // next write slot
  Eigen::MatrixXd states_;
  Eigen::MatrixXd actions_;
  Eigen::VectorXd rewards_;
  Eigen::MatrixXd next_states_;
  std::vector<char> terminated_;
};

}  // namespace ctd4
