#include "ctd4/replay.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ctd4 {

Transition Batch::at(std::size_t i) const {
  const auto c = static_cast<Eigen::Index>(i);
  return {states.col(c), actions.col(c), rewards[c], next_states.col(c), terminated[i] != 0};
}

Batch Batch::from(const std::vector<Transition>& transitions) {
  if (transitions.empty()) throw std::invalid_argument("Batch::from: no transitions");
  const auto m = static_cast<Eigen::Index>(transitions.size());
  const auto& first = transitions.front();
  Batch b{Eigen::MatrixXd(first.state.size(), m), Eigen::MatrixXd(first.action.size(), m),
          Eigen::VectorXd(m), Eigen::MatrixXd(first.state.size(), m),
          std::vector<char>(transitions.size())};
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& t = transitions[static_cast<std::size_t>(i)];
    b.states.col(i) = t.state;
    b.actions.col(i) = t.action;
    b.rewards[i] = t.reward;
    b.next_states.col(i) = t.next_state;
    b.terminated[static_cast<std::size_t>(i)] = t.terminated ? 1 : 0;
  }
  return b;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t obs_dim, std::size_t action_dim)
    : capacity_(capacity), obs_dim_(obs_dim), action_dim_(action_dim) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
  const auto cap = static_cast<Eigen::Index>(capacity);
  states_.resize(static_cast<Eigen::Index>(obs_dim), cap);
  actions_.resize(static_cast<Eigen::Index>(action_dim), cap);
  rewards_.resize(cap);
  next_states_.resize(static_cast<Eigen::Index>(obs_dim), cap);
  terminated_.resize(capacity);
}

void ReplayBuffer::push(const Transition& t) {
  if (static_cast<std::size_t>(t.state.size()) != obs_dim_ ||
      static_cast<std::size_t>(t.next_state.size()) != obs_dim_ ||
      static_cast<std::size_t>(t.action.size()) != action_dim_) {
    throw std::invalid_argument("ReplayBuffer::push: transition shape mismatch");
  }
  if (!t.state.allFinite() || !t.next_state.allFinite() || !t.action.allFinite() ||
      !std::isfinite(t.reward)) {
    throw std::invalid_argument("ReplayBuffer::push: non-finite transition");
  }
  const auto c = static_cast<Eigen::Index>(head_);
  states_.col(c) = t.state;
  actions_.col(c) = t.action;
  rewards_[c] = t.reward;
  next_states_.col(c) = t.next_state;
  terminated_[head_] = t.terminated ? 1 : 0;
  head_ = (head_ + 1) % capacity_;
  if (size_ < capacity_) ++size_;
}

Transition ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw std::out_of_range("ReplayBuffer::at: index " + std::to_string(i));
  const std::size_t slot = (head_ + capacity_ - size_ + i) % capacity_;
  const auto c = static_cast<Eigen::Index>(slot);
  return {states_.col(c), actions_.col(c), rewards_[c], next_states_.col(c), terminated_[slot] != 0};
}

Batch ReplayBuffer::sample(std::size_t m, Rng& rng) const {
  if (size_ == 0) throw std::runtime_error("ReplayBuffer::sample: buffer is empty");
  if (m == 0) throw std::invalid_argument("ReplayBuffer::sample: batch size must be positive");
  const auto mm = static_cast<Eigen::Index>(m);
  Batch b{Eigen::MatrixXd(static_cast<Eigen::Index>(obs_dim_), mm),
          Eigen::MatrixXd(static_cast<Eigen::Index>(action_dim_), mm), Eigen::VectorXd(mm),
          Eigen::MatrixXd(static_cast<Eigen::Index>(obs_dim_), mm), std::vector<char>(m)};
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  for (Eigen::Index i = 0; i < mm; ++i) {
    const std::size_t slot = pick(rng);
    const auto c = static_cast<Eigen::Index>(slot);
    b.states.col(i) = states_.col(c);
    b.actions.col(i) = actions_.col(c);
    b.rewards[i] = rewards_[c];
    b.next_states.col(i) = next_states_.col(c);
    b.terminated[static_cast<std::size_t>(i)] = terminated_[slot];
  }
  return b;
}

}  // namespace ctd4
