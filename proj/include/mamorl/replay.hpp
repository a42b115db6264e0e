#pragma once

#include "mamorl/env.hpp"
#include "mamorl/rng.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <vector>

namespace mamorl::train {

struct Transition {
    Eigen::VectorXd state;
    env::JointAction actions;  // N x action_dim
    Eigen::MatrixXd rewards;   // N x m
    Eigen::VectorXd next_state;
    Eigen::MatrixXd prefs;     // N x M, the global preference active at s
    std::vector<Eigen::VectorXd> obs;
    std::vector<Eigen::VectorXd> next_obs;
    bool done = false;

    bool is_finite() const;
};

/// Fixed-capacity FIFO ring of transitions.
class ReplayBuffer {
public:
    static constexpr std::size_t kDefaultCapacity = 500000;

    explicit ReplayBuffer(std::size_t capacity = kDefaultCapacity);

    void push(Transition t);

    /// Uniform draw with replacement; nullopt while fewer than n transitions are stored.
    std::optional<std::vector<Transition>> sample(Rng& rng, std::size_t n) const;
    std::optional<std::vector<std::size_t>> sample_indices(Rng& rng, std::size_t n) const;

    std::size_t size() const { return count_; }
    std::size_t capacity() const { return capacity_; }
    std::size_t cursor() const { return cursor_; }
    /// Slot access by physical index in [0, size()).
    const Transition& at(std::size_t slot) const { return items_.at(slot); }

private:
    std::size_t capacity_;
    std::size_t cursor_ = 0;
    std::size_t count_ = 0;
    std::vector<Transition> items_;
};

}  // namespace mamorl::train
