#pragma once

#include "mamorl/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace mamorl::env {

using Positions = Eigen::Matrix<double, Eigen::Dynamic, 2>;
/// One row of force components in [-1, 1] per agent.
using JointAction = Eigen::Matrix<double, Eigen::Dynamic, 2>;
using Observation = Eigen::VectorXd;
using RewardVector = Eigen::VectorXd;

enum class EnvKind { kSpread, kTag, kDiagnostic };

std::string to_string(EnvKind kind);
EnvKind env_kind_from_string(const std::string& name);

inline constexpr double kDamping = 0.75;
inline constexpr int kRewardDim = 2;
inline constexpr int kActionDim = 2;

struct EnvConfig {
    EnvKind kind = EnvKind::kSpread;
    int n_agents = 2;
    int n_landmarks = 2;
    /// Tag only: the last n_adversaries agents are the evaders.
    int n_adversaries = 0;
    /// Half-extent of the square world.
    double world_size = 1.0;
    double dt = 0.1;
    int max_steps = 25;
    double energy_move_coeff = 1.0;
    /// Tag only: force multiplier of the faster adversaries.
    double adversary_accel = 1.3;
    std::uint64_t seed = 0;

    /// Throws ConfigError on violated invariants.
    void validate() const;

    int observation_dim() const { return 4 + 2 * n_landmarks + 2 * (n_agents - 1); }
    int state_dim() const { return 4 * n_agents + 2 * n_landmarks; }
    int reward_dim() const { return kRewardDim; }
    int action_dim() const { return kActionDim; }
    double collision_radius() const { return 0.1 * world_size; }
    bool is_adversary(int agent) const {
        return kind == EnvKind::kTag && agent >= n_agents - n_adversaries;
    }
};

struct WorldState {
    /// Agents first, then landmarks.
    Positions positions;
    /// One row per agent.
    Positions velocities;
    int step_index = 0;

    Eigen::Vector2d agent(int i) const { return positions.row(i).transpose(); }
    Eigen::Vector2d landmark(int n_agents, int j) const {
        return positions.row(n_agents + j).transpose();
    }
    /// Flat global state: agent positions, agent velocities, landmark positions.
    Eigen::VectorXd flatten(const EnvConfig& config) const;
};

struct ResetResult {
    WorldState state;
    std::vector<Observation> observations;
};

struct StepResult {
    WorldState state;
    std::vector<Observation> observations;
    std::vector<RewardVector> rewards;
    bool done = false;
};

ResetResult reset(const EnvConfig& config, Rng& rng);

StepResult step(const WorldState& state, const JointAction& actions, const EnvConfig& config);

std::vector<RewardVector> compute_rewards(const EnvConfig& config, const WorldState& state,
                                          const WorldState& next_state,
                                          const JointAction& actions);

Observation observe(const WorldState& state, int agent_index, const EnvConfig& config);
std::vector<Observation> observe_all(const WorldState& state, const EnvConfig& config);

/// Fixed landmark positions of the diagnostic world: (-world_size/2, 0) and (world_size/2, 0).
Positions diagnostic_landmarks(const EnvConfig& config);

/// Best scalarised per-step reward reachable in the diagnostic world under
/// `preference`, ignoring the energy of getting there.
double diagnostic_optimum(const EnvConfig& config, const Eigen::VectorXd& preference);

}  // namespace mamorl::env
