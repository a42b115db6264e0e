#include "mamorl/env.hpp"

#include "mamorl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mamorl::env {

std::string to_string(EnvKind kind) {
    switch (kind) {
        case EnvKind::kSpread: return "spread";
        case EnvKind::kTag: return "tag";
        case EnvKind::kDiagnostic: return "diagnostic";
    }
    throw ConfigError("unknown env kind");
}

EnvKind env_kind_from_string(const std::string& name) {
    if (name == "spread") return EnvKind::kSpread;
    if (name == "tag") return EnvKind::kTag;
    if (name == "diagnostic") return EnvKind::kDiagnostic;
    throw ConfigError("unknown env kind '" + name + "'");
}

void EnvConfig::validate() const {
    if (n_agents < 1) throw ConfigError("n_agents must be >= 1");
    if (n_landmarks < 1) throw ConfigError("n_landmarks must be >= 1");
    if (kind == EnvKind::kSpread && n_landmarks < n_agents) {
        throw ConfigError("spread requires n_landmarks >= n_agents");
    }
    if (kind == EnvKind::kTag && (n_adversaries < 1 || n_adversaries >= n_agents)) {
        throw ConfigError("tag requires 1 <= n_adversaries < n_agents");
    }
    if (kind != EnvKind::kTag && n_adversaries != 0) {
        throw ConfigError("n_adversaries is only meaningful for tag");
    }
    if (kind == EnvKind::kDiagnostic && n_landmarks != 2) {
        throw ConfigError("diagnostic world has exactly 2 landmarks");
    }
    if (!(world_size > 0.0)) throw ConfigError("world_size must be > 0");
    if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
    if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
    if (!(energy_move_coeff >= 0.0)) throw ConfigError("energy_move_coeff must be >= 0");
    if (!(adversary_accel > 0.0)) throw ConfigError("adversary_accel must be > 0");
}

Eigen::VectorXd WorldState::flatten(const EnvConfig& config) const {
    const int n = config.n_agents;
    const int l = config.n_landmarks;
    Eigen::VectorXd s(config.state_dim());
    for (int i = 0; i < n; ++i) s.segment<2>(2 * i) = positions.row(i).transpose();
    for (int i = 0; i < n; ++i) s.segment<2>(2 * n + 2 * i) = velocities.row(i).transpose();
    for (int j = 0; j < l; ++j) s.segment<2>(4 * n + 2 * j) = positions.row(n + j).transpose();
    return s;
}

Positions diagnostic_landmarks(const EnvConfig& config) {
    Positions lm(2, 2);
    lm << -0.5 * config.world_size, 0.0, 0.5 * config.world_size, 0.0;
    return lm;
}

ResetResult reset(const EnvConfig& config, Rng& rng) {
    config.validate();
    std::uniform_real_distribution<double> coord(-config.world_size, config.world_size);
    const int n = config.n_agents;
    const int l = config.n_landmarks;
    WorldState state;
    state.positions.resize(n + l, 2);
    state.velocities = Positions::Zero(n, 2);
    for (int i = 0; i < n; ++i) {
        state.positions(i, 0) = coord(rng);
        state.positions(i, 1) = coord(rng);
    }
    if (config.kind == EnvKind::kDiagnostic) {
        state.positions.bottomRows(2) = diagnostic_landmarks(config);
    } else {
        for (int j = 0; j < l; ++j) {
            state.positions(n + j, 0) = coord(rng);
            state.positions(n + j, 1) = coord(rng);
        }
    }
    state.step_index = 0;
    return {state, observe_all(state, config)};
}

namespace {

Eigen::Vector2d applied_force(const EnvConfig& config, const JointAction& actions, int agent) {
    Eigen::Vector2d f = actions.row(agent).transpose().cwiseMax(-1.0).cwiseMin(1.0);
    if (config.is_adversary(agent)) f *= config.adversary_accel;
    return f;
}

}  // namespace

StepResult step(const WorldState& state, const JointAction& actions, const EnvConfig& config) {
    if (state.step_index >= config.max_steps) {
        throw EpisodeFinishedError("step: episode already finished at step " +
                                   std::to_string(state.step_index));
    }
    const int n = config.n_agents;
    if (actions.rows() != n) {
        throw DimensionError("step: expected actions for " + std::to_string(n) + " agents, got " +
                             std::to_string(actions.rows()));
    }
    WorldState next = state;
    const double bound = config.world_size;
    for (int i = 0; i < n; ++i) {
        const Eigen::Vector2d force = applied_force(config, actions, i);
        Eigen::Vector2d v = kDamping * state.velocities.row(i).transpose() + config.dt * force;
        Eigen::Vector2d p = state.positions.row(i).transpose() + config.dt * v;
        for (int k = 0; k < 2; ++k) {
            if (p(k) > bound || p(k) < -bound) {
                p(k) = std::clamp(p(k), -bound, bound);
                v(k) = 0.0;
            }
        }
        next.positions.row(i) = p.transpose();
        next.velocities.row(i) = v.transpose();
    }
    next.step_index = state.step_index + 1;

    StepResult result;
    result.rewards = compute_rewards(config, state, next, actions);
    result.observations = observe_all(next, config);
    result.done = next.step_index == config.max_steps;
    result.state = std::move(next);
    return result;
}

std::vector<RewardVector> compute_rewards(const EnvConfig& config, const WorldState& state,
                                          const WorldState& next_state,
                                          const JointAction& actions) {
    const int n = config.n_agents;
    const int l = config.n_landmarks;
    const double radius = config.collision_radius();
    std::vector<RewardVector> rewards(n, RewardVector::Zero(kRewardDim));
    auto dist = [&](int a, int b) {
        return (next_state.positions.row(a) - next_state.positions.row(b)).norm();
    };

    switch (config.kind) {
        case EnvKind::kSpread: {
            double task = 0.0;
            for (int j = 0; j < l; ++j) {
                double nearest = std::numeric_limits<double>::infinity();
                for (int i = 0; i < n; ++i) nearest = std::min(nearest, dist(i, n + j));
                task -= nearest;
            }
            for (int a = 0; a < n; ++a) {
                for (int b = a + 1; b < n; ++b) {
                    if (dist(a, b) < radius) task -= 1.0;
                }
            }
            for (auto& r : rewards) r(0) = task;
            break;
        }
        case EnvKind::kTag: {
            int contacts = 0;
            std::vector<int> caught(n, 0);
            for (int a = 0; a < n; ++a) {
                if (config.is_adversary(a)) continue;
                for (int b = 0; b < n; ++b) {
                    if (!config.is_adversary(b)) continue;
                    if (dist(a, b) < radius) {
                        ++contacts;
                        ++caught[b];
                    }
                }
            }
            for (int i = 0; i < n; ++i) {
                double nearest = std::numeric_limits<double>::infinity();
                for (int k = 0; k < n; ++k) {
                    if (config.is_adversary(k) != config.is_adversary(i)) {
                        nearest = std::min(nearest, dist(i, k));
                    }
                }
                if (config.is_adversary(i)) {
                    rewards[i](0) = -10.0 * caught[i] + 0.1 * nearest;
                } else {
                    rewards[i](0) = 10.0 * contacts - 0.1 * nearest;
                }
            }
            break;
        }
        case EnvKind::kDiagnostic: {
            for (int i = 0; i < n; ++i) {
                rewards[i](0) = -dist(i, n);
                rewards[i](1) = -dist(i, n + 1);
            }
            return rewards;
        }
    }

    for (int i = 0; i < n; ++i) {
        const double moved = (next_state.positions.row(i) - state.positions.row(i)).norm();
        rewards[i](1) = -config.energy_move_coeff * applied_force(config, actions, i).norm() * moved;
    }
    return rewards;
}

Observation observe(const WorldState& state, int agent_index, const EnvConfig& config) {
    const int n = config.n_agents;
    const int l = config.n_landmarks;
    if (agent_index < 0 || agent_index >= n) {
        throw DimensionError("observe: agent index " + std::to_string(agent_index) +
                             " out of range for " + std::to_string(n) + " agents");
    }
    Observation o(config.observation_dim());
    const Eigen::RowVector2d self = state.positions.row(agent_index);
    o.segment<2>(0) = self.transpose();
    o.segment<2>(2) = state.velocities.row(agent_index).transpose();
    int at = 4;
    for (int j = 0; j < l; ++j, at += 2) {
        o.segment<2>(at) = (state.positions.row(n + j) - self).transpose();
    }
    for (int k = 0; k < n; ++k) {
        if (k == agent_index) continue;
        o.segment<2>(at) = (state.positions.row(k) - self).transpose();
        at += 2;
    }
    return o;
}

std::vector<Observation> observe_all(const WorldState& state, const EnvConfig& config) {
    std::vector<Observation> out;
    out.reserve(config.n_agents);
    for (int i = 0; i < config.n_agents; ++i) out.push_back(observe(state, i, config));
    return out;
}

double diagnostic_optimum(const EnvConfig& config, const Eigen::VectorXd& preference) {
    if (config.kind != EnvKind::kDiagnostic) {
        throw ConfigError("diagnostic_optimum: env kind is " + to_string(config.kind));
    }
    if (preference.size() != 2) {
        throw DimensionError("diagnostic_optimum: preference must have 2 components");
    }
    // On the segment w0*d0 + w1*d1 is linear in the position; the minimum sits
    // on the landmark carrying the larger weight.
    const Positions lm = diagnostic_landmarks(config);
    const double span = (lm.row(1) - lm.row(0)).norm();
    return -std::min(preference(0), preference(1)) * span;
}

}  // namespace mamorl::env
