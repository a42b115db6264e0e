#pragma once

#include "mamorl/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace mamorl::pref {

/// Point on the probability simplex weighting an agent's objectives.
using PreferenceVector = Eigen::VectorXd;
/// One preference per agent, in agent order.
using GlobalPreference = std::vector<PreferenceVector>;

inline constexpr double kSimplexTolerance = 1e-9;

bool is_valid(const PreferenceVector& w, double tol = kSimplexTolerance);
bool is_valid(const GlobalPreference& W, int n_agents, int n_objectives,
              double tol = kSimplexTolerance);

/// Exact uniform draw from the (M-1)-simplex via sorted uniform gaps.
PreferenceVector sample_uniform_simplex(Rng& rng, int n_objectives);

GlobalPreference sample_global(Rng& rng, int n_agents, int n_objectives);

/// Row-stacked preferences, N x M.
Eigen::MatrixXd stack(const GlobalPreference& W);

/// Frozen observation-to-preference map w = softmax(A o + b).
struct PreferenceGenerator {
    int agent_index = 0;
    Eigen::MatrixXd weights;  // M x obs_dim
    Eigen::VectorXd bias;     // M
    bool frozen = true;

    int n_objectives() const { return static_cast<int>(weights.rows()); }
    int obs_dim() const { return static_cast<int>(weights.cols()); }
};

PreferenceVector generate_from_observation(const PreferenceGenerator& gen,
                                           const Eigen::VectorXd& observation);

/// Row-wise generation for a batch of observations (B x obs_dim -> B x M).
Eigen::MatrixXd generate_batch(const PreferenceGenerator& gen, const Eigen::MatrixXd& observations);

/// A entries i.i.d. Normal(0, scale^2 / obs_dim), zero bias, one sub-stream per agent.
/// Algorithms being compared must share the seed.
std::vector<PreferenceGenerator> build_generators(std::uint64_t seed, int n_agents,
                                                  int n_objectives, int obs_dim,
                                                  double scale = 1.0);

}  // namespace mamorl::pref

namespace mamorl::pref {

/// Supplies the global preference at each step of an episode.
///
/// kRandom draws every agent's preference uniformly at episode start and holds it;
/// kFixed always returns the stored preference; kObservation evaluates each
/// agent's generator on its current observation.
class PreferenceProvider {
public:
    enum class Kind { kRandom, kFixed, kObservation };

    static PreferenceProvider random(int n_agents, int n_objectives);
    static PreferenceProvider fixed(GlobalPreference W);
    static PreferenceProvider observation(std::vector<PreferenceGenerator> generators);

    Kind kind() const { return kind_; }
    const std::vector<PreferenceGenerator>& generators() const { return generators_; }

    void begin_episode(Rng& rng);
    GlobalPreference current(const std::vector<Eigen::VectorXd>& observations) const;

private:
    Kind kind_ = Kind::kFixed;
    int n_agents_ = 0;
    int n_objectives_ = 0;
    GlobalPreference held_;
    std::vector<PreferenceGenerator> generators_;
};

}  // namespace mamorl::pref
