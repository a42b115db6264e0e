#pragma once

#include "mamorl/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

namespace mamorl::metrics {

/// Episode return vector (one entry per objective).
using UtilityPoint = Eigen::VectorXd;

/// Mutually non-dominated points plus the reference point bounding the hypervolume.
struct ParetoFront {
    std::vector<UtilityPoint> points;
    Eigen::VectorXd ref;

    Eigen::Index dim() const { return ref.size(); }
};

/// Maximisation: p >= q componentwise and p != q.
bool dominates(const UtilityPoint& p, const UtilityPoint& q);

/// Maximal elements of `points`, duplicates collapsed, in lexicographically
/// descending order.
std::vector<UtilityPoint> pareto_filter(const std::vector<UtilityPoint>& points);

/// Exact dominated hypervolume for 2 or 3 objectives. Points that do not
/// strictly dominate the reference point are ignored.
double hypervolume_exact(const ParetoFront& front);

struct HypervolumeEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
};

/// Uniform Monte-Carlo estimate over the box [ref, componentwise max of the front].
HypervolumeEstimate hypervolume_mc(const ParetoFront& front, std::size_t n_samples, Rng& rng);

/// Componentwise min minus 10% of the componentwise range (10% of max(1, |min|)
/// along any axis with zero range).
Eigen::VectorXd reference_point(const std::vector<UtilityPoint>& points);

/// Filters the points and attaches reference_point() of the unfiltered set.
ParetoFront make_front(const std::vector<UtilityPoint>& points);

/// Per-step reward vectors and active preferences, indexed [t][agent].
struct EpisodeTrace {
    std::vector<std::vector<Eigen::VectorXd>> rewards;
    std::vector<std::vector<Eigen::VectorXd>> prefs;

    std::size_t n_agents() const { return rewards.empty() ? 0 : rewards.front().size(); }
    /// sum_t w_i[t] . r_i[t]
    double scalarised_return(std::size_t agent) const;
    /// sum_t r_i[t]
    Eigen::VectorXd return_vector(std::size_t agent) const;
};

using RolloutFn = std::function<EpisodeTrace(std::uint64_t episode_seed)>;

struct GuEvaluation {
    double gu = 0.0;
    /// Standard error of the mean across initial states.
    double std_error = 0.0;
    std::vector<double> per_state;
};

inline constexpr int kDefaultGuStates = 128;

/// Mean over initial states of the agent-averaged scalarised episode return.
/// Episode k uses seed derive_seed(seed, k).
GuEvaluation evaluate_gu(const RolloutFn& rollout, int n_states, std::uint64_t seed);

/// Evenly spaced simplex grid with `divisions` steps per axis (M = 2, divisions = 10 gives 11 points).
std::vector<Eigen::VectorXd> simplex_grid(int n_objectives, int divisions);

/// Evaluates each grid preference to a return vector and keeps the non-dominated ones.
ParetoFront build_front_from_sweep(const std::function<UtilityPoint(const Eigen::VectorXd&)>& evaluate,
                                   const std::vector<Eigen::VectorXd>& grid);

}  // namespace mamorl::metrics
