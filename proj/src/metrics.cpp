#include "mamorl/metrics.hpp"

#include "mamorl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mamorl::metrics {

bool dominates(const UtilityPoint& p, const UtilityPoint& q) {
    return (p.array() >= q.array()).all() && (p.array() != q.array()).any();
}

namespace {

bool lex_greater(const UtilityPoint& a, const UtilityPoint& b) {
    for (Eigen::Index k = 0; k < a.size(); ++k) {
        if (a(k) != b(k)) return a(k) > b(k);
    }
    return false;
}

// Area dominated by 2-D points above (rx, ry). Tolerates dominated inputs.
double area_2d(std::vector<Eigen::Vector2d> pts, double rx, double ry) {
    std::sort(pts.begin(), pts.end(), [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
        return a.x() != b.x() ? a.x() > b.x() : a.y() > b.y();
    });
    double area = 0.0;
    double covered = ry;
    for (const auto& p : pts) {
        if (p.y() > covered) {
            area += (p.x() - rx) * (p.y() - covered);
            covered = p.y();
        }
    }
    return area;
}

std::vector<UtilityPoint> strictly_above(const ParetoFront& front) {
    std::vector<UtilityPoint> kept;
    for (const auto& p : front.points) {
        if (p.size() != front.ref.size()) {
            throw DimensionError("hypervolume: point dimension differs from reference point");
        }
        if ((p.array() > front.ref.array()).all()) kept.push_back(p);
    }
    return kept;
}

}  // namespace

std::vector<UtilityPoint> pareto_filter(const std::vector<UtilityPoint>& points) {
    std::vector<UtilityPoint> sorted = points;
    std::sort(sorted.begin(), sorted.end(), lex_greater);
    sorted.erase(std::unique(sorted.begin(), sorted.end(),
                             [](const UtilityPoint& a, const UtilityPoint& b) {
                                 return (a.array() == b.array()).all();
                             }),
                 sorted.end());
    // A point can only be dominated by one that precedes it in lexicographic
    // descending order.
    std::vector<UtilityPoint> front;
    for (const auto& p : sorted) {
        const bool beaten = std::any_of(front.begin(), front.end(),
                                        [&](const UtilityPoint& q) { return dominates(q, p); });
        if (!beaten) front.push_back(p);
    }
    return front;
}

double hypervolume_exact(const ParetoFront& front) {
    const Eigen::Index m = front.ref.size();
    if (m > 3 || m < 2) {
        throw UnsupportedDimensionError("hypervolume_exact supports 2 or 3 objectives, got " +
                                        std::to_string(m) + "; use hypervolume_mc instead");
    }
    const std::vector<UtilityPoint> pts = pareto_filter(strictly_above(front));
    if (pts.empty()) return 0.0;
    if (m == 2) {
        std::vector<Eigen::Vector2d> flat;
        for (const auto& p : pts) flat.emplace_back(p(0), p(1));
        return area_2d(flat, front.ref(0), front.ref(1));
    }
    std::vector<double> levels;
    for (const auto& p : pts) levels.push_back(p(2));
    std::sort(levels.begin(), levels.end(), std::greater<>());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    double volume = 0.0;
    for (std::size_t k = 0; k < levels.size(); ++k) {
        const double top = levels[k];
        const double bottom = k + 1 < levels.size() ? levels[k + 1] : front.ref(2);
        std::vector<Eigen::Vector2d> slab;
        for (const auto& p : pts) {
            if (p(2) >= top) slab.emplace_back(p(0), p(1));
        }
        volume += (top - bottom) * area_2d(slab, front.ref(0), front.ref(1));
    }
    return volume;
}

HypervolumeEstimate hypervolume_mc(const ParetoFront& front, std::size_t n_samples, Rng& rng) {
    if (n_samples == 0) throw ContractError("hypervolume_mc: need at least one sample");
    const std::vector<UtilityPoint> pts = strictly_above(front);
    if (pts.empty()) return {};
    Eigen::VectorXd upper = pts.front();
    for (const auto& p : pts) upper = upper.cwiseMax(p);
    const Eigen::VectorXd extent = upper - front.ref;
    const double box = extent.prod();
    if (!(box > 0.0)) return {};
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::size_t hits = 0;
    Eigen::VectorXd x(front.ref.size());
    for (std::size_t s = 0; s < n_samples; ++s) {
        for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = front.ref(k) + unit(rng) * extent(k);
        const bool hit = std::any_of(pts.begin(), pts.end(), [&](const UtilityPoint& p) {
            return (p.array() >= x.array()).all();
        });
        hits += hit ? 1 : 0;
    }
    const double n = static_cast<double>(n_samples);
    const double frac = static_cast<double>(hits) / n;
    return {box * frac, box * std::sqrt(frac * (1.0 - frac) / n)};
}

Eigen::VectorXd reference_point(const std::vector<UtilityPoint>& points) {
    if (points.empty()) throw ContractError("reference_point: no points");
    Eigen::VectorXd lo = points.front();
    Eigen::VectorXd hi = points.front();
    for (const auto& p : points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    Eigen::VectorXd ref = lo;
    for (Eigen::Index k = 0; k < lo.size(); ++k) {
        const double range = hi(k) - lo(k);
        ref(k) -= range > 0.0 ? 0.1 * range : 0.1 * std::max(1.0, std::abs(lo(k)));
    }
    return ref;
}

ParetoFront make_front(const std::vector<UtilityPoint>& points) {
    ParetoFront front;
    front.ref = reference_point(points);
    front.points = pareto_filter(points);
    return front;
}

double EpisodeTrace::scalarised_return(std::size_t agent) const {
    double total = 0.0;
    for (std::size_t t = 0; t < rewards.size(); ++t) {
        total += prefs[t].at(agent).dot(rewards[t].at(agent));
    }
    return total;
}

Eigen::VectorXd EpisodeTrace::return_vector(std::size_t agent) const {
    if (rewards.empty()) return {};
    Eigen::VectorXd total = Eigen::VectorXd::Zero(rewards.front().at(agent).size());
    for (const auto& step : rewards) total += step.at(agent);
    return total;
}

GuEvaluation evaluate_gu(const RolloutFn& rollout, int n_states, std::uint64_t seed) {
    if (n_states < 1) throw ContractError("evaluate_gu: need at least one initial state");
    GuEvaluation out;
    out.per_state.reserve(n_states);
    for (int k = 0; k < n_states; ++k) {
        const EpisodeTrace trace = rollout(derive_seed(seed, static_cast<std::uint64_t>(k)));
        const std::size_t n = trace.n_agents();
        double utility = 0.0;
        for (std::size_t i = 0; i < n; ++i) utility += trace.scalarised_return(i);
        out.per_state.push_back(n ? utility / static_cast<double>(n) : 0.0);
    }
    const double count = static_cast<double>(n_states);
    out.gu = std::accumulate(out.per_state.begin(), out.per_state.end(), 0.0) / count;
    if (n_states > 1) {
        double ss = 0.0;
        for (const double u : out.per_state) ss += (u - out.gu) * (u - out.gu);
        out.std_error = std::sqrt(ss / (count - 1.0) / count);
    }
    return out;
}

std::vector<Eigen::VectorXd> simplex_grid(int n_objectives, int divisions) {
    if (n_objectives < 1 || divisions < 0) throw ConfigError("simplex_grid: bad dimensions");
    if (divisions == 0) {
        return {Eigen::VectorXd::Constant(n_objectives, 1.0 / n_objectives)};
    }
    std::vector<Eigen::VectorXd> grid;
    std::vector<int> counts(static_cast<std::size_t>(n_objectives), 0);
    // Enumerate compositions of `divisions` into n_objectives parts.
    std::function<void(int, int)> rec = [&](int axis, int left) {
        if (axis == n_objectives - 1) {
            counts[axis] = left;
            Eigen::VectorXd w(n_objectives);
            for (int k = 0; k < n_objectives; ++k) w(k) = static_cast<double>(counts[k]) / divisions;
            grid.push_back(w);
            return;
        }
        for (int c = left; c >= 0; --c) {
            counts[axis] = c;
            rec(axis + 1, left - c);
        }
    };
    rec(0, divisions);
    return grid;
}

ParetoFront build_front_from_sweep(const std::function<UtilityPoint(const Eigen::VectorXd&)>& evaluate,
                                   const std::vector<Eigen::VectorXd>& grid) {
    if (grid.empty()) throw ContractError("build_front_from_sweep: empty preference grid");
    std::vector<UtilityPoint> points;
    points.reserve(grid.size());
    for (const auto& w : grid) points.push_back(evaluate(w));
    return make_front(points);
}

}  // namespace mamorl::metrics
