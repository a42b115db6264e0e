#include "mamorl/preferences.hpp"

#include "mamorl/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mamorl::pref {

bool is_valid(const PreferenceVector& w, double tol) {
    if (w.size() < 1 || !w.allFinite()) return false;
    if ((w.array() < 0.0).any()) return false;
    return std::abs(w.sum() - 1.0) <= tol;
}

bool is_valid(const GlobalPreference& W, int n_agents, int n_objectives, double tol) {
    if (static_cast<int>(W.size()) != n_agents) return false;
    return std::all_of(W.begin(), W.end(), [&](const PreferenceVector& w) {
        return w.size() == n_objectives && is_valid(w, tol);
    });
}

PreferenceVector sample_uniform_simplex(Rng& rng, int n_objectives) {
    if (n_objectives < 1) throw ConfigError("sample_uniform_simplex: need at least one objective");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> cuts(static_cast<std::size_t>(n_objectives + 1));
    cuts.front() = 0.0;
    cuts.back() = 1.0;
    for (int k = 1; k < n_objectives; ++k) cuts[k] = unit(rng);
    std::sort(cuts.begin() + 1, cuts.end() - 1);
    PreferenceVector w(n_objectives);
    for (int k = 0; k < n_objectives; ++k) w(k) = cuts[k + 1] - cuts[k];
    return w;
}

GlobalPreference sample_global(Rng& rng, int n_agents, int n_objectives) {
    GlobalPreference W;
    W.reserve(n_agents);
    for (int i = 0; i < n_agents; ++i) W.push_back(sample_uniform_simplex(rng, n_objectives));
    return W;
}

Eigen::MatrixXd stack(const GlobalPreference& W) {
    if (W.empty()) return {};
    Eigen::MatrixXd out(static_cast<Eigen::Index>(W.size()), W.front().size());
    for (std::size_t i = 0; i < W.size(); ++i) out.row(i) = W[i].transpose();
    return out;
}

PreferenceVector generate_from_observation(const PreferenceGenerator& gen,
                                           const Eigen::VectorXd& observation) {
    if (observation.size() != gen.obs_dim()) {
        throw DimensionError("generate_from_observation: observation has " +
                             std::to_string(observation.size()) + " entries, generator expects " +
                             std::to_string(gen.obs_dim()));
    }
    Eigen::VectorXd logits = gen.weights * observation + gen.bias;
    logits.array() -= logits.maxCoeff();
    Eigen::VectorXd w = logits.array().exp();
    return w / w.sum();
}

Eigen::MatrixXd generate_batch(const PreferenceGenerator& gen, const Eigen::MatrixXd& observations) {
    Eigen::MatrixXd out(observations.rows(), gen.n_objectives());
    for (Eigen::Index r = 0; r < observations.rows(); ++r) {
        out.row(r) = generate_from_observation(gen, observations.row(r).transpose()).transpose();
    }
    return out;
}

std::vector<PreferenceGenerator> build_generators(std::uint64_t seed, int n_agents,
                                                  int n_objectives, int obs_dim, double scale) {
    if (!(scale > 0.0)) throw ConfigError("build_generators: scale must be > 0");
    if (n_objectives < 1 || obs_dim < 1) throw ConfigError("build_generators: empty dimensions");
    std::vector<PreferenceGenerator> gens;
    gens.reserve(n_agents);
    for (int i = 0; i < n_agents; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        std::normal_distribution<double> normal(0.0, scale / std::sqrt(static_cast<double>(obs_dim)));
        PreferenceGenerator g;
        g.agent_index = i;
        g.weights.resize(n_objectives, obs_dim);
        for (int r = 0; r < n_objectives; ++r) {
            for (int c = 0; c < obs_dim; ++c) g.weights(r, c) = normal(rng);
        }
        g.bias = Eigen::VectorXd::Zero(n_objectives);
        gens.push_back(std::move(g));
    }
    return gens;
}

}  // namespace mamorl::pref

namespace mamorl::pref {

PreferenceProvider PreferenceProvider::random(int n_agents, int n_objectives) {
    PreferenceProvider p;
    p.kind_ = Kind::kRandom;
    p.n_agents_ = n_agents;
    p.n_objectives_ = n_objectives;
    return p;
}

PreferenceProvider PreferenceProvider::fixed(GlobalPreference W) {
    PreferenceProvider p;
    p.kind_ = Kind::kFixed;
    p.n_agents_ = static_cast<int>(W.size());
    p.n_objectives_ = W.empty() ? 0 : static_cast<int>(W.front().size());
    p.held_ = std::move(W);
    return p;
}

PreferenceProvider PreferenceProvider::observation(std::vector<PreferenceGenerator> generators) {
    PreferenceProvider p;
    p.kind_ = Kind::kObservation;
    p.n_agents_ = static_cast<int>(generators.size());
    p.n_objectives_ = generators.empty() ? 0 : generators.front().n_objectives();
    p.generators_ = std::move(generators);
    return p;
}

void PreferenceProvider::begin_episode(Rng& rng) {
    if (kind_ == Kind::kRandom) held_ = sample_global(rng, n_agents_, n_objectives_);
}

GlobalPreference PreferenceProvider::current(const std::vector<Eigen::VectorXd>& observations) const {
    if (kind_ != Kind::kObservation) {
        if (held_.empty()) throw ContractError("preference provider: begin_episode() not called");
        return held_;
    }
    if (observations.size() != generators_.size()) {
        throw DimensionError("preference provider: expected " +
                             std::to_string(generators_.size()) + " observations");
    }
    GlobalPreference W;
    W.reserve(generators_.size());
    for (std::size_t i = 0; i < generators_.size(); ++i) {
        W.push_back(generate_from_observation(generators_[i], observations[i]));
    }
    return W;
}

}  // namespace mamorl::pref
