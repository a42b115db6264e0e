#include "mamorl/training.hpp"

#include "mamorl/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace mamorl::train {

using ad::Index;
using ad::Tape;
using ad::Tensor;

std::string to_string(Algorithm algorithm) {
    switch (algorithm) {
        case Algorithm::kGp: return "gp";
        case Algorithm::kAa: return "aa";
        case Algorithm::kIp: return "ip";
        case Algorithm::kScalarized: return "scalarized";
    }
    throw ConfigError("unknown algorithm");
}

Algorithm algorithm_from_string(const std::string& name) {
    if (name == "gp") return Algorithm::kGp;
    if (name == "aa") return Algorithm::kAa;
    if (name == "ip") return Algorithm::kIp;
    if (name == "scalarized") return Algorithm::kScalarized;
    throw ConfigError("unknown algorithm '" + name + "'");
}

std::string to_string(PreferenceCase kind) {
    return kind == PreferenceCase::kRandom ? "random" : "observation";
}

PreferenceCase preference_case_from_string(const std::string& name) {
    if (name == "random") return PreferenceCase::kRandom;
    if (name == "observation") return PreferenceCase::kObservation;
    throw ConfigError("unknown preference case '" + name + "'");
}

PreferenceCase required_case(Algorithm algorithm) {
    return algorithm == Algorithm::kGp ? PreferenceCase::kRandom : PreferenceCase::kObservation;
}

void TrainConfig::validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in (0, 1]");
    if (batch < 1) throw ConfigError("batch must be positive");
    if (buffer_capacity < 1) throw ConfigError("buffer_capacity must be positive");
    if (batch > buffer_capacity) throw ConfigError("batch must not exceed buffer_capacity");
    if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) throw ConfigError("learning rates must be > 0");
    if (gpi_candidates < 0) throw ConfigError("gpi_candidates must be >= 0");
    if (!(noise_sigma_start >= 0.0) || !(noise_sigma_end >= 0.0)) {
        throw ConfigError("noise sigmas must be >= 0");
    }
    if (noise_decay_steps < 0) throw ConfigError("noise_decay_steps must be >= 0");
    if (update_every < 1) throw ConfigError("update_every must be >= 1");
    if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
    if (episodes < 1) throw ConfigError("episodes must be >= 1");
    if (critic_width < 1) throw ConfigError("critic_width must be >= 1");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
}

Batch collate(const std::vector<Transition>& transitions) {
    if (transitions.empty()) throw ContractError("collate: empty batch");
    const auto& first = transitions.front();
    const Index b = static_cast<Index>(transitions.size());
    const Index n = first.actions.rows();
    const Index m = first.rewards.cols();
    const Index n_obj = first.prefs.cols();
    Batch out;
    out.size = b;
    out.state.resize(b, first.state.size());
    out.next_state.resize(b, first.next_state.size());
    out.flat_prefs.resize(b, n * n_obj);
    for (Index i = 0; i < n; ++i) {
        out.obs.emplace_back(b, first.obs[i].size());
        out.next_obs.emplace_back(b, first.next_obs[i].size());
        out.actions.emplace_back(b, first.actions.cols());
        out.rewards.emplace_back(b, m);
        out.prefs.emplace_back(b, n_obj);
    }
    for (Index r = 0; r < b; ++r) {
        const auto& t = transitions[r];
        out.state.row(r) = t.state.transpose();
        out.next_state.row(r) = t.next_state.transpose();
        for (Index i = 0; i < n; ++i) {
            out.obs[i].row(r) = t.obs[i].transpose();
            out.next_obs[i].row(r) = t.next_obs[i].transpose();
            out.actions[i].row(r) = t.actions.row(i);
            out.rewards[i].row(r) = t.rewards.row(i);
            out.prefs[i].row(r) = t.prefs.row(i);
            out.flat_prefs.block(r, i * n_obj, 1, n_obj) = t.prefs.row(i);
        }
    }
    return out;
}

double scalarize(const Eigen::VectorXd& w, const Eigen::VectorXd& v) {
    if (w.size() != v.size()) {
        throw DimensionError("scalarize: preference has " + std::to_string(w.size()) +
                             " entries, value has " + std::to_string(v.size()));
    }
    return w.dot(v);
}

double noise_sigma(std::int64_t step, const TrainConfig& config) {
    if (config.noise_decay_steps <= 0) return config.noise_sigma_end;
    const double frac =
        std::min(1.0, static_cast<double>(step) / static_cast<double>(config.noise_decay_steps));
    return config.noise_sigma_start + (config.noise_sigma_end - config.noise_sigma_start) * frac;
}

Matrix exploration_noise(const Matrix& action, std::int64_t step, const TrainConfig& config,
                         Rng& rng) {
    const double sigma = noise_sigma(step, config);
    Matrix out = action;
    if (sigma > 0.0) {
        std::normal_distribution<double> normal(0.0, sigma);
        for (Index c = 0; c < out.cols(); ++c) {
            for (Index r = 0; r < out.rows(); ++r) out(r, c) += normal(rng);
        }
    }
    return out.cwiseMax(-1.0).cwiseMin(1.0);
}

void soft_update(const nn::ParameterList& online, const nn::ParameterList& target, double tau) {
    if (online.size() != target.size()) {
        throw DimensionError("soft_update: parameter lists differ in length");
    }
    for (std::size_t k = 0; k < online.size(); ++k) {
        if (online[k]->rows() != target[k]->rows() || online[k]->cols() != target[k]->cols()) {
            throw DimensionError("soft_update: shape mismatch for " + online[k]->name);
        }
        target[k]->value = tau * online[k]->value + (1.0 - tau) * target[k]->value;
    }
}

Tensor motd_loss(Tape& tape, const Tensor& q, const Matrix& y) {
    if (q->rows() != y.rows() || q->cols() != y.cols()) {
        throw DimensionError("motd_loss: prediction " + ad::shape_string(*q) + " vs target " +
                             std::to_string(y.rows()) + "x" + std::to_string(y.cols()));
    }
    const Tensor diff = ad::sub(tape, q, ad::constant(y));
    return ad::scale(tape, ad::sum(tape, ad::mul(tape, diff, diff)),
                     1.0 / static_cast<double>(q->rows()));
}

Optimizer::Optimizer(nn::ParameterList p, double rate) : params(std::move(p)), lr(rate) {
    states.reserve(params.size());
    for (const auto& t : params) states.push_back(ad::AdamState::for_param(*t));
}

void Optimizer::step() {
    for (std::size_t k = 0; k < params.size(); ++k) ad::adam_step(*params[k], states[k], lr);
}

Tensor actor_objective(Tape& tape, const nn::Actor& actor, const Matrix& obs,
                       const Matrix* flat_prefs, const Matrix& weights,
                       const ActionValueFn& q_of_action) {
    const Tensor prefs = flat_prefs ? ad::constant(*flat_prefs) : nullptr;
    const Tensor action = actor.forward(tape, ad::constant(obs), prefs);
    const Tensor q = q_of_action(tape, action);
    if (q->rows() != weights.rows() || q->cols() != weights.cols()) {
        throw DimensionError("actor_objective: action values " + ad::shape_string(*q) +
                             " do not match weights");
    }
    const Tensor scalarised = ad::sum(tape, ad::mul(tape, q, ad::constant(weights)));
    return ad::scale(tape, scalarised, -1.0 / static_cast<double>(obs.rows()));
}

double actor_step(const nn::Actor& actor, Optimizer& optimizer, const Matrix& obs,
                  const Matrix* flat_prefs, const Matrix& weights,
                  const ActionValueFn& q_of_action) {
    Tape tape;
    const Tensor loss = actor_objective(tape, actor, obs, flat_prefs, weights, q_of_action);
    tape.backward(loss);
    optimizer.step();
    return loss->value(0, 0);
}

ActorFn actor_fn(const nn::Actor& actor) {
    return [&actor](const Matrix& obs, const Matrix& flat_prefs) {
        Tape tape(Tape::Mode::kInference);
        const Tensor prefs = actor.pref_dim > 0 ? ad::constant(flat_prefs) : nullptr;
        return Matrix(actor.forward(tape, ad::constant(obs), prefs)->value);
    };
}

CriticFn gp_critic_fn(const nn::MlpCritic& critic) {
    return [&critic](const Matrix& state, const std::vector<Matrix>& actions,
                     const Matrix& flat_prefs) {
        Tape tape(Tape::Mode::kInference);
        std::vector<Tensor> acts;
        for (const auto& a : actions) acts.push_back(ad::constant(a));
        const Tensor input = nn::gp_critic_input(tape, ad::constant(state), acts,
                                                 ad::constant(flat_prefs));
        return Matrix(critic.forward(tape, input)->value);
    };
}

GpiSelection gpi_select_actions(const ActorFn& actor, const CriticFn& critic, int agent,
                                int n_objectives, const Matrix& state, const Matrix& obs,
                                const std::vector<Matrix>& actions, const Matrix& flat_prefs,
                                Rng& rng, int n_candidates) {
    const Index b = state.rows();
    const Index c_total = n_candidates + 1;
    const Index m_pref = n_objectives;
    const Index col = static_cast<Index>(agent) * m_pref;
    if (col + m_pref > flat_prefs.cols()) {
        throw DimensionError("gpi_select_actions: agent " + std::to_string(agent) +
                             " outside the global preference");
    }
    const Matrix true_w = flat_prefs.middleCols(col, m_pref);

    GpiSelection out;
    out.candidates.resize(static_cast<std::size_t>(b));
    for (Index r = 0; r < b; ++r) {
        Matrix cand(c_total, m_pref);
        cand.row(0) = true_w.row(r);
        for (Index c = 1; c < c_total; ++c) {
            cand.row(c) = pref::sample_uniform_simplex(rng, n_objectives).transpose();
        }
        out.candidates[r] = std::move(cand);
    }

    // Candidate-major stacking: row c * B + r.
    const Matrix big_state = state.replicate(c_total, 1);
    const Matrix big_obs = obs.replicate(c_total, 1);
    Matrix big_prefs = flat_prefs.replicate(c_total, 1);
    for (Index c = 0; c < c_total; ++c) {
        for (Index r = 0; r < b; ++r) {
            big_prefs.block(c * b + r, col, 1, m_pref) = out.candidates[r].row(c);
        }
    }
    const Matrix big_action = actor(big_obs, big_prefs);
    std::vector<Matrix> big_actions;
    for (std::size_t j = 0; j < actions.size(); ++j) {
        big_actions.push_back(static_cast<int>(j) == agent ? big_action
                                                           : Matrix(actions[j].replicate(c_total, 1)));
    }
    const Matrix q = critic(big_state, big_actions, big_prefs);

    out.actions.resize(b, big_action.cols());
    out.chosen_scores.resize(b);
    out.plain_scores.resize(b);
    out.chosen.assign(static_cast<std::size_t>(b), 0);
    for (Index r = 0; r < b; ++r) {
        double best = -std::numeric_limits<double>::infinity();
        Index best_c = 0;
        for (Index c = 0; c < c_total; ++c) {
            const double score = q.row(c * b + r).dot(true_w.row(r));
            if (c == 0) out.plain_scores(r) = score;
            if (score > best) {
                best = score;
                best_c = c;
            }
        }
        out.chosen[r] = static_cast<int>(best_c);
        out.chosen_scores(r) = best;
        out.actions.row(r) = big_action.row(best_c * b + r);
    }
    return out;
}

Eigen::VectorXd gpi_select_action(const nn::Actor& actor, const nn::MlpCritic& critic,
                                  const Eigen::VectorXd& state, const Eigen::VectorXd& obs,
                                  const env::JointAction& joint_action,
                                  const pref::GlobalPreference& global_pref, int agent, Rng& rng,
                                  int n_candidates) {
    std::vector<Matrix> actions;
    for (Index j = 0; j < joint_action.rows(); ++j) actions.emplace_back(joint_action.row(j));
    const Matrix stacked = pref::stack(global_pref);
    const Matrix flat = stacked.reshaped<Eigen::RowMajor>().transpose();
    const auto sel = gpi_select_actions(actor_fn(actor), gp_critic_fn(critic), agent,
                                        static_cast<int>(stacked.cols()), state.transpose(),
                                        obs.transpose(), actions, flat, rng, n_candidates);
    return sel.actions.row(0).transpose();
}

// ---------------------------------------------------------------------------
// Learner base

Learner::Learner(Algorithm algorithm, env::EnvConfig env, TrainConfig train,
                 std::vector<pref::PreferenceGenerator> generators, Rng& rng)
    : algorithm_(algorithm), env_(std::move(env)), train_(train),
      generators_(std::move(generators)) {
    const Index pref_dim =
        algorithm_ == Algorithm::kGp ? static_cast<Index>(env_.n_agents) * env_.reward_dim() : 0;
    for (int i = 0; i < env_.n_agents; ++i) {
        actors_.push_back(nn::Actor::create(env_.observation_dim(), pref_dim, env_.action_dim(), rng,
                                            "actor" + std::to_string(i)));
        target_actors_.push_back(nn::clone_as_target(actors_.back()));
        actor_opts_.emplace_back(actors_.back().parameters(), train_.actor_lr);
    }
    if (algorithm_ != Algorithm::kGp &&
        static_cast<int>(generators_.size()) != env_.n_agents) {
        throw ConfigError(to_string(algorithm_) + " requires one preference generator per agent");
    }
}

env::JointAction Learner::act(const std::vector<Eigen::VectorXd>& obs,
                              const pref::GlobalPreference& global_pref) const {
    env::JointAction a(n_agents(), env_.action_dim());
    for (int i = 0; i < n_agents(); ++i) {
        a.row(i) = nn::actor_forward(actors_[i], obs.at(i),
                                     conditions_on_global_pref() ? &global_pref : nullptr)
                       .transpose();
    }
    return a;
}

std::vector<Matrix> Learner::next_prefs(const Batch& batch) const {
    if (algorithm_ == Algorithm::kGp) return batch.prefs;
    std::vector<Matrix> out;
    for (int i = 0; i < n_agents(); ++i) {
        out.push_back(pref::generate_batch(generators_[i], batch.next_obs[i]));
    }
    return out;
}

namespace {

Matrix flatten_prefs(const std::vector<Matrix>& prefs) {
    Index cols = 0;
    for (const auto& p : prefs) cols += p.cols();
    Matrix out(prefs.front().rows(), cols);
    Index at = 0;
    for (const auto& p : prefs) {
        out.middleCols(at, p.cols()) = p;
        at += p.cols();
    }
    return out;
}

std::vector<Tensor> constants(const std::vector<Matrix>& ms) {
    std::vector<Tensor> out;
    out.reserve(ms.size());
    for (const auto& m : ms) out.push_back(ad::constant(m));
    return out;
}

double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (const double x : xs) s += x;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

}  // namespace

std::vector<Matrix> Learner::target_next_actions(const Batch& batch,
                                                 const std::vector<Matrix>& next_prefs) const {
    const Matrix flat = flatten_prefs(next_prefs);
    std::vector<Matrix> out;
    for (int j = 0; j < n_agents(); ++j) out.push_back(actor_fn(target_actors_[j])(batch.next_obs[j], flat));
    return out;
}

void Learner::soft_update_targets() {
    soft_update(actor_parameters(), target_actor_parameters(), train_.tau);
    soft_update(critic_parameters(), target_critic_parameters(), train_.tau);
}

UpdateStats Learner::update(const Batch& batch, Rng& rng) {
    const auto targets = motd_targets(batch, rng);
    UpdateStats stats;
    stats.critic_losses = critic_update(batch, targets);
    stats.mean_loss = mean_of(stats.critic_losses);
    actor_update(batch);
    soft_update_targets();
    return stats;
}

nn::ParameterList Learner::actor_parameters() const {
    nn::ParameterList out;
    for (const auto& a : actors_) {
        const auto p = a.parameters();
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

nn::ParameterList Learner::target_actor_parameters() const {
    nn::ParameterList out;
    for (const auto& a : target_actors_) {
        const auto p = a.parameters();
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

nn::ParameterList Learner::online_parameters() const {
    auto out = actor_parameters();
    const auto c = critic_parameters();
    out.insert(out.end(), c.begin(), c.end());
    return out;
}

nn::ParameterList Learner::target_parameters() const {
    auto out = target_actor_parameters();
    const auto c = target_critic_parameters();
    out.insert(out.end(), c.begin(), c.end());
    return out;
}

nn::ParameterList Learner::all_parameters() const {
    auto out = online_parameters();
    auto targets = target_parameters();
    // Target tensors share names with their sources; prefix them for the checkpoint.
    for (auto& t : targets) {
        if (t->name.rfind("target.", 0) != 0) t->name = "target." + t->name;
    }
    out.insert(out.end(), targets.begin(), targets.end());
    return out;
}

namespace {

nn::ParameterList concat_params(const std::vector<nn::MlpCritic>& critics) {
    nn::ParameterList out;
    for (const auto& c : critics) {
        const auto p = c.parameters();
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Centralised MLP critics: the global-preference critic and the scalar baseline.

class CentralLearner final : public Learner {
public:
    CentralLearner(Algorithm algorithm, env::EnvConfig env, TrainConfig train,
                   std::vector<pref::PreferenceGenerator> generators, Rng& rng)
        : Learner(algorithm, std::move(env), train, std::move(generators), rng) {
        const Index n = env_.n_agents;
        const Index input = env_.state_dim() + n * env_.action_dim() + n * env_.reward_dim();
        const Index out = algorithm_ == Algorithm::kScalarized ? 1 : env_.reward_dim();
        for (int i = 0; i < env_.n_agents; ++i) {
            critics_.push_back(nn::MlpCritic::create(input, out, rng,
                                                     "critic" + std::to_string(i),
                                                     train_.critic_width));
            target_critics_.push_back(nn::clone_as_target(critics_.back()));
            critic_opts_.emplace_back(critics_.back().parameters(), train_.critic_lr);
        }
    }

    std::vector<Matrix> motd_targets(const Batch& batch, Rng& rng) const override {
        const auto w_next = next_prefs(batch);
        const Matrix flat_next = flatten_prefs(w_next);
        const auto a_next = target_next_actions(batch, w_next);
        std::vector<Matrix> y;
        for (int i = 0; i < n_agents(); ++i) {
            auto actions = a_next;
            if (algorithm_ == Algorithm::kGp) {
                actions[i] = gpi_select_actions(actor_fn(target_actors_[i]),
                                                gp_critic_fn(target_critics_[i]), i,
                                                env_.reward_dim(), batch.next_state,
                                                batch.next_obs[i], a_next, flat_next, rng,
                                                train_.gpi_candidates)
                                 .actions;
            }
            const Matrix q_next = gp_critic_fn(target_critics_[i])(batch.next_state, actions, flat_next);
            Matrix r = batch.rewards[i];
            if (algorithm_ == Algorithm::kScalarized) {
                r = batch.rewards[i].cwiseProduct(batch.prefs[i]).rowwise().sum();
            }
            y.push_back(r + train_.gamma * q_next);
        }
        return y;
    }

    std::vector<double> critic_loss(const Batch& batch,
                                    const std::vector<Matrix>& targets) const override {
        std::vector<double> losses;
        for (int i = 0; i < n_agents(); ++i) {
            Tape tape(Tape::Mode::kInference);
            losses.push_back(motd_loss(tape, q_online(tape, i, batch), targets.at(i))->value(0, 0));
        }
        return losses;
    }

    std::vector<double> critic_update(const Batch& batch,
                                      const std::vector<Matrix>& targets) override {
        std::vector<double> losses;
        for (int i = 0; i < n_agents(); ++i) {
            Tape tape;
            const Tensor loss = motd_loss(tape, q_online(tape, i, batch), targets.at(i));
            if (!std::isfinite(loss->value(0, 0))) {
                throw DivergedTrainingError("critic" + std::to_string(i),
                                            "critic loss is not finite");
            }
            tape.backward(loss);
            critic_opts_[i].step();
            losses.push_back(loss->value(0, 0));
        }
        return losses;
    }

    void actor_update(const Batch& batch) override {
        const Tensor state = ad::constant(batch.state);
        const Tensor flat = ad::constant(batch.flat_prefs);
        const std::vector<Tensor> actions = constants(batch.actions);
        for (int i = 0; i < n_agents(); ++i) {
            nn::FreezeGuard freeze(critics_[i].parameters());
            const auto q_of_action = [&](Tape& tape, const Tensor& a) {
                auto acts = actions;
                acts[i] = a;
                return critics_[i].forward(tape, nn::gp_critic_input(tape, state, acts, flat));
            };
            const Matrix weights = algorithm_ == Algorithm::kScalarized
                                       ? Matrix::Ones(batch.size, 1)
                                       : batch.prefs[i];
            const Matrix* prefs = conditions_on_global_pref() ? &batch.flat_prefs : nullptr;
            actor_step(actors_[i], actor_opts_[i], batch.obs[i], prefs, weights, q_of_action);
        }
    }

    nn::ParameterList critic_parameters() const override { return concat_params(critics_); }
    nn::ParameterList target_critic_parameters() const override {
        return concat_params(target_critics_);
    }

    const nn::MlpCritic& critic(int i) const { return critics_.at(i); }
    const nn::MlpCritic& target_critic(int i) const { return target_critics_.at(i); }

private:
    Tensor q_online(Tape& tape, int i, const Batch& batch) const {
        const Tensor input = nn::gp_critic_input(tape, ad::constant(batch.state),
                                                 constants(batch.actions),
                                                 ad::constant(batch.flat_prefs));
        return critics_[i].forward(tape, input);
    }

    std::vector<nn::MlpCritic> critics_;
    std::vector<nn::MlpCritic> target_critics_;
    std::vector<Optimizer> critic_opts_;
};

// ---------------------------------------------------------------------------
// Local-input ablation: critic i sees only (o_i, a_i, w_i).

class LocalLearner final : public Learner {
public:
    LocalLearner(env::EnvConfig env, TrainConfig train,
                 std::vector<pref::PreferenceGenerator> generators, Rng& rng)
        : Learner(Algorithm::kIp, std::move(env), train, std::move(generators), rng) {
        const Index input = env_.observation_dim() + env_.action_dim() + env_.reward_dim();
        for (int i = 0; i < env_.n_agents; ++i) {
            critics_.push_back(nn::MlpCritic::create(input, env_.reward_dim(), rng,
                                                     "critic" + std::to_string(i),
                                                     train_.critic_width));
            target_critics_.push_back(nn::clone_as_target(critics_.back()));
            critic_opts_.emplace_back(critics_.back().parameters(), train_.critic_lr);
        }
    }

    std::vector<Matrix> motd_targets(const Batch& batch, Rng&) const override {
        const auto w_next = next_prefs(batch);
        const auto a_next = target_next_actions(batch, w_next);
        std::vector<Matrix> y;
        for (int i = 0; i < n_agents(); ++i) {
            Tape tape(Tape::Mode::kInference);
            const Tensor input = ad::concat_cols(
                tape, {ad::constant(batch.next_obs[i]), ad::constant(a_next[i]),
                       ad::constant(w_next[i])});
            y.push_back(batch.rewards[i] +
                        train_.gamma * target_critics_[i].forward(tape, input)->value);
        }
        return y;
    }

    std::vector<double> critic_loss(const Batch& batch,
                                    const std::vector<Matrix>& targets) const override {
        std::vector<double> losses;
        for (int i = 0; i < n_agents(); ++i) {
            Tape tape(Tape::Mode::kInference);
            const Tensor q = critics_[i].forward(tape, local_input(tape, batch, i,
                                                                   ad::constant(batch.actions[i])));
            losses.push_back(motd_loss(tape, q, targets.at(i))->value(0, 0));
        }
        return losses;
    }

    std::vector<double> critic_update(const Batch& batch,
                                      const std::vector<Matrix>& targets) override {
        std::vector<double> losses;
        for (int i = 0; i < n_agents(); ++i) {
            Tape tape;
            const Tensor q = critics_[i].forward(tape, local_input(tape, batch, i,
                                                                   ad::constant(batch.actions[i])));
            const Tensor loss = motd_loss(tape, q, targets.at(i));
            if (!std::isfinite(loss->value(0, 0))) {
                throw DivergedTrainingError("critic" + std::to_string(i),
                                            "critic loss is not finite");
            }
            tape.backward(loss);
            critic_opts_[i].step();
            losses.push_back(loss->value(0, 0));
        }
        return losses;
    }

    void actor_update(const Batch& batch) override {
        for (int i = 0; i < n_agents(); ++i) {
            nn::FreezeGuard freeze(critics_[i].parameters());
            const auto q_of_action = [&](Tape& tape, const Tensor& a) {
                return critics_[i].forward(tape, local_input(tape, batch, i, a));
            };
            actor_step(actors_[i], actor_opts_[i], batch.obs[i], nullptr, batch.prefs[i],
                       q_of_action);
        }
    }

    nn::ParameterList critic_parameters() const override { return concat_params(critics_); }
    nn::ParameterList target_critic_parameters() const override {
        return concat_params(target_critics_);
    }

private:
    static Tensor local_input(Tape& tape, const Batch& batch, int i, const Tensor& action) {
        return ad::concat_cols(tape, {ad::constant(batch.obs[i]), action,
                                      ad::constant(batch.prefs[i])});
    }

    std::vector<nn::MlpCritic> critics_;
    std::vector<nn::MlpCritic> target_critics_;
    std::vector<Optimizer> critic_opts_;
};

// ---------------------------------------------------------------------------
// Agent-attention critic.

class AttentionLearner final : public Learner {
public:
    AttentionLearner(env::EnvConfig env, TrainConfig train,
                     std::vector<pref::PreferenceGenerator> generators, Rng& rng)
        : Learner(Algorithm::kAa, std::move(env), train, std::move(generators), rng) {
        nn::AttentionConfig config;
        config.embed_relu = train_.embed_relu;
        const std::vector<Index> obs_dims(static_cast<std::size_t>(env_.n_agents),
                                          env_.observation_dim());
        critic_ = nn::AttentionCritic::create(obs_dims, env_.action_dim(), env_.reward_dim(), rng,
                                              "critic", config);
        target_critic_ = nn::clone_as_target(critic_);
        critic_opt_ = Optimizer(critic_.parameters(), train_.critic_lr);
    }

    // The actor is preference-free, so every candidate preference induces the same
    // action and the GPI choice reduces to mu'_i(o'_i).
    std::vector<Matrix> motd_targets(const Batch& batch, Rng&) const override {
        const auto w_next = next_prefs(batch);
        const auto a_next = target_next_actions(batch, w_next);
        Tape tape(Tape::Mode::kInference);
        const auto q_next = target_critic_.forward(tape, constants(batch.next_obs),
                                                   constants(a_next), constants(w_next));
        std::vector<Matrix> y;
        for (int i = 0; i < n_agents(); ++i) {
            y.push_back(batch.rewards[i] + train_.gamma * q_next[i]->value);
        }
        return y;
    }

    std::vector<double> critic_loss(const Batch& batch,
                                    const std::vector<Matrix>& targets) const override {
        Tape tape(Tape::Mode::kInference);
        const auto q = critic_.forward(tape, constants(batch.obs), constants(batch.actions),
                                       constants(batch.prefs));
        std::vector<double> losses;
        for (int i = 0; i < n_agents(); ++i) {
            losses.push_back(motd_loss(tape, q[i], targets.at(i))->value(0, 0));
        }
        return losses;
    }

    // The summed loss drives one step of every critic tensor. Output head i only
    // reaches loss i; the shared block and the embeddings feed all of them.
    std::vector<double> critic_update(const Batch& batch,
                                      const std::vector<Matrix>& targets) override {
        Tape tape;
        const auto q = critic_.forward(tape, constants(batch.obs), constants(batch.actions),
                                       constants(batch.prefs));
        std::vector<double> losses;
        Tensor total;
        for (int i = 0; i < n_agents(); ++i) {
            const Tensor loss = motd_loss(tape, q[i], targets.at(i));
            losses.push_back(loss->value(0, 0));
            total = total ? ad::add(tape, total, loss) : loss;
        }
        if (!std::isfinite(total->value(0, 0))) {
            throw DivergedTrainingError("critic", "attention critic loss is not finite");
        }
        tape.backward(total);
        critic_opt_.step();
        return losses;
    }

    void actor_update(const Batch& batch) override {
        const auto obs = constants(batch.obs);
        const auto prefs = constants(batch.prefs);
        const auto actions = constants(batch.actions);
        nn::FreezeGuard freeze(critic_.parameters());
        for (int i = 0; i < n_agents(); ++i) {
            const auto q_of_action = [&](Tape& tape, const Tensor& a) {
                auto acts = actions;
                acts[i] = a;
                return critic_.forward(tape, obs, acts, prefs, i)[i];
            };
            actor_step(actors_[i], actor_opts_[i], batch.obs[i], nullptr, batch.prefs[i],
                       q_of_action);
        }
    }

    nn::ParameterList critic_parameters() const override { return critic_.parameters(); }
    nn::ParameterList target_critic_parameters() const override {
        return target_critic_.parameters();
    }

private:
    nn::AttentionCritic critic_;
    nn::AttentionCritic target_critic_;
    Optimizer critic_opt_;
};

}  // namespace

std::unique_ptr<Learner> make_learner(Algorithm algorithm, const env::EnvConfig& env,
                                      const TrainConfig& train,
                                      std::vector<pref::PreferenceGenerator> generators, Rng& rng) {
    env.validate();
    train.validate();
    switch (algorithm) {
        case Algorithm::kGp:
        case Algorithm::kScalarized:
            return std::make_unique<CentralLearner>(algorithm, env, train, std::move(generators),
                                                    rng);
        case Algorithm::kIp:
            return std::make_unique<LocalLearner>(env, train, std::move(generators), rng);
        case Algorithm::kAa:
            return std::make_unique<AttentionLearner>(env, train, std::move(generators), rng);
    }
    throw ConfigError("unknown algorithm");
}

// ---------------------------------------------------------------------------
// Training loop and rollouts

pref::PreferenceProvider make_preferences(const PreferenceSetup& setup, const env::EnvConfig& env) {
    if (setup.kind == PreferenceCase::kRandom) {
        return pref::PreferenceProvider::random(env.n_agents, env.reward_dim());
    }
    return pref::PreferenceProvider::observation(pref::build_generators(
        setup.generator_seed, env.n_agents, env.reward_dim(), env.observation_dim(), setup.scale));
}

namespace {

enum Stream : std::uint64_t { kInit = 0, kEnv, kNoise, kReplay, kPrefs, kGpi };

}  // namespace

TrainResult run_training(Algorithm algorithm, const env::EnvConfig& env, const TrainConfig& train,
                         const PreferenceSetup& setup, std::uint64_t seed,
                         const EpisodeCallback& on_episode) {
    env.validate();
    train.validate();
    if (setup.kind != required_case(algorithm)) {
        throw ConfigError(to_string(algorithm) + " requires " + to_string(required_case(algorithm)) +
                          " preferences");
    }
    Rng init_rng(derive_seed(seed, kInit));
    Rng env_rng(derive_seed(seed, kEnv));
    Rng noise_rng(derive_seed(seed, kNoise));
    Rng replay_rng(derive_seed(seed, kReplay));
    Rng pref_rng(derive_seed(seed, kPrefs));
    Rng gpi_rng(derive_seed(seed, kGpi));

    TrainResult result;
    result.preferences = make_preferences(setup, env);
    result.learner =
        make_learner(algorithm, env, train, result.preferences.generators(), init_rng);
    Learner& learner = *result.learner;
    ReplayBuffer buffer(train.buffer_capacity);

    std::int64_t env_steps = 0;
    std::int64_t updates = 0;
    for (int episode = 0; episode < train.episodes; ++episode) {
        const auto started = std::chrono::steady_clock::now();
        auto [state, obs] = env::reset(env, env_rng);
        result.preferences.begin_episode(pref_rng);
        EpisodeLog row;
        row.episode = episode;
        row.returns.assign(static_cast<std::size_t>(env.n_agents), 0.0);
        std::vector<double> losses;
        bool done = false;
        while (!done) {
            const pref::GlobalPreference W = result.preferences.current(obs);
            const env::JointAction action =
                exploration_noise(learner.act(obs, W), updates, train, noise_rng);
            env::StepResult next = env::step(state, action, env);

            Transition t;
            t.state = state.flatten(env);
            t.actions = action;
            t.rewards.resize(env.n_agents, env.reward_dim());
            for (int i = 0; i < env.n_agents; ++i) {
                t.rewards.row(i) = next.rewards[i].transpose();
                row.returns[i] += scalarize(W[i], next.rewards[i]);
            }
            t.next_state = next.state.flatten(env);
            t.prefs = pref::stack(W);
            t.obs = obs;
            t.next_obs = next.observations;
            t.done = next.done;
            if (!t.is_finite()) {
                throw DivergedTrainingError("environment", "non-finite transition at env step " +
                                                               std::to_string(env_steps));
            }
            buffer.push(std::move(t));
            ++env_steps;

            if (env_steps >= train.warmup_steps && env_steps % train.update_every == 0) {
                if (auto sample = buffer.sample(replay_rng, train.batch)) {
                    try {
                        const UpdateStats stats = learner.update(collate(*sample), gpi_rng);
                        losses.push_back(stats.mean_loss);
                        result.loss_history.push_back(stats.mean_loss);
                        ++updates;
                    } catch (const DivergedTrainingError& e) {
                        throw DivergedTrainingError(e.parameter(),
                                                    "training diverged at env step " +
                                                        std::to_string(env_steps) + ": " + e.what());
                    } catch (const NumericInputError& e) {
                        throw DivergedTrainingError("", "training diverged at env step " +
                                                            std::to_string(env_steps) + ": " +
                                                            e.what());
                    }
                }
            }
            state = std::move(next.state);
            obs = std::move(next.observations);
            done = next.done;
        }
        row.env_steps = env_steps;
        row.mean_loss = losses.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_of(losses);
        row.sigma = noise_sigma(updates, train);
        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                                started)
                          .count();
        if (on_episode) on_episode(row, learner);
        result.log.push_back(std::move(row));
    }
    return result;
}

metrics::EpisodeTrace rollout(const Learner* learner, const env::EnvConfig& env,
                              pref::PreferenceProvider preferences, std::uint64_t episode_seed) {
    Rng rng(episode_seed);
    auto [state, obs] = env::reset(env, rng);
    preferences.begin_episode(rng);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    metrics::EpisodeTrace trace;
    bool done = false;
    while (!done) {
        const pref::GlobalPreference W = preferences.current(obs);
        env::JointAction action(env.n_agents, env.action_dim());
        if (learner) {
            action = learner->act(obs, W);
        } else {
            for (Index r = 0; r < action.rows(); ++r) {
                for (Index c = 0; c < action.cols(); ++c) action(r, c) = unit(rng);
            }
        }
        env::StepResult next = env::step(state, action, env);
        trace.rewards.push_back(next.rewards);
        trace.prefs.push_back(W);
        state = std::move(next.state);
        obs = std::move(next.observations);
        done = next.done;
    }
    return trace;
}

metrics::RolloutFn make_rollout(const Learner* learner, const env::EnvConfig& env,
                                const pref::PreferenceProvider& preferences) {
    return [learner, env, preferences](std::uint64_t episode_seed) {
        return rollout(learner, env, preferences, episode_seed);
    };
}

pref::PreferenceProvider sweep_preferences(const pref::PreferenceProvider& base,
                                           const Eigen::VectorXd& grid_point, int n_agents) {
    if (base.kind() == pref::PreferenceProvider::Kind::kObservation) {
        auto gens = base.generators();
        for (auto& g : gens) {
            if (g.bias.size() != grid_point.size()) {
                throw DimensionError("sweep_preferences: grid point has wrong dimension");
            }
            g.bias = kSweepBiasShift * grid_point;
        }
        return pref::PreferenceProvider::observation(std::move(gens));
    }
    return pref::PreferenceProvider::fixed(
        pref::GlobalPreference(static_cast<std::size_t>(n_agents), grid_point));
}

metrics::ParetoFront sweep_front(const Learner* learner, const env::EnvConfig& env,
                                 const pref::PreferenceProvider& base,
                                 const std::vector<Eigen::VectorXd>& grid, int episodes_per_point,
                                 std::uint64_t seed) {
    if (episodes_per_point < 1) throw ConfigError("sweep_front: need at least one episode");
    const auto evaluate = [&](const Eigen::VectorXd& w) {
        const auto provider = sweep_preferences(base, w, env.n_agents);
        Eigen::VectorXd total = Eigen::VectorXd::Zero(env.reward_dim());
        for (int k = 0; k < episodes_per_point; ++k) {
            const auto trace =
                rollout(learner, env, provider, derive_seed(seed, static_cast<std::uint64_t>(k)));
            for (std::size_t i = 0; i < trace.n_agents(); ++i) total += trace.return_vector(i);
        }
        return Eigen::VectorXd(total / static_cast<double>(episodes_per_point * env.n_agents));
    };
    return metrics::build_front_from_sweep(evaluate, grid);
}

}  // namespace mamorl::train
