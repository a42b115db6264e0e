#pragma once

#include "mamorl/env.hpp"
#include "mamorl/metrics.hpp"
#include "mamorl/networks.hpp"
#include "mamorl/optim.hpp"
#include "mamorl/preferences.hpp"
#include "mamorl/replay.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mamorl::train {

using ad::Matrix;

/// gp: global-preference actor and critic (random preferences).
/// aa: preference-free actor with the agent-attention critic.
/// ip: preference-free actor with a critic that only sees (o_i, a_i, w_i).
/// scalarized: preference-free actor with a scalar critic on w_i . r_i.
enum class Algorithm { kGp, kAa, kIp, kScalarized };

std::string to_string(Algorithm algorithm);
Algorithm algorithm_from_string(const std::string& name);

enum class PreferenceCase { kRandom, kObservation };

std::string to_string(PreferenceCase kind);
PreferenceCase preference_case_from_string(const std::string& name);

/// gp trains on random preferences; the other variants need observation-driven ones.
PreferenceCase required_case(Algorithm algorithm);

struct PreferenceSetup {
    PreferenceCase kind = PreferenceCase::kObservation;
    std::uint64_t generator_seed = 1;
    double scale = 1.0;
};

struct TrainConfig {
    double gamma = 0.99;
    double tau = 0.005;
    std::size_t batch = 128;
    std::size_t buffer_capacity = ReplayBuffer::kDefaultCapacity;
    double actor_lr = 5e-4;
    double critic_lr = 3e-4;
    int gpi_candidates = 32;
    double noise_sigma_start = 0.3;
    double noise_sigma_end = 0.02;
    /// Counted in update windows.
    std::int64_t noise_decay_steps = 4000;
    int update_every = 1;
    int warmup_steps = 1000;
    int episodes = 200;
    bool embed_relu = true;
    int critic_width = 256;
    /// Episodes between checkpoints written by the harness; 0 disables.
    int checkpoint_every = 0;

    void validate() const;
};

/// Column-stacked view of a sampled batch.
struct Batch {
    ad::Index size = 0;
    Matrix state;
    Matrix next_state;
    std::vector<Matrix> obs;       // per agent, B x obs_dim
    std::vector<Matrix> next_obs;  // per agent
    std::vector<Matrix> actions;   // per agent, B x action_dim
    std::vector<Matrix> rewards;   // per agent, B x m
    std::vector<Matrix> prefs;     // per agent, B x M
    Matrix flat_prefs;             // B x (N * M), agent-major

    std::size_t n_agents() const { return obs.size(); }
};

Batch collate(const std::vector<Transition>& transitions);

/// Dot product w . v.
double scalarize(const Eigen::VectorXd& w, const Eigen::VectorXd& v);

/// Linearly annealed exploration scale after `step` update windows.
double noise_sigma(std::int64_t step, const TrainConfig& config);

/// Adds i.i.d. Gaussian noise of scale noise_sigma(step) and clamps to [-1, 1].
Matrix exploration_noise(const Matrix& action, std::int64_t step, const TrainConfig& config,
                         Rng& rng);

/// target <- tau * online + (1 - tau) * target, elementwise.
void soft_update(const nn::ParameterList& online, const nn::ParameterList& target, double tau);

/// Mean over rows of the squared error summed over columns.
ad::Tensor motd_loss(ad::Tape& tape, const ad::Tensor& q, const Matrix& y);

/// A parameter list paired with Adam states.
struct Optimizer {
    nn::ParameterList params;
    std::vector<ad::AdamState> states;
    double lr = 1e-3;

    Optimizer() = default;
    Optimizer(nn::ParameterList params, double lr);
    void step();
};

/// B x m action values as a function of one agent's action (recorded on the tape).
using ActionValueFn = std::function<ad::Tensor(ad::Tape&, const ad::Tensor& action)>;

/// Negated mean preference-scalarised action value with the actor's own action
/// substituted: -(1/B) sum_b w_b . Q(mu(o_b)).
ad::Tensor actor_objective(ad::Tape& tape, const nn::Actor& actor, const Matrix& obs,
                           const Matrix* flat_prefs, const Matrix& weights,
                           const ActionValueFn& q_of_action);

/// One deterministic policy-gradient step on the actor. Returns the objective before the step.
double actor_step(const nn::Actor& actor, Optimizer& optimizer, const Matrix& obs,
                  const Matrix* flat_prefs, const Matrix& weights,
                  const ActionValueFn& q_of_action);

/// Batched actor: (obs B x o, flat prefs B x NM or empty) -> B x action_dim.
using ActorFn = std::function<Matrix(const Matrix& obs, const Matrix& flat_prefs)>;
/// Batched critic: (state, per-agent actions, flat prefs) -> B x m.
using CriticFn = std::function<Matrix(const Matrix& state, const std::vector<Matrix>& actions,
                                      const Matrix& flat_prefs)>;

ActorFn actor_fn(const nn::Actor& actor);
CriticFn gp_critic_fn(const nn::MlpCritic& critic);

struct GpiSelection {
    Matrix actions;                  // B x action_dim
    Eigen::VectorXd chosen_scores;   // w_i . Q at the returned action
    Eigen::VectorXd plain_scores;    // w_i . Q at mu_i(o_i, W)
    std::vector<int> chosen;         // winning candidate index per sample; 0 is the true preference
    std::vector<Matrix> candidates;  // per sample, (K + 1) x M own-preference candidates
};

/// Generalised policy improvement over the agent's own preference: candidate 0
/// is the true w_i, candidates 1..K are uniform simplex draws; each candidate
/// W' induces mu_i(o_i, W'), scored by w_i . Q_i(s, a_{-i}, mu_i(o_i, W'), W').
/// Ties keep the lowest candidate index.
GpiSelection gpi_select_actions(const ActorFn& actor, const CriticFn& critic, int agent,
                                int n_objectives, const Matrix& state, const Matrix& obs,
                                const std::vector<Matrix>& actions, const Matrix& flat_prefs,
                                Rng& rng, int n_candidates);

/// Single-sample form.
Eigen::VectorXd gpi_select_action(const nn::Actor& actor, const nn::MlpCritic& critic,
                                  const Eigen::VectorXd& state, const Eigen::VectorXd& obs,
                                  const env::JointAction& joint_action,
                                  const pref::GlobalPreference& global_pref, int agent, Rng& rng,
                                  int n_candidates);

struct UpdateStats {
    std::vector<double> critic_losses;
    double mean_loss = 0.0;
};

/// Online and target networks of one variant plus their optimisers.
class Learner {
public:
    virtual ~Learner() = default;

    Algorithm algorithm() const { return algorithm_; }
    bool conditions_on_global_pref() const { return algorithm_ == Algorithm::kGp; }
    int n_agents() const { return env_.n_agents; }
    const env::EnvConfig& env_config() const { return env_; }
    const TrainConfig& train_config() const { return train_; }
    const std::vector<pref::PreferenceGenerator>& generators() const { return generators_; }

    const nn::Actor& actor(int agent) const { return actors_.at(agent); }
    const nn::Actor& target_actor(int agent) const { return target_actors_.at(agent); }

    /// Greedy joint action.
    env::JointAction act(const std::vector<Eigen::VectorXd>& obs,
                         const pref::GlobalPreference& global_pref) const;

    /// Vector Bellman targets y_i = r_i + gamma Q'_i(...) per agent (B x m, or B x 1 for the
    /// scalar baseline). Built entirely from target networks.
    virtual std::vector<Matrix> motd_targets(const Batch& batch, Rng& rng) const = 0;

    /// One optimiser step on every critic; returns the per-agent losses before the step.
    virtual std::vector<double> critic_update(const Batch& batch,
                                              const std::vector<Matrix>& targets) = 0;

    /// Per-agent losses without stepping.
    virtual std::vector<double> critic_loss(const Batch& batch,
                                            const std::vector<Matrix>& targets) const = 0;

    /// One policy-gradient step per actor with other agents' actions taken from the batch.
    virtual void actor_update(const Batch& batch) = 0;

    void soft_update_targets();

    /// Targets, critic step, actor step, soft update.
    UpdateStats update(const Batch& batch, Rng& rng);

    virtual nn::ParameterList critic_parameters() const = 0;
    virtual nn::ParameterList target_critic_parameters() const = 0;
    nn::ParameterList actor_parameters() const;
    nn::ParameterList target_actor_parameters() const;
    nn::ParameterList online_parameters() const;
    nn::ParameterList target_parameters() const;
    /// Online then target parameters; the checkpoint payload.
    nn::ParameterList all_parameters() const;

protected:
    Learner(Algorithm algorithm, env::EnvConfig env, TrainConfig train,
            std::vector<pref::PreferenceGenerator> generators, Rng& rng);

    /// Next-step preferences per agent: W for random preferences, generators on s' otherwise.
    std::vector<Matrix> next_prefs(const Batch& batch) const;
    /// mu'_j(o'_j[, W']) for every agent.
    std::vector<Matrix> target_next_actions(const Batch& batch,
                                            const std::vector<Matrix>& next_prefs) const;

    Algorithm algorithm_;
    env::EnvConfig env_;
    TrainConfig train_;
    std::vector<pref::PreferenceGenerator> generators_;
    std::vector<nn::Actor> actors_;
    std::vector<nn::Actor> target_actors_;
    std::vector<Optimizer> actor_opts_;
};

std::unique_ptr<Learner> make_learner(Algorithm algorithm, const env::EnvConfig& env,
                                      const TrainConfig& train,
                                      std::vector<pref::PreferenceGenerator> generators, Rng& rng);

struct EpisodeLog {
    int episode = 0;
    std::int64_t env_steps = 0;
    std::vector<double> returns;  // per-agent scalarised training return
    double mean_loss = 0.0;       // mean critic loss over the episode's updates (NaN if none)
    double sigma = 0.0;
    double wall_ms = 0.0;
};

struct TrainResult {
    std::unique_ptr<Learner> learner;
    std::vector<EpisodeLog> log;
    /// Agent-averaged critic loss of every update, in order.
    std::vector<double> loss_history;
    pref::PreferenceProvider preferences;
};

/// Preference source used during training and evaluation of `setup`.
pref::PreferenceProvider make_preferences(const PreferenceSetup& setup, const env::EnvConfig& env);

using EpisodeCallback = std::function<void(const EpisodeLog&, const Learner&)>;

/// Full training loop; throws DivergedTrainingError naming the env step on NaN.
TrainResult run_training(Algorithm algorithm, const env::EnvConfig& env, const TrainConfig& train,
                         const PreferenceSetup& setup, std::uint64_t seed,
                         const EpisodeCallback& on_episode = {});

/// Greedy rollout of `learner` (uniform-random actions when null) from the initial
/// state drawn with `episode_seed`.
metrics::EpisodeTrace rollout(const Learner* learner, const env::EnvConfig& env,
                              pref::PreferenceProvider preferences, std::uint64_t episode_seed);

metrics::RolloutFn make_rollout(const Learner* learner, const env::EnvConfig& env,
                                const pref::PreferenceProvider& preferences);

/// Softmax bias shift that tilts observation-driven preferences toward a sweep point.
inline constexpr double kSweepBiasShift = 5.0;

/// Preference source for one sweep point: injected directly for random-preference
/// variants, bias-shifted generators otherwise.
pref::PreferenceProvider sweep_preferences(const pref::PreferenceProvider& base,
                                           const Eigen::VectorXd& grid_point, int n_agents);

/// Pareto front of agent-averaged undiscounted return vectors over a preference grid.
metrics::ParetoFront sweep_front(const Learner* learner, const env::EnvConfig& env,
                                 const pref::PreferenceProvider& base,
                                 const std::vector<Eigen::VectorXd>& grid, int episodes_per_point,
                                 std::uint64_t seed);

}  // namespace mamorl::train
