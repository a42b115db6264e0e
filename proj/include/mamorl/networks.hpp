#pragma once

#include "mamorl/autodiff.hpp"
#include "mamorl/preferences.hpp"
#include "mamorl/rng.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mamorl::nn {

using ad::Index;
using ad::Matrix;
using ad::Tape;
using ad::Tensor;

/// Parameters in a fixed, deterministic order; names live on the nodes.
using ParameterList = std::vector<Tensor>;

struct Linear {
    Tensor weight;  // in x out
    Tensor bias;    // [out]

    /// Uniform(-range, range) init; range defaults to 1/sqrt(in).
    static Linear create(Index in, Index out, Rng& rng, const std::string& name,
                         double range = -1.0);

    Tensor operator()(Tape& tape, const Tensor& x) const;
    Index in_dim() const { return weight->rows(); }
    Index out_dim() const { return weight->cols(); }
    void collect(ParameterList& out) const;
};

struct LayerNorm {
    Tensor gain;
    Tensor bias;

    static LayerNorm create(Index dim, const std::string& name);
    Tensor operator()(Tape& tape, const Tensor& x) const;
    void collect(ParameterList& out) const;
};

/// Plain ReLU perceptron; the last layer is linear.
struct Mlp {
    std::vector<Linear> layers;

    static Mlp create(const std::vector<Index>& dims, Rng& rng, const std::string& name);
    Tensor operator()(Tape& tape, const Tensor& x) const;
    void collect(ParameterList& out) const;
};

/// Deterministic actor: obs (+ flattened global preference) -> 128 -> 256 -> action,
/// LayerNorm + ReLU after each hidden layer, tanh head.
struct Actor {
    Index obs_dim = 0;
    /// Width of the flattened global preference input; 0 for preference-free actors.
    Index pref_dim = 0;
    Index action_dim = 0;
    Linear hidden1;
    LayerNorm norm1;
    Linear hidden2;
    LayerNorm norm2;
    Linear head;

    static Actor create(Index obs_dim, Index pref_dim, Index action_dim, Rng& rng,
                        const std::string& name, Index width1 = 128, Index width2 = 256);

    /// obs: B x obs_dim; prefs: B x pref_dim, required iff pref_dim > 0.
    Tensor forward(Tape& tape, const Tensor& obs, const Tensor& prefs = nullptr) const;
    ParameterList parameters() const;
};

/// Single-sample convenience wrapper: action for one observation.
Eigen::VectorXd actor_forward(const Actor& actor, const Eigen::VectorXd& obs,
                              const pref::GlobalPreference* global_pref = nullptr);

/// Centralised vector critic over concat(s, a_1..a_N, flatten(W)) -> 256 -> 256 -> m.
/// Also serves the local-input ablation and the scalar baseline with other input/output widths.
struct MlpCritic {
    Index input_dim = 0;
    Index output_dim = 0;
    Mlp net;

    static MlpCritic create(Index input_dim, Index output_dim, Rng& rng, const std::string& name,
                            Index width = 256);
    Tensor forward(Tape& tape, const Tensor& input) const;
    ParameterList parameters() const;
};

/// Builds the critic input concat(s, a_1..a_N, flatten(W)) on the tape.
Tensor gp_critic_input(Tape& tape, const Tensor& state, const std::vector<Tensor>& actions,
                       const Tensor& flat_prefs);

/// Single-sample convenience wrapper.
Eigen::VectorXd gp_critic_forward(const MlpCritic& critic, const Eigen::VectorXd& state,
                                  const Eigen::MatrixXd& joint_action,
                                  const pref::GlobalPreference& global_pref);

struct AttentionConfig {
    Index embed_dim = 128;
    Index heads = 8;
    Index ffn_dim = 256;
    std::vector<Index> head_dims = {512, 256};
    bool embed_relu = true;
};

/// Agent-attention critic: per-agent embeddings, shared multi-head attention with
/// residual FFN and LayerNorm, per-agent vector-Q heads.
struct AttentionCritic {
    AttentionConfig config;
    std::vector<Index> obs_dims;
    Index action_dim = 0;
    Index n_objectives = 0;

    std::vector<Linear> embed;  // per agent: (o_i; a_i; w_i) -> d
    Tensor w_query;             // d x (heads * d_h), one column block per head
    Tensor w_key;
    Tensor w_value;
    Tensor w_out;  // (heads * d_h) x d
    Linear ffn1;
    Linear ffn2;
    LayerNorm norm;
    std::vector<Mlp> heads;  // per agent: d -> 512 -> 256 -> m

    static AttentionCritic create(const std::vector<Index>& obs_dims, Index action_dim,
                                  Index n_objectives, Rng& rng, const std::string& name,
                                  AttentionConfig config = {});

    Index n_agents() const { return static_cast<Index>(embed.size()); }
    Index head_dim() const { return config.embed_dim / config.heads; }

    /// x_i for agent i: B x d.
    Tensor embed_agent(Tape& tape, Index agent, const Tensor& obs, const Tensor& action,
                       const Tensor& pref) const;

    /// X is agent-major, (N * B) x d with row i * B + b. Returns rows of H_hat in the same layout.
    Tensor attention(Tape& tape, const Tensor& X, Index batch,
                     std::vector<Matrix>* weights = nullptr) const;

    /// LayerNorm(H + FFN(H)), row-wise.
    Tensor ffn_norm(Tape& tape, const Tensor& H) const;

    /// Q_i^att from agent i's slice of the normalised attention output.
    Tensor q_output(Tape& tape, Index agent, const Tensor& h_tilde_i) const;

    /// Per-agent B x m vector Q. With `only_agent` set, the other heads are skipped
    /// and their slots are left null.
    std::vector<Tensor> forward(Tape& tape, const std::vector<Tensor>& obs,
                                const std::vector<Tensor>& actions,
                                const std::vector<Tensor>& prefs,
                                std::optional<Index> only_agent = std::nullopt) const;

    ParameterList shared_parameters() const;
    ParameterList agent_parameters(Index agent) const;
    ParameterList parameters() const;
};

/// Deep copy into fresh tensors; nothing is shared with the source.
ParameterList clone_values(const ParameterList& params);
Actor clone_as_target(const Actor& actor);
MlpCritic clone_as_target(const MlpCritic& critic);
AttentionCritic clone_as_target(const AttentionCritic& critic);

/// Temporarily stops gradient tracking on a parameter list.
class FreezeGuard {
public:
    explicit FreezeGuard(ParameterList params);
    ~FreezeGuard();
    FreezeGuard(const FreezeGuard&) = delete;
    FreezeGuard& operator=(const FreezeGuard&) = delete;

private:
    ParameterList params_;
    std::vector<bool> saved_;
};

void zero_grads(const ParameterList& params);

inline constexpr const char* kCheckpointMagic = "MAMORL-CKPT-1";

/// Text checkpoint: magic line, then per tensor "name rows cols" and its values
/// (row-major, max_digits10).
void save_checkpoint(const std::string& path, const ParameterList& params);
/// Loads values by name into `params`; throws on missing names or shape mismatch.
void load_checkpoint(const std::string& path, const ParameterList& params);

}  // namespace mamorl::nn
