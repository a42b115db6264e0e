#include "mamorl/networks.hpp"

#include "mamorl/errors.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace mamorl::nn {

namespace {

Matrix uniform(Index rows, Index cols, double range, Rng& rng) {
    std::uniform_real_distribution<double> dist(-range, range);
    Matrix m(rows, cols);
    for (Index c = 0; c < cols; ++c) {
        for (Index r = 0; r < rows; ++r) m(r, c) = dist(rng);
    }
    return m;
}

Tensor param(Matrix value, const std::string& name) {
    return ad::make_tensor(std::move(value), true, name);
}

Tensor row_param(ad::RowVector value, const std::string& name) {
    return ad::make_vector(value, true, name);
}

Tensor deep(const Tensor& t) {
    auto copy = std::make_shared<ad::TensorNode>(*t);
    copy->grad.setZero();
    return copy;
}

Linear deep(const Linear& l) { return {deep(l.weight), deep(l.bias)}; }
LayerNorm deep(const LayerNorm& n) { return {deep(n.gain), deep(n.bias)}; }
Mlp deep(const Mlp& m) {
    Mlp out;
    for (const auto& l : m.layers) out.layers.push_back(deep(l));
    return out;
}

void expect_cols(const Tensor& t, Index cols, const char* what) {
    if (t->cols() != cols) {
        throw DimensionError(std::string(what) + ": expected " + std::to_string(cols) +
                             " columns, got " + ad::shape_string(*t));
    }
}

}  // namespace

Linear Linear::create(Index in, Index out, Rng& rng, const std::string& name, double range) {
    if (range < 0.0) range = 1.0 / std::sqrt(static_cast<double>(in));
    Linear l;
    l.weight = param(uniform(in, out, range, rng), name + ".weight");
    l.bias = row_param(uniform(1, out, range, rng), name + ".bias");
    return l;
}

Tensor Linear::operator()(Tape& tape, const Tensor& x) const {
    return ad::linear(tape, x, weight, bias);
}

void Linear::collect(ParameterList& out) const {
    out.push_back(weight);
    out.push_back(bias);
}

LayerNorm LayerNorm::create(Index dim, const std::string& name) {
    return {row_param(ad::RowVector::Ones(dim), name + ".gain"),
            row_param(ad::RowVector::Zero(dim), name + ".bias")};
}

Tensor LayerNorm::operator()(Tape& tape, const Tensor& x) const {
    return ad::layer_norm(tape, x, gain, bias);
}

void LayerNorm::collect(ParameterList& out) const {
    out.push_back(gain);
    out.push_back(bias);
}

Mlp Mlp::create(const std::vector<Index>& dims, Rng& rng, const std::string& name) {
    Mlp m;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        m.layers.push_back(Linear::create(dims[k], dims[k + 1], rng, name + ".l" + std::to_string(k)));
    }
    return m;
}

Tensor Mlp::operator()(Tape& tape, const Tensor& x) const {
    Tensor h = x;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        h = layers[k](tape, h);
        if (k + 1 < layers.size()) h = ad::relu(tape, h);
    }
    return h;
}

void Mlp::collect(ParameterList& out) const {
    for (const auto& l : layers) l.collect(out);
}

Actor Actor::create(Index obs_dim, Index pref_dim, Index action_dim, Rng& rng,
                    const std::string& name, Index width1, Index width2) {
    Actor a;
    a.obs_dim = obs_dim;
    a.pref_dim = pref_dim;
    a.action_dim = action_dim;
    a.hidden1 = Linear::create(obs_dim + pref_dim, width1, rng, name + ".hidden1");
    a.norm1 = LayerNorm::create(width1, name + ".norm1");
    a.hidden2 = Linear::create(width1, width2, rng, name + ".hidden2");
    a.norm2 = LayerNorm::create(width2, name + ".norm2");
    a.head = Linear::create(width2, action_dim, rng, name + ".head", 3e-3);
    return a;
}

Tensor Actor::forward(Tape& tape, const Tensor& obs, const Tensor& prefs) const {
    expect_cols(obs, obs_dim, "actor observation");
    Tensor input = obs;
    if (pref_dim > 0) {
        if (!prefs) throw ContractError("actor: global preference required by this actor");
        expect_cols(prefs, pref_dim, "actor preference");
        input = ad::concat_cols(tape, {obs, prefs});
    } else if (prefs) {
        throw ContractError("actor: preference-free actor was given a global preference");
    }
    Tensor h = ad::relu(tape, norm1(tape, hidden1(tape, input)));
    h = ad::relu(tape, norm2(tape, hidden2(tape, h)));
    return ad::tanh(tape, head(tape, h));
}

ParameterList Actor::parameters() const {
    ParameterList out;
    hidden1.collect(out);
    norm1.collect(out);
    hidden2.collect(out);
    norm2.collect(out);
    head.collect(out);
    return out;
}

Eigen::VectorXd actor_forward(const Actor& actor, const Eigen::VectorXd& obs,
                              const pref::GlobalPreference* global_pref) {
    Tape tape(Tape::Mode::kInference);
    Tensor prefs;
    if (global_pref) {
        const Eigen::MatrixXd stacked = pref::stack(*global_pref);
        prefs = ad::constant(stacked.reshaped<Eigen::RowMajor>().transpose());
    }
    const Tensor out = actor.forward(tape, ad::constant(obs.transpose()), prefs);
    return out->value.row(0).transpose();
}

MlpCritic MlpCritic::create(Index input_dim, Index output_dim, Rng& rng, const std::string& name,
                            Index width) {
    MlpCritic c;
    c.input_dim = input_dim;
    c.output_dim = output_dim;
    c.net = Mlp::create({input_dim, width, width, output_dim}, rng, name);
    return c;
}

Tensor MlpCritic::forward(Tape& tape, const Tensor& input) const {
    expect_cols(input, input_dim, "critic input");
    return net(tape, input);
}

ParameterList MlpCritic::parameters() const {
    ParameterList out;
    net.collect(out);
    return out;
}

Tensor gp_critic_input(Tape& tape, const Tensor& state, const std::vector<Tensor>& actions,
                       const Tensor& flat_prefs) {
    std::vector<Tensor> parts;
    parts.reserve(actions.size() + 2);
    parts.push_back(state);
    parts.insert(parts.end(), actions.begin(), actions.end());
    parts.push_back(flat_prefs);
    return ad::concat_cols(tape, parts);
}

Eigen::VectorXd gp_critic_forward(const MlpCritic& critic, const Eigen::VectorXd& state,
                                  const Eigen::MatrixXd& joint_action,
                                  const pref::GlobalPreference& global_pref) {
    Tape tape(Tape::Mode::kInference);
    std::vector<Tensor> actions;
    for (Index i = 0; i < joint_action.rows(); ++i) {
        actions.push_back(ad::constant(joint_action.row(i)));
    }
    const Eigen::MatrixXd stacked = pref::stack(global_pref);
    const Tensor input =
        gp_critic_input(tape, ad::constant(state.transpose()), actions,
                        ad::constant(stacked.reshaped<Eigen::RowMajor>().transpose()));
    return critic.forward(tape, input)->value.row(0).transpose();
}

AttentionCritic AttentionCritic::create(const std::vector<Index>& obs_dims, Index action_dim,
                                        Index n_objectives, Rng& rng, const std::string& name,
                                        AttentionConfig config) {
    if (config.heads < 1 || config.embed_dim % config.heads != 0) {
        throw DimensionError("attention critic: embed_dim " + std::to_string(config.embed_dim) +
                             " not divisible by " + std::to_string(config.heads) + " heads");
    }
    AttentionCritic c;
    c.config = config;
    c.obs_dims = obs_dims;
    c.action_dim = action_dim;
    c.n_objectives = n_objectives;
    const Index d = config.embed_dim;
    for (std::size_t i = 0; i < obs_dims.size(); ++i) {
        c.embed.push_back(Linear::create(obs_dims[i] + action_dim + n_objectives, d, rng,
                                         name + ".embed" + std::to_string(i)));
    }
    const double range = 1.0 / std::sqrt(static_cast<double>(d));
    c.w_query = param(uniform(d, d, range, rng), name + ".att.w_query");
    c.w_key = param(uniform(d, d, range, rng), name + ".att.w_key");
    c.w_value = param(uniform(d, d, range, rng), name + ".att.w_value");
    c.w_out = param(uniform(d, d, range, rng), name + ".att.w_out");
    c.ffn1 = Linear::create(d, config.ffn_dim, rng, name + ".att.ffn1");
    c.ffn2 = Linear::create(config.ffn_dim, d, rng, name + ".att.ffn2");
    c.norm = LayerNorm::create(d, name + ".att.norm");
    for (std::size_t i = 0; i < obs_dims.size(); ++i) {
        std::vector<Index> dims{d};
        dims.insert(dims.end(), config.head_dims.begin(), config.head_dims.end());
        dims.push_back(n_objectives);
        c.heads.push_back(Mlp::create(dims, rng, name + ".out" + std::to_string(i)));
    }
    return c;
}

Tensor AttentionCritic::embed_agent(Tape& tape, Index agent, const Tensor& obs,
                                    const Tensor& action, const Tensor& pref) const {
    if (agent < 0 || agent >= n_agents()) {
        throw DimensionError("embed_agent: agent " + std::to_string(agent) + " out of range");
    }
    expect_cols(obs, obs_dims[agent], "embedding observation");
    expect_cols(action, action_dim, "embedding action");
    expect_cols(pref, n_objectives, "embedding preference");
    Tensor x = embed[agent](tape, ad::concat_cols(tape, {obs, action, pref}));
    return config.embed_relu ? ad::relu(tape, x) : x;
}

Tensor AttentionCritic::attention(Tape& tape, const Tensor& X, Index batch,
                                  std::vector<Matrix>* weights) const {
    expect_cols(X, config.embed_dim, "attention input");
    const Tensor q = ad::matmul(tape, X, w_query);
    const Tensor k = ad::matmul(tape, X, w_key);
    const Tensor v = ad::matmul(tape, X, w_value);
    const Tensor z = ad::grouped_attention(tape, q, k, v, batch, config.heads, weights);
    return ad::matmul(tape, z, w_out);
}

Tensor AttentionCritic::ffn_norm(Tape& tape, const Tensor& H) const {
    const Tensor f = ffn2(tape, ad::relu(tape, ffn1(tape, H)));
    return norm(tape, ad::add(tape, H, f));
}

Tensor AttentionCritic::q_output(Tape& tape, Index agent, const Tensor& h_tilde_i) const {
    expect_cols(h_tilde_i, config.embed_dim, "output head input");
    return heads.at(static_cast<std::size_t>(agent))(tape, h_tilde_i);
}

std::vector<Tensor> AttentionCritic::forward(Tape& tape, const std::vector<Tensor>& obs,
                                             const std::vector<Tensor>& actions,
                                             const std::vector<Tensor>& prefs,
                                             std::optional<Index> only_agent) const {
    const Index n = n_agents();
    if (static_cast<Index>(obs.size()) != n || static_cast<Index>(actions.size()) != n ||
        static_cast<Index>(prefs.size()) != n) {
        throw DimensionError("attention critic: expected inputs for " + std::to_string(n) +
                             " agents");
    }
    const Index batch = obs.front()->rows();
    std::vector<Tensor> xs;
    xs.reserve(n);
    for (Index i = 0; i < n; ++i) xs.push_back(embed_agent(tape, i, obs[i], actions[i], prefs[i]));
    const Tensor X = ad::concat_rows(tape, xs);
    const Tensor h = ffn_norm(tape, attention(tape, X, batch));
    std::vector<Tensor> q(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        if (only_agent && *only_agent != i) continue;
        q[i] = q_output(tape, i, ad::slice_rows(tape, h, i * batch, batch));
    }
    return q;
}

ParameterList AttentionCritic::shared_parameters() const {
    ParameterList out{w_query, w_key, w_value, w_out};
    ffn1.collect(out);
    ffn2.collect(out);
    norm.collect(out);
    return out;
}

ParameterList AttentionCritic::agent_parameters(Index agent) const {
    ParameterList out;
    embed.at(agent).collect(out);
    heads.at(agent).collect(out);
    return out;
}

ParameterList AttentionCritic::parameters() const {
    ParameterList out;
    for (Index i = 0; i < n_agents(); ++i) {
        const auto part = agent_parameters(i);
        out.insert(out.end(), part.begin(), part.end());
    }
    const auto shared = shared_parameters();
    out.insert(out.end(), shared.begin(), shared.end());
    return out;
}

ParameterList clone_values(const ParameterList& params) {
    ParameterList out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(deep(p));
    return out;
}

Actor clone_as_target(const Actor& actor) {
    Actor a = actor;
    a.hidden1 = deep(actor.hidden1);
    a.norm1 = deep(actor.norm1);
    a.hidden2 = deep(actor.hidden2);
    a.norm2 = deep(actor.norm2);
    a.head = deep(actor.head);
    return a;
}

MlpCritic clone_as_target(const MlpCritic& critic) {
    MlpCritic c = critic;
    c.net = deep(critic.net);
    return c;
}

AttentionCritic clone_as_target(const AttentionCritic& critic) {
    AttentionCritic c = critic;
    for (auto& e : c.embed) e = deep(e);
    c.w_query = deep(critic.w_query);
    c.w_key = deep(critic.w_key);
    c.w_value = deep(critic.w_value);
    c.w_out = deep(critic.w_out);
    c.ffn1 = deep(critic.ffn1);
    c.ffn2 = deep(critic.ffn2);
    c.norm = deep(critic.norm);
    for (auto& h : c.heads) h = deep(h);
    return c;
}

FreezeGuard::FreezeGuard(ParameterList params) : params_(std::move(params)) {
    for (const auto& p : params_) {
        saved_.push_back(p->requires_grad);
        p->requires_grad = false;
    }
}

FreezeGuard::~FreezeGuard() {
    for (std::size_t k = 0; k < params_.size(); ++k) params_[k]->requires_grad = saved_[k];
}

void zero_grads(const ParameterList& params) {
    for (const auto& p : params) p->zero_grad();
}

void save_checkpoint(const std::string& path, const ParameterList& params) {
    std::ofstream out(path);
    if (!out) throw Error("save_checkpoint: cannot open " + path);
    out << kCheckpointMagic << '\n' << params.size() << '\n';
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& p : params) {
        out << p->name << ' ' << p->rows() << ' ' << p->cols() << '\n';
        for (Index r = 0; r < p->rows(); ++r) {
            for (Index c = 0; c < p->cols(); ++c) {
                out << (c ? " " : "") << p->value(r, c);
            }
            out << '\n';
        }
    }
    if (!out) throw Error("save_checkpoint: write failed for " + path);
}

void load_checkpoint(const std::string& path, const ParameterList& params) {
    std::ifstream in(path);
    if (!in) throw Error("load_checkpoint: cannot open " + path);
    std::string magic;
    std::getline(in, magic);
    if (magic != kCheckpointMagic) {
        throw Error("load_checkpoint: " + path + " is not a " + kCheckpointMagic + " file");
    }
    std::size_t count = 0;
    in >> count;
    std::map<std::string, Matrix> stored;
    for (std::size_t k = 0; k < count; ++k) {
        std::string name;
        Index rows = 0;
        Index cols = 0;
        if (!(in >> name >> rows >> cols) || rows < 0 || cols < 0) {
            throw Error("load_checkpoint: malformed tensor header in " + path);
        }
        Matrix m(rows, cols);
        for (Index r = 0; r < rows; ++r) {
            for (Index c = 0; c < cols; ++c) {
                if (!(in >> m(r, c))) throw Error("load_checkpoint: truncated tensor " + name);
            }
        }
        stored.emplace(name, std::move(m));
    }
    for (const auto& p : params) {
        const auto it = stored.find(p->name);
        if (it == stored.end()) throw Error("load_checkpoint: missing tensor " + p->name);
        if (it->second.rows() != p->rows() || it->second.cols() != p->cols()) {
            throw DimensionError("load_checkpoint: shape mismatch for " + p->name);
        }
        p->value = it->second;
    }
}

}  // namespace mamorl::nn
