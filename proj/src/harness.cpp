#include "mamorl/harness.hpp"

#include "mamorl/gradcheck.hpp"
#include "mamorl/networks.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace mamorl::harness {

namespace fs = std::filesystem;
using ad::Matrix;

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::string cell_name(train::Algorithm variant, std::uint64_t seed) {
    return train::to_string(variant) + "_seed" + std::to_string(seed);
}

std::string resolve_output_dir(const ExperimentConfig& config) {
    if (const char* env = std::getenv("MAMORL_OUT"); env && *env) return env;
    return config.output_dir;
}

PolicyEvaluation evaluate_policy(const train::Learner* learner,
                                 const pref::PreferenceProvider& preferences,
                                 const ExperimentConfig& config) {
    PolicyEvaluation out;
    out.gu = metrics::evaluate_gu(train::make_rollout(learner, config.env, preferences),
                                  config.eval.n_states, config.eval.seed);
    const auto grid = metrics::simplex_grid(config.env.reward_dim(), config.eval.grid_divisions);
    out.front = train::sweep_front(learner, config.env, preferences, grid,
                                   config.eval.episodes_per_point, config.eval.seed);
    if (out.front.dim() <= 3) {
        out.hv = metrics::hypervolume_exact(out.front);
    } else {
        Rng rng(config.eval.seed);
        out.hv = metrics::hypervolume_mc(out.front, 1'000'000, rng).estimate;
    }
    return out;
}

void write_front_csv(const std::string& path, const metrics::ParetoFront& front) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    out << kSchemaHeader << "\nrole";
    for (Eigen::Index k = 0; k < front.dim(); ++k) out << ",obj_" << k;
    out << "\n";
    const auto row = [&](const char* role, const Eigen::VectorXd& v) {
        out << role;
        for (Eigen::Index k = 0; k < v.size(); ++k) out << "," << format_double(v(k));
        out << "\n";
    };
    row("ref", front.ref);
    for (const auto& p : front.points) row("point", p);
}

metrics::ParetoFront read_front_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open front file '" + path + "'");
    metrics::ParetoFront front;
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    bool have_ref = false;
    Eigen::Index dim = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!header) {
            if (cells.empty() || cells[0] != "role") throw ParseError(line_no, "expected header row");
            dim = static_cast<Eigen::Index>(cells.size()) - 1;
            header = true;
            continue;
        }
        if (static_cast<Eigen::Index>(cells.size()) != dim + 1) {
            throw ParseError(line_no, "expected " + std::to_string(dim + 1) + " columns");
        }
        Eigen::VectorXd v(dim);
        for (Eigen::Index k = 0; k < dim; ++k) {
            const std::string& s = cells[k + 1];
            double x = 0.0;
            const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
            if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(x)) {
                throw ParseError(line_no, "bad number '" + s + "'");
            }
            v(k) = x;
        }
        if (cells[0] == "ref") {
            front.ref = v;
            have_ref = true;
        } else if (cells[0] == "point") {
            front.points.push_back(v);
        } else {
            throw ParseError(line_no, "unknown role '" + cells[0] + "'");
        }
    }
    if (!have_ref) throw ConfigError("front file '" + path + "' has no ref row");
    return front;
}

double sample_std(const std::vector<double>& xs, double mean) {
    if (xs.size() < 2) return 0.0;
    double ss = 0.0;
    for (const double x : xs) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

std::vector<SummaryRow> summarize(const std::vector<train::Algorithm>& variants,
                                  const std::vector<RunOutcome>& outcomes) {
    std::vector<SummaryRow> rows;
    for (const auto v : variants) {
        SummaryRow row;
        row.variant = v;
        std::vector<double> gu, hv;
        for (const auto& o : outcomes) {
            if (o.variant != v) continue;
            if (!o.ok) {
                ++row.n_failed;
                continue;
            }
            gu.push_back(o.gu);
            hv.push_back(o.hv);
        }
        row.n_ok = gu.size();
        if (!gu.empty()) {
            double sg = 0.0, sh = 0.0;
            for (std::size_t k = 0; k < gu.size(); ++k) {
                sg += gu[k];
                sh += hv[k];
            }
            row.gu_mean = sg / static_cast<double>(gu.size());
            row.hv_mean = sh / static_cast<double>(hv.size());
            row.gu_std = sample_std(gu, row.gu_mean);
            row.hv_std = sample_std(hv, row.hv_mean);
        }
        rows.push_back(row);
    }
    return rows;
}

namespace {

void write_run_csv(const std::string& path, train::Algorithm variant, std::uint64_t seed,
                   int n_agents, const std::vector<train::EpisodeLog>& log) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    out << kSchemaHeader << "\nvariant,seed,episode,env_steps";
    for (int i = 0; i < n_agents; ++i) out << ",return_" << i;
    out << ",mean_loss,sigma,wall_ms\n";
    for (const auto& row : log) {
        out << train::to_string(variant) << "," << seed << "," << row.episode << ","
            << row.env_steps;
        for (const double r : row.returns) out << "," << format_double(r);
        out << "," << format_double(row.mean_loss) << "," << format_double(row.sigma) << ","
            << format_double(row.wall_ms) << "\n";
    }
}

std::string join_ref(const Eigen::VectorXd& ref) {
    std::string s;
    for (Eigen::Index k = 0; k < ref.size(); ++k) s += (k ? ";" : "") + format_double(ref(k));
    return s;
}

// Free-text error messages must not break the CSV.
std::string sanitize(std::string s) {
    for (char& c : s) {
        if (c == ',' || c == '\n' || c == '\r') c = ' ';
    }
    return s;
}

RunOutcome run_cell(const ExperimentConfig& config, const fs::path& dir, train::Algorithm variant,
                    std::uint64_t seed) {
    RunOutcome outcome;
    outcome.variant = variant;
    outcome.seed = seed;
    const std::string name = cell_name(variant, seed);
    const std::string ckpt = (dir / (name + ".ckpt")).string();
    std::vector<train::EpisodeLog> log;
    try {
        const auto on_episode = [&](const train::EpisodeLog& row, const train::Learner& learner) {
            log.push_back(row);
            const int every = config.train.checkpoint_every;
            if (every > 0 && (row.episode + 1) % every == 0) {
                nn::save_checkpoint(ckpt, learner.all_parameters());
            }
        };
        auto result =
            train::run_training(variant, config.env, config.train, config.preference, seed, on_episode);
        nn::save_checkpoint(ckpt, result.learner->all_parameters());
        const auto eval = evaluate_policy(result.learner.get(), result.preferences, config);
        write_front_csv((dir / (name + "_front.csv")).string(), eval.front);
        outcome.gu = eval.gu.gu;
        outcome.gu_std_error = eval.gu.std_error;
        outcome.hv = eval.hv;
        outcome.n_front_points = eval.front.points.size();
        outcome.ref = eval.front.ref;
        outcome.ok = true;
    } catch (const std::exception& e) {
        outcome.error = e.what();
    }
    write_run_csv((dir / (name + ".csv")).string(), variant, seed, config.env.n_agents, log);
    return outcome;
}

}  // namespace

std::vector<RunOutcome> run_grid(const ExperimentConfig& input, const GridOptions& options) {
    ExperimentConfig config = input;
    if (options.seed_override) config.seeds = {*options.seed_override};
    config.validate();
    if (options.jobs < 1) throw ConfigError("--jobs must be >= 1");

    const fs::path dir = resolve_output_dir(config);
    if (fs::exists(dir) && !fs::is_empty(dir) && !options.force) {
        throw OutputDirError("output directory '" + dir.string() +
                             "' is not empty; pass --force to overwrite");
    }
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "config.cfg");
        out << serialize(config);
    }

    struct Cell {
        train::Algorithm variant;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (const auto v : config.variants) {
        for (const auto s : config.seeds) cells.push_back({v, s});
    }
    std::vector<RunOutcome> outcomes(cells.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    const auto worker = [&] {
        for (std::size_t k = next++; k < cells.size(); k = next++) {
            outcomes[k] = run_cell(config, dir, cells[k].variant, cells[k].seed);
            if (options.log) {
                std::lock_guard lock(log_mutex);
                const auto& o = outcomes[k];
                *options.log << cell_name(o.variant, o.seed)
                             << (o.ok ? " gu=" + format_double(o.gu) + " hv=" + format_double(o.hv)
                                      : " FAILED: " + o.error)
                             << std::endl;
            }
        }
    };
    const int n_threads = std::min<int>(options.jobs, static_cast<int>(cells.size()));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    {
        std::ofstream out(dir / "metrics.csv");
        out << kSchemaHeader << "\nvariant,seed,gu,gu_std_error,hv,n_front_points,ref,status\n";
        for (const auto& o : outcomes) {
            out << train::to_string(o.variant) << "," << o.seed << "," << format_double(o.gu) << ","
                << format_double(o.gu_std_error) << "," << format_double(o.hv) << ","
                << o.n_front_points << "," << join_ref(o.ref) << ","
                << (o.ok ? "ok" : "failed: " + sanitize(o.error)) << "\n";
        }
    }
    {
        std::ofstream out(dir / "summary.csv");
        out << kSchemaHeader << "\nvariant,n_ok,n_failed,gu_mean,gu_std,hv_mean,hv_std\n";
        for (const auto& r : summarize(config.variants, outcomes)) {
            out << train::to_string(r.variant) << "," << r.n_ok << "," << r.n_failed << ","
                << format_double(r.gu_mean) << "," << format_double(r.gu_std) << ","
                << format_double(r.hv_mean) << "," << format_double(r.hv_std) << "\n";
        }
    }
    return outcomes;
}

std::vector<GradientReport> gradient_suite(std::uint64_t seed, std::size_t coords_per_tensor) {
    using ad::Tape;
    using ad::Tensor;
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto randn = [&](ad::Index r, ad::Index c) {
        Matrix m(r, c);
        for (ad::Index k = 0; k < m.size(); ++k) m(k) = normal(rng);
        return m;
    };
    const auto leaf = [&](ad::Index r, ad::Index c, const std::string& name) {
        Tensor t = ad::make_tensor(randn(r, c), true);
        t->name = name;
        return t;
    };
    const auto simplex_rows = [&](ad::Index r, int m) {
        Matrix w(r, m);
        for (ad::Index b = 0; b < r; ++b) w.row(b) = pref::sample_uniform_simplex(rng, m).transpose();
        return w;
    };

    constexpr ad::Index kBatch = 3;
    constexpr int kAgents = 2;
    constexpr int kObs = 10;
    constexpr int kAct = 2;
    constexpr int kObj = 2;
    constexpr int kState = 16;
    std::vector<GradientReport> out;

    {
        const auto actor = nn::Actor::create(kObs, kAgents * kObj, kAct, rng, "actor_gp");
        const Tensor obs = ad::constant(randn(kBatch, kObs));
        const Tensor prefs = ad::constant(simplex_rows(kBatch, kAgents * kObj) / kAgents);
        const Matrix r = randn(kBatch, kAct);
        const auto f = [&](Tape& tape) {
            return ad::sum(tape, ad::mul(tape, actor.forward(tape, obs, prefs), ad::constant(r)));
        };
        out.push_back({"actor (global preference)",
                       ad::finite_difference_check(f, actor.parameters(), 1e-6, coords_per_tensor,
                                                   seed)});
    }
    {
        const auto actor = nn::Actor::create(kObs, 0, kAct, rng, "actor");
        const Tensor obs = ad::constant(randn(kBatch, kObs));
        const Matrix r = randn(kBatch, kAct);
        const auto f = [&](Tape& tape) {
            return ad::sum(tape, ad::mul(tape, actor.forward(tape, obs), ad::constant(r)));
        };
        out.push_back({"actor (preference-free)",
                       ad::finite_difference_check(f, actor.parameters(), 1e-6, coords_per_tensor,
                                                   seed)});
    }
    {
        const auto critic = nn::MlpCritic::create(kState + kAgents * (kAct + kObj), kObj, rng,
                                                  "critic_gp");
        const Tensor state = ad::constant(randn(kBatch, kState));
        std::vector<Tensor> actions;
        for (int i = 0; i < kAgents; ++i) {
            actions.push_back(leaf(kBatch, kAct, "action" + std::to_string(i)));
        }
        const Tensor prefs = ad::constant(simplex_rows(kBatch, kAgents * kObj) / kAgents);
        const Matrix y = randn(kBatch, kObj);
        const auto f = [&](Tape& tape) {
            const Tensor q = critic.forward(tape, nn::gp_critic_input(tape, state, actions, prefs));
            return train::motd_loss(tape, q, y);
        };
        auto params = critic.parameters();
        params.insert(params.end(), actions.begin(), actions.end());
        out.push_back({"centralised critic",
                       ad::finite_difference_check(f, params, 1e-6, coords_per_tensor, seed)});
    }
    {
        const std::vector<ad::Index> obs_dims(kAgents, kObs);
        const auto critic = nn::AttentionCritic::create(obs_dims, kAct, kObj, rng, "critic_aa");
        std::vector<Tensor> obs, actions, prefs;
        std::vector<Matrix> ys;
        for (int i = 0; i < kAgents; ++i) {
            obs.push_back(ad::constant(randn(kBatch, kObs)));
            actions.push_back(leaf(kBatch, kAct, "action" + std::to_string(i)));
            prefs.push_back(ad::constant(simplex_rows(kBatch, kObj)));
            ys.push_back(randn(kBatch, kObj));
        }
        const auto f = [&](Tape& tape) {
            const auto q = critic.forward(tape, obs, actions, prefs);
            Tensor total;
            for (int i = 0; i < kAgents; ++i) {
                const Tensor l = train::motd_loss(tape, q[i], ys[i]);
                total = total ? ad::add(tape, total, l) : l;
            }
            return total;
        };
        auto params = critic.parameters();
        params.insert(params.end(), actions.begin(), actions.end());
        out.push_back({"attention critic",
                       ad::finite_difference_check(f, params, 1e-6, coords_per_tensor, seed)});
    }
    return out;
}

}  // namespace mamorl::harness
