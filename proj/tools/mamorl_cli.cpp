#include "mamorl/config.hpp"
#include "mamorl/harness.hpp"
#include "mamorl/networks.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

using namespace mamorl;

namespace {

constexpr int kOk = 0;
constexpr int kFailedCheck = 1;
constexpr int kUsage = 2;

int cmd_train(const std::string& config_path, int jobs, bool force,
              const std::optional<std::uint64_t>& seed_override) {
    const auto config = harness::load_config(config_path);
    harness::GridOptions options;
    options.jobs = jobs;
    options.force = force;
    options.seed_override = seed_override;
    options.log = &std::cerr;
    const auto outcomes = harness::run_grid(config, options);
    std::cout << "wrote " << harness::resolve_output_dir(config) << "/summary.csv\n";
    for (const auto& o : outcomes) {
        if (!o.ok) return kFailedCheck;
    }
    return kOk;
}

int cmd_evaluate(const std::string& config_path, const std::string& checkpoint,
                 const std::string& variant_name, const std::string& output) {
    if (!std::filesystem::exists(checkpoint)) {
        std::cerr << "error: checkpoint '" << checkpoint << "' does not exist\n";
        return kUsage;
    }
    const auto config = harness::load_config(config_path);
    const auto variant =
        variant_name.empty() ? config.variants.front() : train::algorithm_from_string(variant_name);
    if (train::required_case(variant) != config.preference.kind) {
        throw ConfigError("variant " + train::to_string(variant) +
                          " does not match the configured preference case");
    }
    auto preferences = train::make_preferences(config.preference, config.env);
    Rng rng(0);
    auto learner =
        train::make_learner(variant, config.env, config.train, preferences.generators(), rng);
    nn::load_checkpoint(checkpoint, learner->all_parameters());
    const auto eval = harness::evaluate_policy(learner.get(), preferences, config);

    std::ofstream file;
    std::ostream& out = output.empty() ? std::cout : (file.open(output), file);
    if (!out) throw Error("cannot write '" + output + "'");
    out << harness::kSchemaHeader << "\nvariant,checkpoint,gu,gu_std_error,hv,n_front_points,ref\n";
    out << train::to_string(variant) << "," << checkpoint << "," << harness::format_double(eval.gu.gu)
        << "," << harness::format_double(eval.gu.std_error) << ","
        << harness::format_double(eval.hv) << "," << eval.front.points.size() << ",";
    for (Eigen::Index k = 0; k < eval.front.ref.size(); ++k) {
        out << (k ? ";" : "") << harness::format_double(eval.front.ref(k));
    }
    out << "\n";
    return kOk;
}

int cmd_metrics(const std::string& front_path) {
    if (!std::filesystem::exists(front_path)) {
        std::cerr << "error: front file '" << front_path << "' does not exist\n";
        return kUsage;
    }
    const auto front = harness::read_front_csv(front_path);
    const double hv = metrics::hypervolume_exact(front);
    std::cout << "n_front_points," << front.points.size() << "\nhv," << harness::format_double(hv)
              << "\n";
    return kOk;
}

int cmd_gradcheck(int n_seeds, double tolerance, std::size_t coords) {
    bool ok = true;
    for (int s = 0; s < n_seeds; ++s) {
        for (const auto& r : harness::gradient_suite(static_cast<std::uint64_t>(s), coords)) {
            const bool pass = r.max_error < tolerance;
            ok = ok && pass;
            std::cout << "seed " << s << "  " << r.network << "  max_rel_error " << r.max_error
                      << (pass ? "" : "  FAIL") << "\n";
        }
    }
    return ok ? kOk : kFailedCheck;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-agent multi-objective reinforcement learning lab"};
    app.require_subcommand(1);

    std::string config_path;
    int jobs = 1;
    bool force = false;
    std::optional<std::uint64_t> seed_override;
    auto* train_cmd = app.add_subcommand("train", "Train and evaluate a variant x seed grid");
    train_cmd->add_option("--config", config_path, "Experiment config file")->required();
    train_cmd->add_option("--jobs", jobs, "Grid cells run in parallel")->check(CLI::PositiveNumber);
    train_cmd->add_flag("--force", force, "Allow a non-empty output directory");
    train_cmd->add_option("--seed-override", seed_override, "Run only this seed");

    std::string checkpoint, variant, output;
    auto* eval_cmd = app.add_subcommand("evaluate", "GU and hypervolume of a checkpoint");
    eval_cmd->add_option("--config", config_path, "Experiment config file")->required();
    eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required();
    eval_cmd->add_option("--variant", variant, "Variant stored in the checkpoint");
    eval_cmd->add_option("--output", output, "Results CSV (default: stdout)");

    std::string front_path;
    auto* metrics_cmd = app.add_subcommand("metrics", "Hypervolume of a saved front CSV");
    metrics_cmd->add_option("--front", front_path, "Front CSV")->required();

    int n_seeds = 10;
    double tolerance = 1e-4;
    std::size_t coords = 24;
    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference checks on fresh networks");
    grad_cmd->add_option("--seeds", n_seeds, "Number of seeds")->check(CLI::PositiveNumber);
    grad_cmd->add_option("--tolerance", tolerance, "Maximum relative error");
    grad_cmd->add_option("--coords", coords, "Sampled coordinates per tensor");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kUsage;
    }

    try {
        if (*train_cmd) return cmd_train(config_path, jobs, force, seed_override);
        if (*eval_cmd) return cmd_evaluate(config_path, checkpoint, variant, output);
        if (*metrics_cmd) return cmd_metrics(front_path);
        if (*grad_cmd) return cmd_gradcheck(n_seeds, tolerance, coords);
    } catch (const ParseError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailedCheck;
    }
    return kUsage;
}
