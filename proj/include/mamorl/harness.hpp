#pragma once

#include "mamorl/config.hpp"
#include "mamorl/errors.hpp"
#include "mamorl/metrics.hpp"
#include "mamorl/training.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mamorl::harness {

inline constexpr const char* kSchemaHeader = "# schema=1";

/// Output directory exists and is not empty.
class OutputDirError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

struct PolicyEvaluation {
    metrics::GuEvaluation gu;
    metrics::ParetoFront front;
    double hv = 0.0;
};

/// GU over config.eval.n_states initial states plus the swept Pareto front and its hypervolume.
PolicyEvaluation evaluate_policy(const train::Learner* learner,
                                 const pref::PreferenceProvider& preferences,
                                 const ExperimentConfig& config);

struct RunOutcome {
    train::Algorithm variant = train::Algorithm::kAa;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double gu = 0.0;
    double gu_std_error = 0.0;
    double hv = 0.0;
    std::size_t n_front_points = 0;
    Eigen::VectorXd ref;
};

struct GridOptions {
    int jobs = 1;
    bool force = false;
    std::optional<std::uint64_t> seed_override;
    /// Progress lines; null for silence.
    std::ostream* log = nullptr;
};

/// config.output_dir unless MAMORL_OUT is set.
std::string resolve_output_dir(const ExperimentConfig& config);

/// Trains and evaluates every (variant, seed) cell. Writes per cell
/// <variant>_seed<seed>.csv (episode log), _front.csv and .ckpt, then
/// metrics.csv and summary.csv once all cells finish. A failing cell is
/// recorded and the grid continues.
std::vector<RunOutcome> run_grid(const ExperimentConfig& config, const GridOptions& options);

std::string cell_name(train::Algorithm variant, std::uint64_t seed);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

/// Per-variant mean and sample standard deviation over successful cells, in
/// the order the variants appear.
struct SummaryRow {
    train::Algorithm variant = train::Algorithm::kAa;
    std::size_t n_ok = 0;
    std::size_t n_failed = 0;
    double gu_mean = 0.0;
    double gu_std = 0.0;
    double hv_mean = 0.0;
    double hv_std = 0.0;
};

std::vector<SummaryRow> summarize(const std::vector<train::Algorithm>& variants,
                                  const std::vector<RunOutcome>& outcomes);

/// Sample standard deviation; 0 for fewer than two values.
double sample_std(const std::vector<double>& xs, double mean);

void write_front_csv(const std::string& path, const metrics::ParetoFront& front);
metrics::ParetoFront read_front_csv(const std::string& path);

struct GradientReport {
    std::string network;
    double max_error = 0.0;
};

/// Finite-difference checks on freshly initialised networks: both actor forms,
/// the centralised critic and the full attention critic, each w.r.t. its
/// parameters and action inputs. Large tensors are checked on
/// `coords_per_tensor` sampled coordinates.
std::vector<GradientReport> gradient_suite(std::uint64_t seed, std::size_t coords_per_tensor = 24);

}  // namespace mamorl::harness
