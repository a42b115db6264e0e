#pragma once

#include "mamorl/env.hpp"
#include "mamorl/training.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mamorl::harness {

struct EvalConfig {
    int n_states = metrics::kDefaultGuStates;
    /// Number of evenly spaced simplex points per axis minus one; 10 gives 11 points for M = 2.
    int grid_divisions = 10;
    int episodes_per_point = 4;
    std::uint64_t seed = 2024;
};

struct ExperimentConfig {
    env::EnvConfig env;
    train::TrainConfig train;
    train::PreferenceSetup preference;
    std::vector<train::Algorithm> variants = {train::Algorithm::kAa};
    std::vector<std::uint64_t> seeds = {0};
    std::string output_dir = "runs";
    EvalConfig eval;

    /// Throws ConfigError on cross-field violations.
    void validate() const;
};

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

/// Parses the line-oriented format:
///
///     # comment
///     variants = aa, ip
///     seeds = 1, 2, 3
///     output_dir = runs/diag
///     [env]
///     kind = diagnostic
///     [train]
///     gamma = 0.99
///
/// Keys before the first header belong to [experiment]. Sections are env, train,
/// preference, eval and experiment. Errors carry the offending line number.
ExperimentConfig parse_config(const std::string& text);

ExperimentConfig load_config(const std::string& path);

/// Canonical text form; parse_config(serialize(c)) == c.
std::string serialize(const ExperimentConfig& config);

}  // namespace mamorl::harness
