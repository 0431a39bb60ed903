#pragma once

// Flat `key = value` experiment configuration. Every task and crowd knob
// has a key; lists are comma separated and aligned with `criteria`.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

#include "screenflow/crowdsim.hpp"
#include "screenflow/strategy.hpp"

namespace screenflow {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    std::string scenario = "default";
    std::vector<CriterionId> criteria{"C1", "C2", "C3", "C4"};
    std::vector<std::string> criterion_names;  // empty: names are the ids
    std::vector<double> powers{0.14, 0.14, 0.28, 0.42};
    std::vector<double> difficulties;      // empty: all zero
    std::vector<double> accuracy_targets;  // empty: difficulty skew for every criterion
    std::vector<double> known_powers;      // empty: estimated
    std::vector<double> known_accuracies;  // empty: estimated
    std::size_t n_items = 1000;
    std::vector<int> n_tests_grid{2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::vector<int> votes_grid{3, 5};
    std::vector<StrategyKind> strategies{StrategyKind::Baseline, StrategyKind::MRuns, StrategyKind::SMRuns};
    int replications = 50;
    /// Master seed lives in strategy.task.rng_seed.
    StrategyConfig strategy;
    /// Per-criterion maps, n_tests, labels_per_worker, unit_cost and seed
    /// are filled from the fields above when a run is set up.
    CrowdConfig crowd;

    /// Throws ConfigError on inconsistent or out-of-range settings.
    void validate() const;
};

/// Sets one key; throws ConfigError for unknown keys or unparsable values.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);
/// `KEY=VALUE`.
void apply_override(ExperimentConfig& config, const std::string& assignment);

/// Lines of `key = value`; `#` starts a comment. Errors carry the line number.
ExperimentConfig parse_config(std::istream& in, const std::string& source, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

/// Every key, in the order render_config writes them.
const std::vector<std::string>& config_keys();
/// Text that parse_config reads back to an equal configuration.
std::string render_config(const ExperimentConfig& config);

}  // namespace screenflow
