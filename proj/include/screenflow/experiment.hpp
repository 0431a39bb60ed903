#pragma once

// Seeded simulation sweeps and dataset replays built from an
// ExperimentConfig. Replications are paired: every strategy in a
// replication sees the same items and the same crowd stream.

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "screenflow/config.hpp"
#include "screenflow/crowdsim.hpp"
#include "screenflow/data_io.hpp"
#include "screenflow/strategy.hpp"

namespace screenflow {

/// Items "i0000".."i<n-1>" with independent Bernoulli(power) gold OUT per criterion.
std::vector<Item> generate_items(std::span<const CriterionId> criteria, std::span<const double> powers,
                                 std::size_t n_items, std::uint64_t seed);

/// Crowd settings for one grid cell (per-criterion maps, N_t, N_l, UC, seed).
CrowdConfig crowd_for(const ExperimentConfig& config, int n_tests, std::uint64_t seed);

/// Strategy settings for one grid cell (N_t, J, seed, known overrides).
StrategyConfig strategy_for(const ExperimentConfig& config, int n_tests, int votes_per_item, std::uint64_t seed);

struct ReplicationSeeds {
    std::uint64_t replication;
    std::uint64_t items;
    std::uint64_t crowd;
    std::uint64_t strategy;
};

/// Seeds depend on the replication only, so grid cells and strategies are paired too.
ReplicationSeeds replication_seeds(std::uint64_t master, int replication);

struct SimulationRun {
    StrategyOutcome outcome;
    MetricsRow row;
};

SimulationRun simulate_once(const ExperimentConfig& config, StrategyKind strategy, int n_tests, int votes_per_item,
                            int replication);

/// Every strategy x N_t x J x replication of the config. Rows come back
/// sorted by (strategy order, N_t, J, replication) whatever the parallelism.
std::vector<MetricsRow> run_sweep(const ExperimentConfig& config, unsigned parallelism,
                                  const std::function<void(std::size_t, std::size_t)>& progress = {});

/// A recorded-style dataset: `votes_per_item` simulated votes on every
/// (item, criterion), gold from the items, manifest from the config.
DatasetBundle generate_dataset(const ExperimentConfig& config, int votes_per_item, std::uint64_t seed);

/// Runs each strategy `config.replications` times against fresh replays of `bundle`.
std::vector<MetricsRow> run_replay(const ExperimentConfig& config, const DatasetBundle& bundle,
                                   unsigned parallelism);

struct CriterionEstimate {
    CriterionId criterion;
    double power = 0.0;
    double accuracy = 0.5;
    std::size_t items = 0;
    double votes_per_item = 0.0;
};

/// Power and accuracy per criterion from all votes in `votes`, using the
/// configured estimation aggregator.
std::vector<CriterionEstimate> estimate_from_votes(std::span<const VoteRecord> votes,
                                                   std::span<const CriterionId> criteria,
                                                   const StrategyConfig& config);

/// Runs `jobs` tasks on up to `parallelism` threads.
void parallel_for(std::size_t jobs, unsigned parallelism, const std::function<void(std::size_t)>& task);

}  // namespace screenflow
