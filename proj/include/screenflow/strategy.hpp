#pragma once

// Screening strategies (single-run baseline, criteria-ordered multi-run,
// adaptive short runs) and the sequential Bayes arithmetic that drives the
// adaptive one.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "screenflow/aggregate.hpp"
#include "screenflow/decision.hpp"
#include "screenflow/model.hpp"

namespace screenflow {

// ---------------------------------------------------------------------------
// Vote sources

struct VoteRequest {
    ItemId item_id;
    CriterionId criterion_id;
    int n_votes = 1;
};

struct Shortfall {
    ItemId item_id;
    CriterionId criterion_id;
    int missing = 0;
};

struct VoteBatch {
    std::vector<VoteRecord> records;
    std::vector<Shortfall> shortfalls;
};

/// Anything that answers vote requests: a simulated crowd or a recorded
/// dataset. Used by one strategy execution at a time.
class VoteSource {
public:
    virtual ~VoteSource() = default;
    /// Each call is one crowdsourcing run.
    virtual VoteBatch request_votes(std::span<const VoteRequest> requests) = 0;
    virtual long votes_served() const = 0;
    virtual double cost() const = 0;
};

/// Thrown by the baseline strategy when a source cannot supply J votes.
class PartialCoverage : public std::runtime_error {
public:
    PartialCoverage(std::string what, std::vector<ItemId> items)
        : std::runtime_error(std::move(what)), items_(std::move(items)) {}
    const std::vector<ItemId>& items() const { return items_; }

private:
    std::vector<ItemId> items_;
};

// ---------------------------------------------------------------------------
// Sequential Bayes updates for one (item, criterion)

/// P(i in IN_c | j_in IN votes, j_out OUT votes) under prior power theta and
/// symmetric accuracy. theta = 0 gives 1, theta = 1 gives 0. With accuracy 1
/// and contradictory votes the evidence is treated as uninformative.
double posterior_update(double theta, int j_in, int j_out, double accuracy);

/// alpha * (1 - p_in) + (1 - alpha) * p_in
double p_next_vote_out(double p_in, double accuracy);

/// Probability of the next n votes all being OUT, chaining p_next_vote_out
/// with the posterior re-updated after each hypothetical OUT vote.
double p_consecutive_out(double p_in, double accuracy, int n);

/// p_in after n further OUT votes.
double p_in_after_out_votes(double p_in, double accuracy, int n);

inline constexpr int kNMinCap = 1000;

/// Smallest n >= 1 such that n more OUT votes on this criterion push the
/// combined exclusion probability above `p_out_threshold`. Returns 1 when
/// the threshold is already crossed, nullopt when unreachable within kNMinCap.
std::optional<int> compute_n_min(double p_in_current, std::span<const double> other_p_in, double accuracy,
                                 double p_out_threshold);

struct CriterionCandidate {
    CriterionId criterion_id;
    std::optional<int> n_min;
    double p_success = 0.0;
    double value = 0.0;
};

/// Index of the best candidate: highest value, then lower n_min, then lower
/// criterion id. nullopt when no candidate has an n_min.
std::optional<std::size_t> choose_criterion(std::span<const CriterionCandidate> candidates);

struct BeliefState {
    ItemId item_id;
    std::map<CriterionId, double> p_in;
    double p_out_combined = 0.0;
    std::map<CriterionId, std::optional<int>> n_min;
    std::map<CriterionId, double> p_success;
    double value = 0.0;
    std::optional<CriterionId> chosen_criterion;
};

/// Builds a belief from per-criterion posteriors (n_min, value unfilled).
BeliefState make_belief(ItemId item, std::map<CriterionId, double> p_in);

/// Fills n_min, p_success, value and chosen criterion for every belief and
/// returns them ordered by value (descending; ties by n_min, then input order).
std::vector<BeliefState> rank_items(std::vector<BeliefState> beliefs,
                                    const std::map<CriterionId, double>& accuracy, const TaskConfig& config);

/// value == 0, or 1 / value above the stop threshold.
bool should_give_up(double value, const TaskConfig& config);

// ---------------------------------------------------------------------------
// Strategies

enum class StrategyKind { Baseline, MRuns, SMRuns };

std::string_view to_string(StrategyKind kind);
/// Accepts "baseline", "m-runs", "sm-runs" (also "mruns"/"smruns", "m"/"sm").
StrategyKind parse_strategy(std::string_view name);

struct StrategyConfig {
    TaskConfig task;
    AggregatorKind aggregator = AggregatorKind::DawidSkene;           // single-run baseline
    AggregatorKind estimation_aggregator = AggregatorKind::DawidSkene; // baseline iteration of M/SM runs
    AggregatorOptions aggregator_options;
    std::size_t m_runs_baseline_size = 100;
    std::size_t sm_baseline_size = 50;
    /// SM: re-estimate accuracies every iteration instead of freezing them after the baseline.
    bool reestimate_accuracy = false;
    /// Added to accuracy / power estimates before use (estimation-error studies).
    double accuracy_bias = 0.0;
    double power_bias = 0.0;
    /// Replace the estimates with known values.
    std::optional<std::map<CriterionId, double>> known_power;
    std::optional<std::map<CriterionId, double>> known_accuracy;
};

struct TraceEntry {
    int iteration = 0;
    std::string phase;
    long votes_requested = 0;
    std::map<CriterionId, double> power_estimates;
    long items_closed_out = 0;
    long items_closed_in = 0;
    long items_given_up = 0;
    long shortfall = 0;
};

struct Closure {
    ItemId item_id;
    Decision decision = Decision::In;
    double p_out_combined = 0.0;
    int iteration = 0;
};

struct StrategyOutcome {
    StrategyKind strategy = StrategyKind::Baseline;
    std::map<ItemId, Decision> decisions;
    RunMetrics metrics;
    bool has_metrics = false;
    std::vector<TraceEntry> trace;
    /// Decisions taken by the adaptive strategy after its baseline, with the posterior at decision time.
    std::vector<Closure> closures;
    std::map<CriterionId, double> power_estimates;
    std::map<CriterionId, double> accuracy_estimates;
    std::vector<CriterionId> criteria_order;
    long shortfall = 0;
};

StrategyOutcome run_baseline(std::span<const Item> items, std::span<const CriterionId> criteria, VoteSource& source,
                             const StrategyConfig& config);

StrategyOutcome run_m_runs(std::span<const Item> items, std::span<const CriterionId> criteria, VoteSource& source,
                           const StrategyConfig& config);

StrategyOutcome run_sm_runs(std::span<const Item> items, std::span<const CriterionId> criteria, VoteSource& source,
                            const StrategyConfig& config);

StrategyOutcome run_strategy(StrategyKind kind, std::span<const Item> items, std::span<const CriterionId> criteria,
                             VoteSource& source, const StrategyConfig& config);

struct BaselineEstimate {
    std::vector<ItemId> items;
    std::map<ItemId, Decision> decisions;
    std::map<CriterionId, double> power;
    std::map<CriterionId, double> accuracy;
    std::vector<VoteRecord> votes;
};

/// Run 0 shared by M-Runs and SM-Runs: J votes on every criterion for
/// `sample` items, aggregated per criterion, classified at lr/(lr+1), and
/// turned into power / accuracy estimates.
BaselineEstimate run_baseline_iteration(std::span<const Item> sample, std::span<const CriterionId> criteria,
                                        VoteSource& source, const StrategyConfig& config);

}  // namespace screenflow
