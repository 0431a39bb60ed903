#pragma once

// Label aggregation for one criterion at a time: majority voting,
// Dawid-Skene EM, and a TruthFinder-style trust propagation. All three sit
// behind `aggregate()` so strategies can swap them.

#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "screenflow/model.hpp"

namespace screenflow {

struct CriterionPosterior {
    ItemId item_id;
    CriterionId criterion_id;
    double p_in = 0.5;
    double p_out = 0.5;
};

struct WorkerAccuracyEstimate {
    WorkerId worker_id;
    std::map<CriterionId, double> accuracy;
};

enum class AggregatorKind { MajorityVote, DawidSkene, TrustPropagation };

std::string_view to_string(AggregatorKind kind);
/// Accepts "MV", "EM", "TRUST" (and lowercase forms).
AggregatorKind parse_aggregator(std::string_view name);

struct AggregatorOptions {
    /// Class prior P(OUT) used to seed EM; also the prior when confusion is frozen.
    double prior_power = 0.5;
    int max_iters = 100;
    double tol = 1e-6;
    /// TruthFinder dampening factor (gamma).
    double damping = 0.3;
    /// TruthFinder implication weight between the two mutually exclusive claims (rho).
    double implication = 0.5;
    /// TruthFinder initial trust.
    double initial_trust = 0.9;
    bool unclear_as_in = false;
    /// When set, EM runs a single E-step with these confusions and prior_power.
    std::optional<std::map<WorkerId, Confusion>> fixed_confusion;
};

struct Aggregation {
    std::vector<CriterionPosterior> posteriors;  // one per item, in first-seen order
    std::vector<WorkerAccuracyEstimate> workers; // one per worker, in first-seen order
    bool converged = true;
    int iterations = 0;
};

/// Vote-fraction posterior: p_out = #OUT / (#IN + #OUT). Ids are left empty.
/// Throws NoEvidence when no vote is IN or OUT.
CriterionPosterior majority_vote(std::span<const Label> votes, bool unclear_as_in = false);

/// Binary Dawid-Skene EM over the votes of a single criterion, seeded from
/// majority-vote posteriors. Worker confusions get two pseudo-counts at the
/// pooled class accuracy (add-one smoothed over the whole crowd) and the
/// class prior is shrunk toward `prior_power`.
Aggregation dawid_skene_em(std::span<const VoteRecord> slice, const AggregatorOptions& options = {});

/// TruthFinder-style fixed point between worker trust and claim confidence.
Aggregation trust_propagation(std::span<const VoteRecord> slice, const AggregatorOptions& options = {});

/// Majority vote per item plus per-worker agreement rates with the majority.
Aggregation majority_vote_slice(std::span<const VoteRecord> slice, const AggregatorOptions& options = {});

Aggregation aggregate(AggregatorKind kind, std::span<const VoteRecord> slice,
                      const AggregatorOptions& options = {});

/// Mean of p_out over items. Throws NoEvidence when empty.
double estimate_power(std::span<const CriterionPosterior> posteriors);

/// Mean per-worker accuracy on `criterion`, clamped to [0.5, 1].
/// Throws NoEvidence when no worker has an estimate for it.
double estimate_criterion_accuracy(std::span<const WorkerAccuracyEstimate> workers,
                                   const CriterionId& criterion);

}  // namespace screenflow
