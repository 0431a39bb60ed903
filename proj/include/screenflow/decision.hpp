#pragma once

// Multi-criteria exclusion calculus: combining per-criterion posteriors,
// the loss-ratio threshold, stage-wise outcome prediction for criteria
// orderings, run metrics, and Pareto filtering of (price, loss) points.

#include <cstddef>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "screenflow/model.hpp"

namespace screenflow {

enum class Decision { In, Out, LeftToExpert };

std::string_view to_string(Decision d);

struct RunMetrics {
    double price = 0.0;
    long false_exclusions = 0;
    long false_inclusions = 0;
    double loss = 0.0;
    double precision_out = 1.0;
    double recall_out = 1.0;
    long votes_used = 0;
    long items_left_to_experts = 0;
};

struct CriterionOutcomePrediction {
    CriterionId criterion_id;
    double p_classified_out_given_in = 0.0;
    double p_classified_in_given_in = 1.0;
    double p_classified_out_given_out = 0.0;
    double p_classified_in_given_out = 1.0;
    double expected_votes = 0.0;
};

/// P(i in OUT) = 1 - prod_c P(i in IN_c). Throws DomainError on an empty set.
double combine_exclusion(std::span<const double> p_in);

/// lr / (lr + 1)
double decision_threshold(double loss_ratio);

/// Single-stage outcome model: J votes at symmetric accuracy, Bayes
/// posterior with prior `theta`, item excluded when the posterior reaches
/// the loss-ratio threshold.
CriterionOutcomePrediction predict_criterion_outcome(double theta, double accuracy, int votes, double loss_ratio);

/// PFE = PFE_0 + sum_m PFE_m * prod_{j<m} PIN_j, for an item that is IN on every criterion.
double pfe_for_order(std::span<const CriterionOutcomePrediction> stages);

struct OrderEvaluation {
    std::vector<CriterionId> ordering;
    double expected_price = 0.0;
    double expected_loss = 0.0;
    bool dominated = false;
};

/// Expected (price, loss) of screening `n_items` criterion by criterion in
/// `ordering`, J votes per stage, assuming independent criteria.
OrderEvaluation predict_order_cost_loss(std::span<const CriterionId> ordering,
                                        std::span<const CriterionProfile> profiles,
                                        const TaskConfig& config, std::size_t n_items);

inline constexpr std::size_t kMaxRankedCriteria = 8;

/// Every permutation, sorted by expected loss then price (then lexicographic
/// ordering), with Pareto-dominated orderings flagged.
std::vector<OrderEvaluation> rank_orderings(std::span<const CriterionProfile> profiles,
                                            const TaskConfig& config, std::size_t n_items);

/// Throws std::invalid_argument when a decided item has no gold.
RunMetrics compute_metrics(const std::map<ItemId, Decision>& decisions,
                           const std::map<ItemId, bool>& gold_out,
                           const TaskConfig& config, long votes_used);

struct PricedPoint {
    double price = 0.0;
    double loss = 0.0;
    std::size_t tag = 0;  // caller's identity for the point
};

/// Non-dominated subset (lower is better on both axes), in input order.
/// Exact duplicates are all kept.
std::vector<PricedPoint> pareto_frontier(std::span<const PricedPoint> points);

}  // namespace screenflow
