#include "screenflow/decision.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace screenflow {

std::string_view to_string(Decision d) {
    switch (d) {
        case Decision::In: return "IN";
        case Decision::Out: return "OUT";
        case Decision::LeftToExpert: return "LEFT_TO_EXPERT";
    }
    return "IN";
}

double combine_exclusion(std::span<const double> p_in) {
    if (p_in.empty()) throw DomainError("combine_exclusion: no criteria");
    double prod = 1.0;
    for (double p : p_in) {
        if (!(p >= 0.0 && p <= 1.0)) throw DomainError("combine_exclusion: p_in outside [0, 1]");
        prod *= p;
    }
    return 1.0 - prod;
}

double decision_threshold(double loss_ratio) {
    if (!(loss_ratio > 0.0)) throw DomainError("decision_threshold: loss ratio must be > 0");
    return loss_ratio / (loss_ratio + 1.0);
}

namespace {

double binomial_pmf(int n, int k, double p) {
    // Exact powers so that p in {0, 1} gives exact 0/1 masses.
    double coef = 1.0;
    for (int i = 1; i <= k; ++i) coef = coef * static_cast<double>(n - k + i) / static_cast<double>(i);
    return coef * std::pow(p, k) * std::pow(1.0 - p, n - k);
}

}  // namespace

CriterionOutcomePrediction predict_criterion_outcome(double theta, double accuracy, int votes, double loss_ratio) {
    if (!(theta >= 0.0 && theta <= 1.0)) throw DomainError("predict_criterion_outcome: theta outside [0, 1]");
    if (!(accuracy >= 0.5 && accuracy <= 1.0)) throw DomainError("predict_criterion_outcome: accuracy outside [0.5, 1]");
    if (votes < 1) throw DomainError("predict_criterion_outcome: J must be >= 1");
    const double threshold = decision_threshold(loss_ratio);

    CriterionOutcomePrediction pred;
    pred.p_classified_out_given_in = 0.0;
    pred.p_classified_out_given_out = 0.0;
    for (int k = 0; k <= votes; ++k) {
        const double like_out = std::pow(accuracy, k) * std::pow(1.0 - accuracy, votes - k);
        const double like_in = std::pow(1.0 - accuracy, k) * std::pow(accuracy, votes - k);
        const double denom = theta * like_out + (1.0 - theta) * like_in;
        const double posterior_out = denom > 0.0 ? theta * like_out / denom : theta;
        if (posterior_out >= threshold) {
            pred.p_classified_out_given_out += binomial_pmf(votes, k, accuracy);
            pred.p_classified_out_given_in += binomial_pmf(votes, k, 1.0 - accuracy);
        }
    }
    pred.p_classified_out_given_out = std::min(pred.p_classified_out_given_out, 1.0);
    pred.p_classified_out_given_in = std::min(pred.p_classified_out_given_in, 1.0);
    pred.p_classified_in_given_out = 1.0 - pred.p_classified_out_given_out;
    pred.p_classified_in_given_in = 1.0 - pred.p_classified_out_given_in;
    pred.expected_votes = votes;
    return pred;
}

double pfe_for_order(std::span<const CriterionOutcomePrediction> stages) {
    if (stages.empty()) throw DomainError("pfe_for_order: empty ordering");
    double pfe = 0.0;
    double reach = 1.0;
    for (const auto& s : stages) {
        pfe += s.p_classified_out_given_in * reach;
        reach *= s.p_classified_in_given_in;
    }
    return pfe;
}

OrderEvaluation predict_order_cost_loss(std::span<const CriterionId> ordering,
                                        std::span<const CriterionProfile> profiles,
                                        const TaskConfig& config, std::size_t n_items) {
    if (ordering.size() != profiles.size())
        throw std::invalid_argument("predict_order_cost_loss: ordering is not a permutation of the criteria");
    std::vector<const CriterionProfile*> staged;
    staged.reserve(ordering.size());
    for (const auto& id : ordering) {
        auto it = std::find_if(profiles.begin(), profiles.end(), [&](const auto& p) { return p.id == id; });
        if (it == profiles.end()) throw std::invalid_argument("predict_order_cost_loss: unknown criterion " + id);
        if (std::find(staged.begin(), staged.end(), &*it) != staged.end())
            throw std::invalid_argument("predict_order_cost_loss: criterion repeated " + id);
        staged.push_back(&*it);
    }

    const double ppl = price_per_label(config.unit_cost, config.labels_per_worker, config.n_tests);
    std::vector<CriterionOutcomePrediction> preds;
    preds.reserve(staged.size());
    double survival = 1.0;       // P(reach stage m)
    double stage_sum = 0.0;      // sum_m P(reach stage m)
    double all_in_survival = 1.0; // P(IN everywhere and never excluded)
    double p_all_in = 1.0;
    for (const auto* profile : staged) {
        auto pred = predict_criterion_outcome(profile->power, profile->accuracy_estimate,
                                              config.votes_per_item, config.loss_ratio);
        pred.criterion_id = profile->id;
        stage_sum += survival;
        const double theta = profile->power;
        survival *= theta * pred.p_classified_in_given_out + (1.0 - theta) * pred.p_classified_in_given_in;
        all_in_survival *= (1.0 - theta) * pred.p_classified_in_given_in;
        p_all_in *= 1.0 - theta;
        preds.push_back(std::move(pred));
    }
    const double n = static_cast<double>(n_items);
    const double p_false_exclusion = p_all_in * pfe_for_order(preds);
    const double p_false_inclusion = std::max(0.0, survival - all_in_survival);

    OrderEvaluation eval;
    eval.ordering.assign(ordering.begin(), ordering.end());
    eval.expected_price = ppl * config.votes_per_item * n * stage_sum;
    eval.expected_loss = n * (config.loss_ratio * p_false_exclusion + p_false_inclusion);
    return eval;
}

std::vector<OrderEvaluation> rank_orderings(std::span<const CriterionProfile> profiles,
                                            const TaskConfig& config, std::size_t n_items) {
    if (profiles.empty()) throw std::invalid_argument("rank_orderings: no criteria");
    if (profiles.size() > kMaxRankedCriteria)
        throw std::length_error("rank_orderings: permutation budget exceeded (" + std::to_string(profiles.size()) +
                                " criteria, at most " + std::to_string(kMaxRankedCriteria) + ")");
    std::vector<std::size_t> perm(profiles.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<OrderEvaluation> all;
    do {
        std::vector<CriterionId> ordering;
        for (auto i : perm) ordering.push_back(profiles[i].id);
        all.push_back(predict_order_cost_loss(ordering, profiles, config, n_items));
    } while (std::next_permutation(perm.begin(), perm.end()));

    // Loss is order-invariant up to rounding; compare on a fixed grid so
    // floating noise never decides the ranking.
    auto key = [](double v) { return std::llround(v * 1e6); };
    for (auto& a : all) {
        for (const auto& b : all) {
            const bool weakly = key(b.expected_price) <= key(a.expected_price) && key(b.expected_loss) <= key(a.expected_loss);
            const bool strictly = key(b.expected_price) < key(a.expected_price) || key(b.expected_loss) < key(a.expected_loss);
            if (weakly && strictly) {
                a.dominated = true;
                break;
            }
        }
    }
    std::stable_sort(all.begin(), all.end(), [&](const auto& a, const auto& b) {
        if (key(a.expected_loss) != key(b.expected_loss)) return key(a.expected_loss) < key(b.expected_loss);
        return key(a.expected_price) < key(b.expected_price);
    });
    return all;
}

RunMetrics compute_metrics(const std::map<ItemId, Decision>& decisions, const std::map<ItemId, bool>& gold_out,
                           const TaskConfig& config, long votes_used) {
    RunMetrics m;
    long true_out_excluded = 0;
    for (const auto& [item, decision] : decisions) {
        auto it = gold_out.find(item);
        if (it == gold_out.end()) throw std::invalid_argument("compute_metrics: no gold for item " + item);
        const bool is_out = it->second;
        if (decision == Decision::Out) {
            if (is_out) ++true_out_excluded;
            else ++m.false_exclusions;
        } else {
            if (decision == Decision::LeftToExpert) ++m.items_left_to_experts;
            if (is_out) ++m.false_inclusions;
        }
    }
    m.loss = config.loss_ratio * static_cast<double>(m.false_exclusions) + static_cast<double>(m.false_inclusions);
    const long excluded = true_out_excluded + m.false_exclusions;
    const long truly_out = true_out_excluded + m.false_inclusions;
    m.precision_out = excluded == 0 ? 1.0 : static_cast<double>(true_out_excluded) / static_cast<double>(excluded);
    m.recall_out = truly_out == 0 ? 1.0 : static_cast<double>(true_out_excluded) / static_cast<double>(truly_out);
    m.votes_used = votes_used;
    m.price = static_cast<double>(votes_used) * price_per_label(config.unit_cost, config.labels_per_worker, config.n_tests);
    return m;
}

std::vector<PricedPoint> pareto_frontier(std::span<const PricedPoint> points) {
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
        if (points[a].price != points[b].price) return points[a].price < points[b].price;
        return points[a].loss < points[b].loss;
    });
    std::vector<char> keep(points.size(), 0);
    double best_before = std::numeric_limits<double>::infinity();  // min loss at strictly lower price
    for (std::size_t g = 0; g < order.size();) {
        std::size_t end = g;
        while (end < order.size() && points[order[end]].price == points[order[g]].price) ++end;
        const double group_min = points[order[g]].loss;
        for (std::size_t k = g; k < end; ++k) {
            const auto& p = points[order[k]];
            if (p.loss == group_min && best_before > p.loss) keep[order[k]] = 1;
        }
        best_before = std::min(best_before, group_min);
        g = end;
    }
    std::vector<PricedPoint> out;
    for (std::size_t i = 0; i < points.size(); ++i)
        if (keep[i]) out.push_back(points[i]);
    return out;
}

}  // namespace screenflow
