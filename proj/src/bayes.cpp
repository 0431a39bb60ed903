#include <algorithm>
#include <cmath>
#include <numeric>

#include "screenflow/strategy.hpp"

namespace screenflow {

namespace {

void check_accuracy(double accuracy, const char* op) {
    if (!(accuracy >= 0.5 && accuracy <= 1.0)) throw DomainError(std::string(op) + ": accuracy outside [0.5, 1]");
}

void check_probability(double p, const char* op) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError(std::string(op) + ": probability outside [0, 1]");
}

}  // namespace

double posterior_update(double theta, int j_in, int j_out, double accuracy) {
    check_probability(theta, "posterior_update");
    check_accuracy(accuracy, "posterior_update");
    if (j_in < 0 || j_out < 0) throw DomainError("posterior_update: negative vote count");
    if (theta <= 0.0) return 1.0;
    if (theta >= 1.0) return 0.0;
    if (accuracy >= 1.0) {
        if (j_in > 0 && j_out > 0) return 1.0 - theta;
        if (j_out > 0) return 0.0;
        if (j_in > 0) return 1.0;
        return 1.0 - theta;
    }
    // Binomial coefficients cancel; work in log-odds of IN.
    const double log_odds = std::log1p(-theta) - std::log(theta) +
                            static_cast<double>(j_in - j_out) * (std::log(accuracy) - std::log1p(-accuracy));
    return 1.0 / (1.0 + std::exp(-log_odds));
}

double p_next_vote_out(double p_in, double accuracy) {
    check_probability(p_in, "p_next_vote_out");
    check_accuracy(accuracy, "p_next_vote_out");
    return accuracy * (1.0 - p_in) + (1.0 - accuracy) * p_in;
}

namespace {

// Posterior after one more OUT vote.
double after_out_vote(double p_in, double accuracy) {
    const double num = p_in * (1.0 - accuracy);
    const double den = num + (1.0 - p_in) * accuracy;
    return den > 0.0 ? num / den : p_in;
}

}  // namespace

double p_consecutive_out(double p_in, double accuracy, int n) {
    if (n < 1) throw DomainError("p_consecutive_out: n must be >= 1");
    check_probability(p_in, "p_consecutive_out");
    check_accuracy(accuracy, "p_consecutive_out");
    double prob = 1.0;
    for (int k = 0; k < n; ++k) {
        prob *= p_next_vote_out(p_in, accuracy);
        p_in = after_out_vote(p_in, accuracy);
    }
    return prob;
}

double p_in_after_out_votes(double p_in, double accuracy, int n) {
    check_probability(p_in, "p_in_after_out_votes");
    check_accuracy(accuracy, "p_in_after_out_votes");
    if (n <= 0 || p_in <= 0.0 || p_in >= 1.0) return p_in;
    if (accuracy >= 1.0) return 0.0;
    const double log_odds = std::log(p_in) - std::log1p(-p_in) -
                            static_cast<double>(n) * (std::log(accuracy) - std::log1p(-accuracy));
    return 1.0 / (1.0 + std::exp(-log_odds));
}

std::optional<int> compute_n_min(double p_in_current, std::span<const double> other_p_in, double accuracy,
                                 double p_out_threshold) {
    check_probability(p_in_current, "compute_n_min");
    check_accuracy(accuracy, "compute_n_min");
    double others = 1.0;
    for (double p : other_p_in) {
        check_probability(p, "compute_n_min");
        others *= p;
    }
    const double limit = 1.0 - p_out_threshold;  // need p_in(n) * others < limit
    auto crossed = [&](int n) { return p_in_after_out_votes(p_in_current, accuracy, n) * others < limit; };

    if (crossed(0)) return 1;
    if (accuracy <= 0.5 || p_in_current >= 1.0) return std::nullopt;
    if (accuracy >= 1.0) return 1;

    // Closed-form estimate from the log-odds, then settle on the exact integer.
    const double target_ratio = limit / others;  // p_in(n) < target_ratio
    const double needed = std::log((1.0 / target_ratio - 1.0) * p_in_current / (1.0 - p_in_current)) /
                          (std::log(accuracy) - std::log1p(-accuracy));
    double guess = std::isfinite(needed) ? std::ceil(needed) : 1.0;
    int n = static_cast<int>(std::clamp(guess, 1.0, static_cast<double>(kNMinCap) + 1.0));
    while (n > 1 && crossed(n - 1)) --n;
    while (n <= kNMinCap && !crossed(n)) ++n;
    if (n > kNMinCap) return std::nullopt;
    return n;
}

std::optional<std::size_t> choose_criterion(std::span<const CriterionCandidate> candidates) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& c = candidates[i];
        if (!c.n_min) continue;
        if (!best) {
            best = i;
            continue;
        }
        const auto& b = candidates[*best];
        if (c.value > b.value ||
            (c.value == b.value && (*c.n_min < *b.n_min || (*c.n_min == *b.n_min && c.criterion_id < b.criterion_id))))
            best = i;
    }
    return best;
}

BeliefState make_belief(ItemId item, std::map<CriterionId, double> p_in) {
    BeliefState b;
    b.item_id = std::move(item);
    std::vector<double> values;
    for (const auto& [c, p] : p_in) values.push_back(p);
    b.p_out_combined = combine_exclusion(values);
    b.p_in = std::move(p_in);
    return b;
}

std::vector<BeliefState> rank_items(std::vector<BeliefState> beliefs, const std::map<CriterionId, double>& accuracy,
                                    const TaskConfig& config) {
    for (auto& b : beliefs) {
        std::vector<CriterionCandidate> candidates;
        std::vector<double> others;
        for (const auto& [criterion, p] : b.p_in) {
            others.clear();
            for (const auto& [c2, p2] : b.p_in)
                if (c2 != criterion) others.push_back(p2);
            auto acc_it = accuracy.find(criterion);
            if (acc_it == accuracy.end()) throw std::invalid_argument("rank_items: no accuracy for criterion " + criterion);
            CriterionCandidate cand{criterion, compute_n_min(p, others, acc_it->second, config.p_out_threshold), 0.0, 0.0};
            if (cand.n_min) {
                cand.p_success = p_consecutive_out(p, acc_it->second, *cand.n_min);
                cand.value = cand.p_success / *cand.n_min;
            }
            b.n_min[criterion] = cand.n_min;
            b.p_success[criterion] = cand.p_success;
            candidates.push_back(std::move(cand));
        }
        const auto best = choose_criterion(candidates);
        if (best) {
            b.chosen_criterion = candidates[*best].criterion_id;
            b.value = candidates[*best].value;
        } else {
            b.chosen_criterion.reset();
            b.value = 0.0;
        }
    }
    std::vector<std::size_t> order(beliefs.size());
    std::iota(order.begin(), order.end(), 0);
    auto n_min_of = [&](const BeliefState& b) {
        if (!b.chosen_criterion) return kNMinCap + 1;
        return b.n_min.at(*b.chosen_criterion).value_or(kNMinCap + 1);
    };
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
        if (beliefs[a].value != beliefs[b].value) return beliefs[a].value > beliefs[b].value;
        return n_min_of(beliefs[a]) < n_min_of(beliefs[b]);
    });
    std::vector<BeliefState> ranked;
    ranked.reserve(beliefs.size());
    for (auto i : order) ranked.push_back(std::move(beliefs[i]));
    return ranked;
}

bool should_give_up(double value, const TaskConfig& config) {
    if (value < 0.0) throw DomainError("should_give_up: negative value");
    if (value == 0.0) return true;
    return 1.0 / value > config.stop_threshold;
}

}  // namespace screenflow
