#include "screenflow/strategy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "screenflow/random.hpp"

namespace screenflow {

std::string_view to_string(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::Baseline: return "baseline";
        case StrategyKind::MRuns: return "m-runs";
        case StrategyKind::SMRuns: return "sm-runs";
    }
    return "baseline";
}

StrategyKind parse_strategy(std::string_view name) {
    if (name == "baseline" || name == "base") return StrategyKind::Baseline;
    if (name == "m-runs" || name == "mruns" || name == "m") return StrategyKind::MRuns;
    if (name == "sm-runs" || name == "smruns" || name == "sm") return StrategyKind::SMRuns;
    throw std::invalid_argument("unknown strategy '" + std::string(name) + "' (valid: baseline, m-runs, sm-runs)");
}

namespace {

std::optional<std::map<ItemId, bool>> gold_table(std::span<const Item> items) {
    std::map<ItemId, bool> gold;
    for (const auto& item : items) {
        if (!item.gold) return std::nullopt;
        gold.emplace(item.id, item.gold_out());
    }
    return gold;
}

void finalize(StrategyOutcome& outcome, std::span<const Item> items, const VoteSource& source,
              const StrategyConfig& config) {
    if (auto gold = gold_table(items)) {
        outcome.metrics = compute_metrics(outcome.decisions, *gold, config.task, source.votes_served());
        outcome.has_metrics = true;
    } else {
        outcome.metrics.votes_used = source.votes_served();
        outcome.metrics.price = static_cast<double>(source.votes_served()) *
                                price_per_label(config.task.unit_cost, config.task.labels_per_worker, config.task.n_tests);
        for (const auto& [id, d] : outcome.decisions)
            outcome.metrics.items_left_to_experts += d == Decision::LeftToExpert;
    }
}

std::vector<VoteRequest> criterion_major_requests(std::span<const Item> items, std::span<const CriterionId> criteria,
                                                  int votes) {
    std::vector<VoteRequest> requests;
    requests.reserve(items.size() * criteria.size());
    for (const auto& c : criteria)
        for (const auto& item : items) requests.push_back({item.id, c, votes});
    return requests;
}

void throw_on_shortfall(const VoteBatch& batch, const char* where) {
    if (batch.shortfalls.empty()) return;
    std::vector<ItemId> affected;
    for (const auto& s : batch.shortfalls)
        if (std::find(affected.begin(), affected.end(), s.item_id) == affected.end()) affected.push_back(s.item_id);
    std::string msg = std::string(where) + ": source could not supply the requested votes for " +
                      std::to_string(affected.size()) + " item(s):";
    for (std::size_t i = 0; i < affected.size() && i < 20; ++i) msg += " " + affected[i];
    if (affected.size() > 20) msg += " ...";
    throw PartialCoverage(msg, std::move(affected));
}

// Per-criterion aggregation of a vote batch; returns p_in per (item, criterion).
struct CriterionAggregate {
    std::map<ItemId, double> p_in;
    Aggregation raw;
};

CriterionAggregate aggregate_criterion(const VoteStore& store, const CriterionId& criterion, AggregatorKind kind,
                                       AggregatorOptions options, const TaskConfig& task) {
    options.unclear_as_in = task.unclear_as_in;
    const auto slice = store.by_criterion(criterion);
    CriterionAggregate out;
    if (slice.empty()) return out;
    out.raw = aggregate(kind, slice, options);
    for (const auto& p : out.raw.posteriors) out.p_in[p.item_id] = p.p_in;
    return out;
}

std::vector<Item> sample_items(std::span<const Item> items, std::size_t n, Rng& rng, std::vector<char>& picked) {
    std::vector<std::size_t> idx(items.size());
    std::iota(idx.begin(), idx.end(), 0);
    shuffle(idx, rng);
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    picked.assign(items.size(), 0);
    std::vector<Item> sample;
    sample.reserve(n);
    for (auto i : idx) {
        picked[i] = 1;
        sample.push_back(items[i]);
    }
    return sample;
}

BaselineEstimate baseline_iteration(std::span<const Item> sample, std::span<const CriterionId> criteria,
                                    VoteSource& source, const StrategyConfig& config, AggregatorKind kind) {
    const auto& task = config.task;
    const auto requests = criterion_major_requests(sample, criteria, task.votes_per_item);
    auto batch = source.request_votes(requests);
    throw_on_shortfall(batch, "baseline iteration");

    VoteStore store;
    store.append(batch.records);

    BaselineEstimate est;
    const double threshold = decision_threshold(task.loss_ratio);
    std::map<ItemId, std::vector<double>> p_in_by_item;
    for (const auto& item : sample) {
        est.items.push_back(item.id);
        p_in_by_item[item.id];
    }
    for (const auto& c : criteria) {
        auto agg = aggregate_criterion(store, c, kind, config.aggregator_options, task);
        for (const auto& item : sample) {
            auto it = agg.p_in.find(item.id);
            p_in_by_item[item.id].push_back(it == agg.p_in.end() ? 1.0 : it->second);
        }
        double power = agg.raw.posteriors.empty() ? 0.0 : estimate_power(agg.raw.posteriors);
        double accuracy = 0.5;
        try {
            accuracy = estimate_criterion_accuracy(agg.raw.workers, c);
        } catch (const NoEvidence&) {
        }
        power = std::clamp(power + config.power_bias, 0.0, 1.0);
        accuracy = std::clamp(accuracy + config.accuracy_bias, 0.5, 1.0);
        if (config.known_power) power = config.known_power->at(c);
        if (config.known_accuracy) accuracy = config.known_accuracy->at(c);
        est.power[c] = power;
        est.accuracy[c] = accuracy;
    }
    for (const auto& [id, p] : p_in_by_item)
        est.decisions[id] = combine_exclusion(p) >= threshold ? Decision::Out : Decision::In;
    est.votes = std::move(batch.records);
    return est;
}

void check_criteria(std::span<const CriterionId> criteria) {
    if (criteria.empty()) throw std::invalid_argument("strategy: no criteria");
}

}  // namespace

BaselineEstimate run_baseline_iteration(std::span<const Item> sample, std::span<const CriterionId> criteria,
                                        VoteSource& source, const StrategyConfig& config) {
    return baseline_iteration(sample, criteria, source, config, config.estimation_aggregator);
}

StrategyOutcome run_baseline(std::span<const Item> items, std::span<const CriterionId> criteria, VoteSource& source,
                             const StrategyConfig& config) {
    config.task.validate();
    check_criteria(criteria);
    auto est = baseline_iteration(items, criteria, source, config, config.aggregator);

    StrategyOutcome outcome;
    outcome.strategy = StrategyKind::Baseline;
    outcome.decisions = std::move(est.decisions);
    outcome.power_estimates = est.power;
    outcome.accuracy_estimates = est.accuracy;
    TraceEntry entry;
    entry.iteration = 0;
    entry.phase = "single-run";
    entry.votes_requested = static_cast<long>(items.size() * criteria.size()) * config.task.votes_per_item;
    entry.power_estimates = est.power;
    for (const auto& [id, d] : outcome.decisions) (d == Decision::Out ? entry.items_closed_out : entry.items_closed_in)++;
    outcome.trace.push_back(std::move(entry));
    finalize(outcome, items, source, config);
    return outcome;
}

StrategyOutcome run_m_runs(std::span<const Item> items, std::span<const CriterionId> criteria, VoteSource& source,
                           const StrategyConfig& config) {
    const auto& task = config.task;
    task.validate();
    check_criteria(criteria);
    if (items.size() <= config.m_runs_baseline_size)
        throw std::invalid_argument("m-runs: baseline of " + std::to_string(config.m_runs_baseline_size) +
                                    " items needs a larger item pool (got " + std::to_string(items.size()) + ")");
    Rng rng(derive_seed(task.rng_seed, {0x4d52}));
    std::vector<char> picked;
    const auto sample = sample_items(items, config.m_runs_baseline_size, rng, picked);
    auto est = run_baseline_iteration(sample, criteria, source, config);

    StrategyOutcome outcome;
    outcome.strategy = StrategyKind::MRuns;
    outcome.decisions = est.decisions;
    outcome.power_estimates = est.power;
    outcome.accuracy_estimates = est.accuracy;
    {
        TraceEntry entry;
        entry.phase = "baseline";
        entry.votes_requested = static_cast<long>(sample.size() * criteria.size()) * task.votes_per_item;
        entry.power_estimates = est.power;
        for (const auto& [id, d] : est.decisions) (d == Decision::Out ? entry.items_closed_out : entry.items_closed_in)++;
        outcome.trace.push_back(std::move(entry));
    }

    std::vector<const Item*> undecided;
    for (std::size_t i = 0; i < items.size(); ++i)
        if (!picked[i]) undecided.push_back(&items[i]);

    std::vector<CriterionProfile> profiles;
    for (const auto& c : criteria) profiles.push_back({c, est.power[c], 0.0, est.accuracy[c]});
    const auto ranking = rank_orderings(profiles, task, undecided.size());
    outcome.criteria_order = ranking.front().ordering;

    const double threshold = decision_threshold(task.loss_ratio);
    int stage = 0;
    for (const auto& c : outcome.criteria_order) {
        ++stage;
        if (undecided.empty()) break;
        std::vector<VoteRequest> requests;
        requests.reserve(undecided.size());
        for (const auto* item : undecided) requests.push_back({item->id, c, task.votes_per_item});
        auto batch = source.request_votes(requests);
        throw_on_shortfall(batch, "m-runs stage");
        VoteStore store;
        store.append(batch.records);
        auto options = config.aggregator_options;
        options.prior_power = std::clamp(est.power[c], 0.01, 0.99);
        auto agg = aggregate_criterion(store, c, config.estimation_aggregator, options, task);

        TraceEntry entry;
        entry.iteration = stage;
        entry.phase = "criterion " + c;
        entry.votes_requested = static_cast<long>(requests.size()) * task.votes_per_item;
        entry.power_estimates = est.power;
        std::vector<const Item*> survivors;
        for (const auto* item : undecided) {
            auto it = agg.p_in.find(item->id);
            const double p_out = it == agg.p_in.end() ? 0.0 : 1.0 - it->second;
            if (p_out >= threshold) {
                outcome.decisions[item->id] = Decision::Out;
                ++entry.items_closed_out;
            } else {
                survivors.push_back(item);
            }
        }
        undecided.swap(survivors);
        outcome.trace.push_back(std::move(entry));
    }
    for (const auto* item : undecided) outcome.decisions[item->id] = Decision::In;
    finalize(outcome, items, source, config);
    return outcome;
}

StrategyOutcome run_sm_runs(std::span<const Item> items, std::span<const CriterionId> criteria, VoteSource& source,
                            const StrategyConfig& config) {
    const auto& task = config.task;
    task.validate();
    check_criteria(criteria);
    if (items.size() <= config.sm_baseline_size)
        throw std::invalid_argument("sm-runs: baseline of " + std::to_string(config.sm_baseline_size) +
                                    " items needs a larger item pool (got " + std::to_string(items.size()) + ")");
    Rng rng(derive_seed(task.rng_seed, {0x534d}));
    std::vector<char> picked;
    const auto sample = sample_items(items, config.sm_baseline_size, rng, picked);
    auto est = run_baseline_iteration(sample, criteria, source, config);

    StrategyOutcome outcome;
    outcome.strategy = StrategyKind::SMRuns;
    outcome.decisions = est.decisions;
    outcome.accuracy_estimates = est.accuracy;
    {
        TraceEntry entry;
        entry.phase = "baseline";
        entry.votes_requested = static_cast<long>(sample.size() * criteria.size()) * task.votes_per_item;
        entry.power_estimates = est.power;
        for (const auto& [id, d] : est.decisions) (d == Decision::Out ? entry.items_closed_out : entry.items_closed_in)++;
        outcome.trace.push_back(std::move(entry));
    }

    VoteStore store;
    store.append(est.votes);

    const std::size_t n_criteria = criteria.size();
    std::vector<double> theta(n_criteria), theta0(n_criteria), accuracy(n_criteria);
    for (std::size_t c = 0; c < n_criteria; ++c) {
        theta[c] = theta0[c] = est.power[criteria[c]];
        accuracy[c] = est.accuracy[criteria[c]];
    }

    // Dense state over the non-baseline items.
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < items.size(); ++i)
        if (!picked[i]) pool.push_back(i);
    const std::size_t n_pool = pool.size();
    std::unordered_map<std::string_view, std::size_t> pool_index;
    for (std::size_t k = 0; k < n_pool; ++k) pool_index.emplace(items[pool[k]].id, k);

    enum class State : std::uint8_t { Open, Closed };
    std::vector<State> state(n_pool, State::Open);
    std::vector<int> j_in(n_pool * n_criteria, 0), j_out(n_pool * n_criteria, 0);
    std::vector<char> exhausted(n_pool * n_criteria, 0);
    std::vector<double> p_in(n_pool * n_criteria);
    std::vector<double> value(n_pool, 0.0);
    std::vector<double> p_out_now(n_pool, 0.0);
    std::vector<int> chosen(n_pool, -1), chosen_n_min(n_pool, 0);
    std::size_t open = n_pool;

    auto refresh = [&](std::size_t k) {
        double prod = 1.0;
        for (std::size_t c = 0; c < n_criteria; ++c) {
            const std::size_t at = k * n_criteria + c;
            p_in[at] = posterior_update(theta[c], j_in[at], j_out[at], accuracy[c]);
            prod *= p_in[at];
        }
        p_out_now[k] = 1.0 - prod;
        return p_out_now[k];
    };

    auto close = [&](std::size_t k, Decision d, double p_out, int iteration, TraceEntry& entry) {
        state[k] = State::Closed;
        --open;
        outcome.decisions[items[pool[k]].id] = d;
        outcome.closures.push_back({items[pool[k]].id, d, p_out, iteration});
        if (d == Decision::Out) ++entry.items_closed_out;
        else if (d == Decision::In) ++entry.items_closed_in;
        else ++entry.items_given_up;
    };

    // Closes on P_out / P_in thresholds; returns true when the item was closed.
    auto try_close = [&](std::size_t k, int iteration, TraceEntry& entry) {
        const double p_out = refresh(k);
        if (p_out > task.p_out_threshold) {
            close(k, Decision::Out, p_out, iteration, entry);
            return true;
        }
        if (1.0 - p_out > task.p_in_threshold) {
            close(k, Decision::In, p_out, iteration, entry);
            return true;
        }
        return false;
    };

    std::vector<double> others(n_criteria > 0 ? n_criteria - 1 : 0);
    std::vector<CriterionCandidate> candidates(n_criteria);
    for (std::size_t c = 0; c < n_criteria; ++c) candidates[c].criterion_id = criteria[c];
    std::vector<std::size_t> ranked;
    std::vector<std::vector<VoteRecord>> criterion_votes(n_criteria);
    for (const auto& v : est.votes) {
        auto it = std::find(criteria.begin(), criteria.end(), v.criterion_id);
        if (it != criteria.end()) criterion_votes[static_cast<std::size_t>(it - criteria.begin())].push_back(v);
    }

    int iteration = 0;
    while (open > 0) {
        ++iteration;
        TraceEntry entry;
        entry.iteration = iteration;
        entry.phase = "short-run";

        // Close, rank, give up.
        ranked.clear();
        for (std::size_t k = 0; k < n_pool; ++k) {
            if (state[k] != State::Open) continue;
            if (try_close(k, iteration, entry)) continue;
            for (std::size_t c = 0; c < n_criteria; ++c) {
                std::size_t o = 0;
                for (std::size_t c2 = 0; c2 < n_criteria; ++c2)
                    if (c2 != c) others[o++] = p_in[k * n_criteria + c2];
                auto& cand = candidates[c];
                cand.p_success = 0.0;
                cand.value = 0.0;
                if (exhausted[k * n_criteria + c]) {
                    cand.n_min.reset();
                    continue;
                }
                cand.n_min = compute_n_min(p_in[k * n_criteria + c], others, accuracy[c], task.p_out_threshold);
                if (cand.n_min) {
                    cand.p_success = p_consecutive_out(p_in[k * n_criteria + c], accuracy[c], *cand.n_min);
                    cand.value = cand.p_success / *cand.n_min;
                }
            }
            const auto best = choose_criterion(candidates);
            value[k] = best ? candidates[*best].value : 0.0;
            if (!best || should_give_up(value[k], task)) {
                close(k, Decision::LeftToExpert, p_out_now[k], iteration, entry);
                continue;
            }
            chosen[k] = static_cast<int>(*best);
            chosen_n_min[k] = *candidates[*best].n_min;
            ranked.push_back(k);
        }
        if (ranked.empty()) {
            entry.power_estimates = {};
            for (std::size_t c = 0; c < n_criteria; ++c) entry.power_estimates[criteria[c]] = theta[c];
            outcome.trace.push_back(std::move(entry));
            break;
        }

        // Batch of highest-value items.
        const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(task.batch_size), ranked.size());
        std::partial_sort(ranked.begin(), ranked.begin() + static_cast<long>(take), ranked.end(), [&](auto a, auto b) {
            if (value[a] != value[b]) return value[a] > value[b];
            if (chosen_n_min[a] != chosen_n_min[b]) return chosen_n_min[a] < chosen_n_min[b];
            return a < b;
        });
        std::vector<VoteRequest> requests;
        requests.reserve(take);
        for (std::size_t r = 0; r < take; ++r) {
            const auto k = ranked[r];
            requests.push_back({items[pool[k]].id, criteria[static_cast<std::size_t>(chosen[k])], 1});
        }
        auto batch = source.request_votes(requests);
        entry.votes_requested = static_cast<long>(take);
        for (const auto& s : batch.shortfalls) {
            const auto k = pool_index.at(s.item_id);
            const auto c = static_cast<std::size_t>(std::find(criteria.begin(), criteria.end(), s.criterion_id) - criteria.begin());
            exhausted[k * n_criteria + c] = 1;
            entry.shortfall += s.missing;
            outcome.shortfall += s.missing;
        }
        store.append(batch.records);
        for (const auto& v : batch.records) {
            const auto k = pool_index.at(v.item_id);
            const auto c = static_cast<std::size_t>(std::find(criteria.begin(), criteria.end(), v.criterion_id) - criteria.begin());
            const auto label = effective_label(v.label, task.unclear_as_in);
            if (label == Label::In) ++j_in[k * n_criteria + c];
            else if (label == Label::Out) ++j_out[k * n_criteria + c];
            if (config.reestimate_accuracy) criterion_votes[c].push_back(v);
        }
        for (std::size_t r = 0; r < take; ++r) {
            const auto k = ranked[r];
            if (state[k] == State::Open) try_close(k, iteration, entry);
        }

        // Re-estimate power over every voted item, shrunk toward the baseline estimate.
        if (!config.known_power) {
            const double base_weight = static_cast<double>(sample.size());
            for (std::size_t c = 0; c < n_criteria; ++c) {
                double sum = 0.0;
                std::size_t voted = 0;
                for (std::size_t k = 0; k < n_pool; ++k) {
                    const std::size_t at = k * n_criteria + c;
                    if (j_in[at] + j_out[at] == 0) continue;
                    sum += 1.0 - posterior_update(theta[c], j_in[at], j_out[at], accuracy[c]);
                    ++voted;
                }
                theta[c] = std::clamp((base_weight * theta0[c] + sum) / (base_weight + static_cast<double>(voted)), 0.0, 1.0);
            }
        }
        if (config.reestimate_accuracy && !config.known_accuracy) {
            for (std::size_t c = 0; c < n_criteria; ++c) {
                auto options = config.aggregator_options;
                options.unclear_as_in = task.unclear_as_in;
                const auto agg = aggregate(config.estimation_aggregator, criterion_votes[c], options);
                try {
                    accuracy[c] = std::clamp(estimate_criterion_accuracy(agg.workers, criteria[c]) + config.accuracy_bias,
                                             0.5, 1.0);
                } catch (const NoEvidence&) {
                }
            }
        }
        for (std::size_t c = 0; c < n_criteria; ++c) entry.power_estimates[criteria[c]] = theta[c];
        outcome.trace.push_back(std::move(entry));
    }

    for (std::size_t c = 0; c < n_criteria; ++c) {
        outcome.power_estimates[criteria[c]] = theta[c];
        outcome.accuracy_estimates[criteria[c]] = accuracy[c];
    }
    finalize(outcome, items, source, config);
    return outcome;
}

StrategyOutcome run_strategy(StrategyKind kind, std::span<const Item> items, std::span<const CriterionId> criteria,
                             VoteSource& source, const StrategyConfig& config) {
    switch (kind) {
        case StrategyKind::Baseline: return run_baseline(items, criteria, source, config);
        case StrategyKind::MRuns: return run_m_runs(items, criteria, source, config);
        case StrategyKind::SMRuns: return run_sm_runs(items, criteria, source, config);
    }
    throw std::invalid_argument("unknown strategy");
}

}  // namespace screenflow
