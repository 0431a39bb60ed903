#include "screenflow/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

namespace screenflow {

std::vector<Item> generate_items(std::span<const CriterionId> criteria, std::span<const double> powers,
                                 std::size_t n_items, std::uint64_t seed) {
    if (criteria.size() != powers.size()) throw std::invalid_argument("generate_items: one power per criterion");
    Rng rng(seed);
    const std::size_t width = std::max<std::size_t>(4, std::to_string(n_items > 0 ? n_items - 1 : 0).size());
    std::vector<Item> items;
    items.reserve(n_items);
    for (std::size_t i = 0; i < n_items; ++i) {
        auto digits = std::to_string(i);
        Item item{"i" + std::string(width - digits.size(), '0') + digits, std::map<CriterionId, Label>{}};
        for (std::size_t c = 0; c < criteria.size(); ++c)
            (*item.gold)[criteria[c]] = bernoulli(rng, powers[c]) ? Label::Out : Label::In;
        items.push_back(std::move(item));
    }
    return items;
}

CrowdConfig crowd_for(const ExperimentConfig& config, int n_tests, std::uint64_t seed) {
    CrowdConfig crowd = config.crowd;
    crowd.difficulty.clear();
    crowd.accuracy_target.clear();
    for (std::size_t i = 0; i < config.difficulties.size(); ++i)
        crowd.difficulty[config.criteria[i]] = config.difficulties[i];
    for (std::size_t i = 0; i < config.accuracy_targets.size(); ++i)
        crowd.accuracy_target[config.criteria[i]] = config.accuracy_targets[i];
    crowd.n_tests = n_tests;
    crowd.labels_per_worker = config.strategy.task.labels_per_worker;
    crowd.unit_cost = config.strategy.task.unit_cost;
    crowd.rng_seed = seed;
    return crowd;
}

StrategyConfig strategy_for(const ExperimentConfig& config, int n_tests, int votes_per_item, std::uint64_t seed) {
    StrategyConfig s = config.strategy;
    s.task.n_tests = n_tests;
    s.task.votes_per_item = votes_per_item;
    s.task.rng_seed = seed;
    if (!config.known_powers.empty()) {
        s.known_power.emplace();
        for (std::size_t i = 0; i < config.criteria.size(); ++i) (*s.known_power)[config.criteria[i]] = config.known_powers[i];
    }
    if (!config.known_accuracies.empty()) {
        s.known_accuracy.emplace();
        for (std::size_t i = 0; i < config.criteria.size(); ++i)
            (*s.known_accuracy)[config.criteria[i]] = config.known_accuracies[i];
    }
    return s;
}

ReplicationSeeds replication_seeds(std::uint64_t master, int replication) {
    const auto rep = static_cast<std::uint64_t>(replication);
    return {derive_seed(master, {rep}), derive_seed(master, {rep, 1}), derive_seed(master, {rep, 2}),
            derive_seed(master, {rep, 3})};
}

SimulationRun simulate_once(const ExperimentConfig& config, StrategyKind strategy, int n_tests, int votes_per_item,
                            int replication) {
    const auto seeds = replication_seeds(config.strategy.task.rng_seed, replication);
    const auto items = generate_items(config.criteria, config.powers, config.n_items, seeds.items);
    SimulatedCrowd crowd(crowd_for(config, n_tests, seeds.crowd), config.criteria, items);
    const auto sconf = strategy_for(config, n_tests, votes_per_item, seeds.strategy);
    SimulationRun run;
    run.outcome = run_strategy(strategy, items, config.criteria, crowd, sconf);
    run.row = make_metrics_row(run.outcome, sconf.task, config.scenario, replication, seeds.replication);
    return run;
}

void parallel_for(std::size_t jobs, unsigned parallelism, const std::function<void(std::size_t)>& task) {
    const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, parallelism), jobs));
    if (threads <= 1) {
        for (std::size_t j = 0; j < jobs; ++j) task(j);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const auto j = next.fetch_add(1);
                if (j >= jobs) return;
                try {
                    task(j);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next = jobs;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

std::vector<MetricsRow> run_sweep(const ExperimentConfig& config, unsigned parallelism,
                                  const std::function<void(std::size_t, std::size_t)>& progress) {
    config.validate();
    struct Job {
        StrategyKind strategy;
        int n_tests;
        int votes;
        int replication;
    };
    const std::vector<int> nt_grid = config.n_tests_grid.empty() ? std::vector<int>{config.strategy.task.n_tests}
                                                                  : config.n_tests_grid;
    const std::vector<int> j_grid =
        config.votes_grid.empty() ? std::vector<int>{config.strategy.task.votes_per_item} : config.votes_grid;
    std::vector<Job> jobs;
    for (auto s : config.strategies)
        for (int nt : nt_grid)
            for (int j : j_grid)
                for (int r = 0; r < config.replications; ++r) jobs.push_back({s, nt, j, r});

    std::vector<MetricsRow> rows(jobs.size());
    std::atomic<std::size_t> done{0};
    std::mutex progress_mutex;
    parallel_for(jobs.size(), parallelism, [&](std::size_t k) {
        const auto& job = jobs[k];
        rows[k] = simulate_once(config, job.strategy, job.n_tests, job.votes, job.replication).row;
        const auto finished = ++done;
        if (progress) {
            std::lock_guard lock(progress_mutex);
            progress(finished, jobs.size());
        }
    });
    return rows;
}

DatasetBundle generate_dataset(const ExperimentConfig& config, int votes_per_item, std::uint64_t seed) {
    config.validate();
    const auto items = generate_items(config.criteria, config.powers, config.n_items, derive_seed(seed, {1}));
    SimulatedCrowd crowd(crowd_for(config, config.strategy.task.n_tests, derive_seed(seed, {2})), config.criteria,
                         items);
    std::vector<VoteRequest> requests;
    requests.reserve(items.size() * config.criteria.size());
    for (const auto& c : config.criteria)
        for (const auto& item : items) requests.push_back({item.id, c, votes_per_item});
    DatasetBundle bundle;
    bundle.votes = crowd.request_votes(requests).records;
    for (const auto& item : items)
        for (const auto& [c, label] : *item.gold) bundle.gold[{item.id, c}] = label;
    for (std::size_t i = 0; i < config.criteria.size(); ++i)
        bundle.criteria.push_back(
            {config.criteria[i], config.criterion_names.empty() ? config.criteria[i] : config.criterion_names[i]});
    return bundle;
}

std::vector<MetricsRow> run_replay(const ExperimentConfig& config, const DatasetBundle& bundle,
                                   unsigned parallelism) {
    if (config.replications < 1) throw ConfigError("replications must be >= 1");
    if (config.strategies.empty()) throw ConfigError("no strategies selected");
    const auto items = bundle.items();
    const auto criteria = bundle.criterion_ids();
    struct Job {
        StrategyKind strategy;
        int replication;
    };
    std::vector<Job> jobs;
    for (auto s : config.strategies)
        for (int r = 0; r < config.replications; ++r) jobs.push_back({s, r});
    std::vector<MetricsRow> rows(jobs.size());
    parallel_for(jobs.size(), parallelism, [&](std::size_t k) {
        const auto seeds = replication_seeds(config.strategy.task.rng_seed, jobs[k].replication);
        StrategyConfig sconf = config.strategy;
        sconf.task.rng_seed = seeds.strategy;
        ReplaySource source(bundle, seeds.crowd, sconf.task.unit_cost);
        auto outcome = run_strategy(jobs[k].strategy, items, criteria, source, sconf);
        rows[k] = make_metrics_row(outcome, sconf.task, config.scenario, jobs[k].replication, seeds.replication);
    });
    return rows;
}

std::vector<CriterionEstimate> estimate_from_votes(std::span<const VoteRecord> votes,
                                                   std::span<const CriterionId> criteria,
                                                   const StrategyConfig& config) {
    std::vector<CriterionEstimate> out;
    auto options = config.aggregator_options;
    options.unclear_as_in = config.task.unclear_as_in;
    for (const auto& c : criteria) {
        std::vector<VoteRecord> slice;
        std::set<ItemId> items;
        for (const auto& v : votes) {
            if (v.criterion_id != c) continue;
            slice.push_back(v);
            items.insert(v.item_id);
        }
        CriterionEstimate e;
        e.criterion = c;
        e.items = items.size();
        if (slice.empty()) {
            out.push_back(std::move(e));
            continue;
        }
        e.votes_per_item = static_cast<double>(slice.size()) / static_cast<double>(items.size());
        const auto agg = aggregate(config.estimation_aggregator, slice, options);
        e.power = estimate_power(agg.posteriors);
        try {
            e.accuracy = estimate_criterion_accuracy(agg.workers, c);
        } catch (const NoEvidence&) {
        }
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace screenflow
