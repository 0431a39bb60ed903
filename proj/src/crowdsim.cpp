#include "screenflow/crowdsim.hpp"

#include <algorithm>
#include <cmath>

namespace screenflow {

void CrowdConfig::validate() const {
    if (!(cheater_probability >= 0.0 && cheater_probability <= 1.0))
        throw DomainError("cheater_probability outside [0, 1]");
    if (!(accuracy_low >= 0.5 && accuracy_low <= accuracy_high && accuracy_high <= 1.0))
        throw DomainError("accuracy range must satisfy 0.5 <= low <= high <= 1");
    if (!(out_accuracy_boost >= 1.0)) throw DomainError("out_accuracy_boost must be >= 1");
    for (const auto& [c, d] : difficulty)
        if (!(d >= 0.0)) throw DomainError("negative difficulty for criterion " + c);
    for (const auto& [c, a] : accuracy_target)
        if (!(a >= 0.5 && a <= 1.0)) throw DomainError("accuracy target outside [0.5, 1] for criterion " + c);
    if (n_tests < 0) throw DomainError("n_tests must be >= 0");
    if (labels_per_worker < 1) throw DomainError("labels_per_worker must be >= 1");
    if (!(unit_cost >= 0.0)) throw DomainError("unit_cost must be >= 0");
}

namespace {

Confusion honest_confusion(const CrowdConfig& config, const CriterionId& criterion, double base) {
    if (auto t = config.accuracy_target.find(criterion); t != config.accuracy_target.end()) {
        const double target = t->second;
        const double mid = 0.5 * (config.accuracy_low + config.accuracy_high);
        const double half = 0.5 * (config.accuracy_high - config.accuracy_low);
        const double room = std::min(target - 0.5, 1.0 - target);
        const double spread = half > 0.0 ? std::min(1.0, room / half) : 0.0;
        const double acc = std::clamp(target + (base - mid) * spread, 0.5, 1.0);
        return {acc, acc};
    }
    double d = 0.0;
    if (auto it = config.difficulty.find(criterion); it != config.difficulty.end()) d = it->second;
    const double acc_in = skewed_accuracy(base, d);
    const double acc_out = config.boost_mode == BoostMode::Multiplicative
                               ? std::min(1.0, config.out_accuracy_boost * acc_in)
                               : std::min(1.0, acc_in + (config.out_accuracy_boost - 1.0));
    return {acc_in, acc_out};
}

double mean_accuracy(const WorkerProfile& worker) {
    if (worker.confusion.empty()) return worker.base_accuracy;
    double sum = 0.0;
    for (const auto& [c, conf] : worker.confusion) sum += conf.mean();
    return sum / static_cast<double>(worker.confusion.size());
}

}  // namespace

WorkerProfile spawn_worker(const CrowdConfig& config, std::span<const CriterionId> criteria, Rng& rng, WorkerId id) {
    WorkerProfile w;
    w.id = std::move(id);
    w.is_cheater = bernoulli(rng, config.cheater_probability);
    // Always draw so the stream does not depend on the cheater outcome.
    const double u = uniform01(rng);
    if (w.is_cheater) {
        w.base_accuracy = 0.5;
        for (const auto& c : criteria) w.confusion[c] = {0.5, 0.5};
        return w;
    }
    w.base_accuracy = config.accuracy_low + (config.accuracy_high - config.accuracy_low) * u;
    for (const auto& c : criteria) w.confusion[c] = honest_confusion(config, c, w.base_accuracy);
    return w;
}

bool screen_worker(const WorkerProfile& worker, int n_tests, Rng& rng) {
    if (n_tests < 0) throw DomainError("screen_worker: n_tests must be >= 0");
    const double p = mean_accuracy(worker);
    bool pass = true;
    for (int t = 0; t < n_tests; ++t) pass = bernoulli(rng, p) && pass;
    return pass;
}

Label sample_vote(const WorkerProfile& worker, Label gold, const CriterionId& criterion, Rng& rng) {
    if (gold == Label::Unclear) throw std::invalid_argument("sample_vote: gold label must be IN or OUT");
    const double acc = worker.on(criterion).accuracy_on(gold);
    return bernoulli(rng, acc) ? gold : flip(gold);
}

double expected_screened_accuracy(const CrowdConfig& config, std::span<const CriterionId> criteria,
                                  const CriterionId& criterion) {
    auto pass_and_acc = [&](double base) {
        double mean = 0.0, target = 0.5;
        for (const auto& c : criteria) {
            const auto conf = honest_confusion(config, c, base);
            mean += conf.mean();
            if (c == criterion) target = conf.mean();
        }
        mean /= static_cast<double>(criteria.size());
        return std::pair{std::pow(mean, config.n_tests), target};
    };
    constexpr int kNodes = 4000;
    double honest_pass = 0.0, honest_weighted = 0.0;
    if (config.accuracy_high > config.accuracy_low) {
        const double h = (config.accuracy_high - config.accuracy_low) / kNodes;
        for (int k = 0; k < kNodes; ++k) {
            const auto [pass, acc] = pass_and_acc(config.accuracy_low + (k + 0.5) * h);
            honest_pass += pass / kNodes;
            honest_weighted += pass * acc / kNodes;
        }
    } else {
        const auto [pass, acc] = pass_and_acc(config.accuracy_low);
        honest_pass = pass;
        honest_weighted = pass * acc;
    }
    const double cheat_pass = std::pow(0.5, config.n_tests);
    const double p = config.cheater_probability;
    return ((1.0 - p) * honest_weighted + p * cheat_pass * 0.5) / ((1.0 - p) * honest_pass + p * cheat_pass);
}

SimulatedCrowd::SimulatedCrowd(CrowdConfig config, std::vector<CriterionId> criteria, std::span<const Item> items)
    : config_(std::move(config)), criteria_(std::move(criteria)), rng_(config_.rng_seed) {
    config_.validate();
    for (std::uint32_t c = 0; c < criteria_.size(); ++c) criterion_index_.emplace(criteria_[c], c);
    gold_.reserve(items.size());
    for (const auto& item : items) {
        const auto idx = static_cast<std::uint32_t>(gold_.size());
        if (!item_index_.emplace(item.id, idx).second) throw std::invalid_argument("duplicate item id " + item.id);
        std::vector<Label> g(criteria_.size(), Label::Unclear);
        if (item.gold) {
            for (std::size_t c = 0; c < criteria_.size(); ++c) {
                auto it = item.gold->find(criteria_[c]);
                if (it != item.gold->end()) g[c] = it->second;
            }
        }
        gold_.push_back(std::move(g));
    }
}

std::size_t SimulatedCrowd::recruit() {
    for (;;) {
        ++workers_spawned_;
        auto worker = spawn_worker(config_, criteria_, rng_, "w" + std::to_string(workers_spawned_));
        if (!screen_worker(worker, config_.n_tests, rng_)) continue;  // failed screeners are not paid
        ++workers_passed_;
        tests_paid_ += config_.n_tests;
        cost_ += config_.unit_cost * config_.n_tests;
        accepted_.push_back(std::move(worker));
        active_.push_back({accepted_.size() - 1, config_.labels_per_worker, {}});
        return active_.size() - 1;
    }
}

VoteBatch SimulatedCrowd::request_votes(std::span<const VoteRequest> requests) {
    const std::uint32_t run = runs_++;
    VoteBatch batch;
    const auto n_criteria = static_cast<std::uint32_t>(criteria_.size());
    for (const auto& req : requests) {
        auto it = item_index_.find(req.item_id);
        if (it == item_index_.end()) throw std::invalid_argument("simulated crowd: unknown item " + req.item_id);
        auto ct = criterion_index_.find(req.criterion_id);
        if (ct == criterion_index_.end())
            throw std::invalid_argument("simulated crowd: unknown criterion " + req.criterion_id);
        const Label gold = gold_[it->second][ct->second];
        if (gold == Label::Unclear)
            throw std::invalid_argument("simulated crowd: item " + req.item_id + " has no gold for criterion " +
                                        req.criterion_id);
        const std::uint32_t key = it->second * n_criteria + ct->second;
        int assigned = 0;
        std::size_t a = 0;
        while (assigned < req.n_votes) {
            if (a == active_.size()) a = recruit();
            auto& slot = active_[a];
            if (std::find(slot.voted.begin(), slot.voted.end(), key) != slot.voted.end()) {
                ++a;
                continue;
            }
            const auto& worker = accepted_[slot.worker];
            batch.records.push_back({worker.id, req.item_id, req.criterion_id,
                                     sample_vote(worker, gold, req.criterion_id, rng_), run});
            slot.voted.push_back(key);
            cost_ += config_.unit_cost;
            ++votes_served_;
            ++assigned;
            if (--slot.remaining == 0) {
                active_.erase(active_.begin() + static_cast<long>(a));
            } else {
                ++a;
            }
        }
    }
    return batch;
}

}  // namespace screenflow
