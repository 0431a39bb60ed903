#include "screenflow/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace screenflow {

namespace {

struct IndexedVote {
    std::size_t item;
    std::size_t worker;
    bool out;
};

// Dense re-indexing of one criterion's slice.
struct Slice {
    CriterionId criterion;
    std::vector<ItemId> items;
    std::vector<WorkerId> workers;
    std::vector<IndexedVote> votes;
    std::vector<std::vector<std::size_t>> votes_of_item;
    std::vector<std::vector<std::size_t>> votes_of_worker;
};

Slice index_slice(std::span<const VoteRecord> records, bool unclear_as_in) {
    Slice s;
    std::unordered_map<std::string_view, std::size_t> item_index;
    std::unordered_map<std::string_view, std::size_t> worker_index;
    for (const auto& r : records) {
        if (s.items.empty() && s.criterion.empty()) s.criterion = r.criterion_id;
        if (r.criterion_id != s.criterion)
            throw std::invalid_argument("aggregation slice mixes criteria " + s.criterion + " and " + r.criterion_id);
        auto [it, fresh] = item_index.try_emplace(r.item_id, s.items.size());
        if (fresh) {
            s.items.push_back(r.item_id);
            s.votes_of_item.emplace_back();
        }
        const auto label = effective_label(r.label, unclear_as_in);
        if (!label) continue;
        auto [wt, wfresh] = worker_index.try_emplace(r.worker_id, s.workers.size());
        if (wfresh) {
            s.workers.push_back(r.worker_id);
            s.votes_of_worker.emplace_back();
        }
        const std::size_t v = s.votes.size();
        s.votes.push_back({it->second, wt->second, *label == Label::Out});
        s.votes_of_item[it->second].push_back(v);
        s.votes_of_worker[wt->second].push_back(v);
    }
    return s;
}

double clamp_accuracy(double a) { return std::clamp(a, 0.5, 1.0); }

// Soft agreement between a worker's votes and the posteriors, with `pseudo`
// add-one style counts. Reported estimates use none: the criterion estimate
// is a plain mean over workers and pseudo-counts would drag every
// low-volume worker toward 0.5.
std::vector<double> soft_accuracy(const Slice& s, const std::vector<double>& p_out, double pseudo = 0.0) {
    std::vector<double> acc(s.workers.size());
    for (std::size_t w = 0; w < s.workers.size(); ++w) {
        double correct = 0.0;
        for (auto v : s.votes_of_worker[w]) {
            const auto& vote = s.votes[v];
            correct += vote.out ? p_out[vote.item] : 1.0 - p_out[vote.item];
        }
        acc[w] = (correct + pseudo) / (static_cast<double>(s.votes_of_worker[w].size()) + 2.0 * pseudo);
    }
    return acc;
}

Aggregation package(const Slice& s, const std::vector<double>& p_out, const std::vector<double>& worker_acc) {
    Aggregation out;
    out.posteriors.reserve(s.items.size());
    for (std::size_t i = 0; i < s.items.size(); ++i)
        out.posteriors.push_back({s.items[i], s.criterion, 1.0 - p_out[i], p_out[i]});
    out.workers.reserve(s.workers.size());
    for (std::size_t w = 0; w < s.workers.size(); ++w)
        out.workers.push_back({s.workers[w], {{s.criterion, clamp_accuracy(worker_acc[w])}}});
    return out;
}

std::vector<double> majority_posteriors(const Slice& s, double fallback) {
    std::vector<double> p(s.items.size(), fallback);
    for (std::size_t i = 0; i < s.items.size(); ++i) {
        const auto& vs = s.votes_of_item[i];
        if (vs.empty()) continue;
        std::size_t outs = 0;
        for (auto v : vs) outs += s.votes[v].out;
        p[i] = static_cast<double>(outs) / static_cast<double>(vs.size());
    }
    return p;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::string_view to_string(AggregatorKind kind) {
    switch (kind) {
        case AggregatorKind::MajorityVote: return "MV";
        case AggregatorKind::DawidSkene: return "EM";
        case AggregatorKind::TrustPropagation: return "TRUST";
    }
    return "EM";
}

AggregatorKind parse_aggregator(std::string_view name) {
    if (name == "MV" || name == "mv") return AggregatorKind::MajorityVote;
    if (name == "EM" || name == "em") return AggregatorKind::DawidSkene;
    if (name == "TRUST" || name == "trust" || name == "TF" || name == "tf") return AggregatorKind::TrustPropagation;
    throw std::invalid_argument("unknown aggregator '" + std::string(name) + "' (expected MV, EM or TRUST)");
}

CriterionPosterior majority_vote(std::span<const Label> votes, bool unclear_as_in) {
    std::size_t ins = 0, outs = 0;
    for (auto l : votes) {
        const auto e = effective_label(l, unclear_as_in);
        if (!e) continue;
        (*e == Label::Out ? outs : ins) += 1;
    }
    if (ins + outs == 0) throw NoEvidence("majority_vote: no IN or OUT votes");
    const double p_out = static_cast<double>(outs) / static_cast<double>(ins + outs);
    return {{}, {}, 1.0 - p_out, p_out};
}

Aggregation majority_vote_slice(std::span<const VoteRecord> records, const AggregatorOptions& options) {
    const Slice s = index_slice(records, options.unclear_as_in);
    for (std::size_t i = 0; i < s.items.size(); ++i) {
        if (s.votes_of_item[i].empty()) throw NoEvidence("majority_vote: item " + s.items[i] + " has no IN/OUT votes");
    }
    const auto p_out = majority_posteriors(s, 0.5);
    // Agreement with the hard majority decision; ties count as half.
    std::vector<double> hard(p_out.size());
    for (std::size_t i = 0; i < p_out.size(); ++i) hard[i] = p_out[i] > 0.5 ? 1.0 : (p_out[i] < 0.5 ? 0.0 : 0.5);
    auto out = package(s, p_out, soft_accuracy(s, hard));
    out.iterations = 1;
    return out;
}

Aggregation dawid_skene_em(std::span<const VoteRecord> records, const AggregatorOptions& options) {
    if (!(options.prior_power > 0.0 && options.prior_power < 1.0))
        throw DomainError("dawid_skene_em: prior_power must lie in (0, 1)");
    const Slice s = index_slice(records, options.unclear_as_in);
    const std::size_t n_items = s.items.size();
    const std::size_t n_workers = s.workers.size();

    std::vector<double> acc_in(n_workers), acc_out(n_workers);
    double prior = options.prior_power;

    auto e_step = [&](std::vector<double>& p_out) {
        const double log_prior_out = std::log(prior);
        const double log_prior_in = std::log1p(-prior);
        for (std::size_t i = 0; i < n_items; ++i) {
            double lo = log_prior_out, li = log_prior_in;
            for (auto v : s.votes_of_item[i]) {
                const auto& vote = s.votes[v];
                const double ao = acc_out[vote.worker], ai = acc_in[vote.worker];
                if (vote.out) {
                    lo += std::log(ao);
                    li += std::log1p(-ai);
                } else {
                    lo += std::log1p(-ao);
                    li += std::log(ai);
                }
            }
            // Handles -inf on one side (perfect workers) without producing NaN.
            if (std::isinf(lo) && std::isinf(li)) {
                p_out[i] = prior;
            } else {
                p_out[i] = sigmoid(lo - li);
            }
        }
    };

    std::vector<double> p_out(n_items);
    Aggregation result;

    if (options.fixed_confusion) {
        for (std::size_t w = 0; w < n_workers; ++w) {
            auto it = options.fixed_confusion->find(s.workers[w]);
            if (it == options.fixed_confusion->end())
                throw std::invalid_argument("dawid_skene_em: no fixed confusion for worker " + s.workers[w]);
            acc_in[w] = it->second.accuracy_on_in;
            acc_out[w] = it->second.accuracy_on_out;
        }
        e_step(p_out);
        std::vector<double> acc(n_workers);
        for (std::size_t w = 0; w < n_workers; ++w) acc[w] = 0.5 * (acc_in[w] + acc_out[w]);
        result = package(s, p_out, acc);
        result.iterations = 1;
        result.converged = true;
        return result;
    }

    p_out = majority_posteriors(s, options.prior_power);
    std::vector<double> next(n_items);
    std::vector<double> mass_out(n_workers), mass_in(n_workers), hit_out(n_workers), hit_in(n_workers);
    bool converged = false;
    int iter = 0;
    while (iter < options.max_iters) {
        ++iter;
        // M-step
        // Two pseudo-counts per class, placed at the pooled (itself add-one
        // smoothed) class accuracy so sparse workers lean on the crowd.
        std::fill(mass_out.begin(), mass_out.end(), 0.0);
        std::fill(mass_in.begin(), mass_in.end(), 0.0);
        std::fill(hit_out.begin(), hit_out.end(), 0.0);
        std::fill(hit_in.begin(), hit_in.end(), 0.0);
        double pool_mass_out = 0.0, pool_mass_in = 0.0, pool_hit_out = 0.0, pool_hit_in = 0.0;
        for (std::size_t w = 0; w < n_workers; ++w) {
            for (auto v : s.votes_of_worker[w]) {
                const auto& vote = s.votes[v];
                const double po = p_out[vote.item];
                mass_out[w] += po;
                mass_in[w] += 1.0 - po;
                if (vote.out) hit_out[w] += po;
                else hit_in[w] += 1.0 - po;
            }
            pool_mass_out += mass_out[w];
            pool_mass_in += mass_in[w];
            pool_hit_out += hit_out[w];
            pool_hit_in += hit_in[w];
        }
        const double pooled_out = (pool_hit_out + 1.0) / (pool_mass_out + 2.0);
        const double pooled_in = (pool_hit_in + 1.0) / (pool_mass_in + 2.0);
        for (std::size_t w = 0; w < n_workers; ++w) {
            // Below-random confusions are outside the model; flooring them also
            // blocks the label-swapped fixed point on one-sided slices.
            acc_out[w] = std::max(0.5, (hit_out[w] + 2.0 * pooled_out) / (mass_out[w] + 2.0));
            acc_in[w] = std::max(0.5, (hit_in[w] + 2.0 * pooled_in) / (mass_in[w] + 2.0));
        }
        double sum = 0.0;
        for (double p : p_out) sum += p;
        prior = (sum + 2.0 * options.prior_power) / (static_cast<double>(n_items) + 2.0);

        // E-step
        e_step(next);
        double delta = 0.0;
        for (std::size_t i = 0; i < n_items; ++i) delta = std::max(delta, std::abs(next[i] - p_out[i]));
        p_out.swap(next);
        if (delta < options.tol) {
            converged = true;
            break;
        }
    }
    result = package(s, p_out, soft_accuracy(s, p_out));
    result.iterations = iter;
    result.converged = converged;
    return result;
}

Aggregation trust_propagation(std::span<const VoteRecord> records, const AggregatorOptions& options) {
    if (!(options.damping > 0.0)) throw DomainError("trust_propagation: damping must be > 0");
    const Slice s = index_slice(records, options.unclear_as_in);
    const std::size_t n_items = s.items.size();
    const std::size_t n_workers = s.workers.size();
    constexpr double max_trust = 1.0 - 1e-9;

    std::vector<double> trust(n_workers, std::min(options.initial_trust, max_trust));
    std::vector<double> tau(n_workers);
    std::vector<double> p_out(n_items, 0.5), next(n_items);
    bool converged = false;
    int iter = 0;
    while (iter < options.max_iters) {
        ++iter;
        for (std::size_t w = 0; w < n_workers; ++w) tau[w] = -std::log1p(-std::min(trust[w], max_trust));
        for (std::size_t i = 0; i < n_items; ++i) {
            double sigma_out = 0.0, sigma_in = 0.0;
            for (auto v : s.votes_of_item[i]) {
                const auto& vote = s.votes[v];
                (vote.out ? sigma_out : sigma_in) += tau[vote.worker];
            }
            const double s_out = sigmoid(options.damping * (sigma_out - options.implication * sigma_in));
            const double s_in = sigmoid(options.damping * (sigma_in - options.implication * sigma_out));
            next[i] = s_out / (s_out + s_in);
        }
        double delta = 0.0;
        for (std::size_t i = 0; i < n_items; ++i) delta = std::max(delta, std::abs(next[i] - p_out[i]));
        p_out.swap(next);
        trust = soft_accuracy(s, p_out, 1.0);
        if (iter > 1 && delta < options.tol) {
            converged = true;
            break;
        }
    }
    auto result = package(s, p_out, trust);
    result.iterations = iter;
    result.converged = converged;
    return result;
}

Aggregation aggregate(AggregatorKind kind, std::span<const VoteRecord> slice, const AggregatorOptions& options) {
    switch (kind) {
        case AggregatorKind::MajorityVote: return majority_vote_slice(slice, options);
        case AggregatorKind::DawidSkene: return dawid_skene_em(slice, options);
        case AggregatorKind::TrustPropagation: return trust_propagation(slice, options);
    }
    throw std::invalid_argument("unknown aggregator");
}

double estimate_power(std::span<const CriterionPosterior> posteriors) {
    if (posteriors.empty()) throw NoEvidence("estimate_power: no posteriors");
    double sum = 0.0;
    for (const auto& p : posteriors) sum += p.p_out;
    return sum / static_cast<double>(posteriors.size());
}

double estimate_criterion_accuracy(std::span<const WorkerAccuracyEstimate> workers, const CriterionId& criterion) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& w : workers) {
        auto it = w.accuracy.find(criterion);
        if (it == w.accuracy.end()) continue;
        sum += it->second;
        ++n;
    }
    if (n == 0) throw NoEvidence("estimate_criterion_accuracy: no worker estimates for criterion " + criterion);
    return clamp_accuracy(sum / static_cast<double>(n));
}

}  // namespace screenflow
