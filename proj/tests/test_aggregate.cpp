#include <doctest.h>

#include <cmath>
#include <map>

#include "screenflow/aggregate.hpp"
#include "screenflow/random.hpp"

using namespace screenflow;

namespace {

struct Planted {
    std::vector<VoteRecord> votes;
    std::map<WorkerId, double> accuracy;
    std::map<ItemId, bool> out;
};

// 200 items, 20 workers with accuracies spread over [0.6, 0.9], 5 distinct workers per item.
Planted planted(std::uint64_t seed) {
    Planted p;
    Rng rng(seed);
    std::vector<WorkerId> workers;
    for (int w = 0; w < 20; ++w) {
        workers.push_back("w" + std::to_string(w));
        p.accuracy[workers.back()] = 0.6 + 0.3 * w / 19.0;
    }
    for (int i = 0; i < 200; ++i) {
        const ItemId item = "i" + std::to_string(i);
        const bool out = bernoulli(rng, 0.3);
        p.out[item] = out;
        auto pool = workers;
        shuffle(pool, rng);
        for (int j = 0; j < 5; ++j) {
            const bool correct = bernoulli(rng, p.accuracy[pool[j]]);
            const bool says_out = correct ? out : !out;
            p.votes.push_back({pool[j], item, "c", says_out ? Label::Out : Label::In, 0});
        }
    }
    return p;
}

void check_well_formed(const Aggregation& a) {
    for (const auto& p : a.posteriors) {
        CHECK(p.p_in + p.p_out == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(p.p_out >= 0.0);
        CHECK(p.p_out <= 1.0);
    }
    for (const auto& w : a.workers)
        for (const auto& [c, acc] : w.accuracy) {
            CHECK(acc >= 0.5);
            CHECK(acc <= 1.0);
        }
}

}  // namespace

TEST_CASE("majority vote") {
    const Label a[] = {Label::Out, Label::Out, Label::In};
    CHECK(majority_vote(a).p_out == doctest::Approx(2.0 / 3.0));
    const Label b[] = {Label::Out, Label::In};
    CHECK(majority_vote(b).p_out == 0.5);
    const Label c[] = {Label::In, Label::In, Label::In};
    CHECK(majority_vote(c).p_out == 0.0);
    const Label u[] = {Label::Unclear};
    CHECK_THROWS_AS(majority_vote(u), NoEvidence);
    CHECK(majority_vote(u, true).p_out == 0.0);
    CHECK_THROWS_AS(majority_vote(std::span<const Label>{}), NoEvidence);
}

TEST_CASE("aggregator names") {
    CHECK(parse_aggregator("EM") == AggregatorKind::DawidSkene);
    CHECK(parse_aggregator("mv") == AggregatorKind::MajorityVote);
    CHECK(parse_aggregator("TRUST") == AggregatorKind::TrustPropagation);
    CHECK_THROWS_AS(parse_aggregator("spectral"), std::invalid_argument);
    CHECK(to_string(AggregatorKind::DawidSkene) == "EM");
}

TEST_CASE("em single vote with frozen accuracy") {
    const VoteRecord v[] = {{"w", "i", "c", Label::Out, 0}};
    AggregatorOptions o;
    o.prior_power = 0.5;
    o.fixed_confusion = std::map<WorkerId, Confusion>{{"w", {0.75, 0.75}}};
    const auto a = dawid_skene_em(v, o);
    REQUIRE(a.posteriors.size() == 1);
    CHECK(a.posteriors[0].p_out == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("em with frozen confusion equals the enumerated Bayes posterior") {
    Rng rng(31);
    for (int trial = 0; trial < 30; ++trial) {
        std::map<WorkerId, Confusion> conf;
        for (int w = 0; w < 6; ++w)
            conf["w" + std::to_string(w)] = {0.5 + 0.5 * uniform01(rng), 0.5 + 0.49 * uniform01(rng)};
        const double prior = 0.05 + 0.9 * uniform01(rng);
        std::vector<VoteRecord> votes;
        for (int i = 0; i < 5; ++i)
            for (int w = 0; w < 6; ++w)
                if (bernoulli(rng, 0.6))
                    votes.push_back({"w" + std::to_string(w), "i" + std::to_string(i), "c",
                                     bernoulli(rng, 0.5) ? Label::Out : Label::In, 0});
        AggregatorOptions o;
        o.prior_power = prior;
        o.fixed_confusion = conf;
        const auto a = dawid_skene_em(votes, o);
        for (const auto& post : a.posteriors) {
            double lo = prior, li = 1 - prior;
            for (const auto& v : votes) {
                if (v.item_id != post.item_id) continue;
                const auto& c = conf[v.worker_id];
                lo *= v.label == Label::Out ? c.accuracy_on_out : 1 - c.accuracy_on_out;
                li *= v.label == Label::In ? c.accuracy_on_in : 1 - c.accuracy_on_in;
            }
            CHECK(post.p_out == doctest::Approx(lo / (lo + li)).epsilon(1e-9));
        }
    }
}

TEST_CASE("em recovers planted worker accuracies") {
    const auto p = planted(123);
    const auto a = dawid_skene_em(p.votes);
    check_well_formed(a);
    double err = 0.0;
    for (const auto& w : a.workers) err += std::abs(w.accuracy.at("c") - p.accuracy.at(w.worker_id));
    CHECK(err / a.workers.size() <= 0.08);
}

TEST_CASE("trust propagation agrees with em on planted data") {
    const auto p = planted(321);
    const auto em = dawid_skene_em(p.votes);
    const auto tr = trust_propagation(p.votes);
    check_well_formed(tr);
    REQUIRE(em.posteriors.size() == tr.posteriors.size());
    int agree = 0;
    for (std::size_t i = 0; i < em.posteriors.size(); ++i)
        agree += (em.posteriors[i].p_out > 0.5) == (tr.posteriors[i].p_out > 0.5);
    CHECK(agree >= 0.9 * em.posteriors.size());
}

TEST_CASE("unanimous votes give the same decisions everywhere") {
    std::vector<VoteRecord> votes;
    for (int i = 0; i < 10; ++i)
        for (int w = 0; w < 3; ++w)
            votes.push_back({"w" + std::to_string(w), "i" + std::to_string(i), "c", i % 3 ? Label::In : Label::Out, 0});
    for (auto kind : {AggregatorKind::MajorityVote, AggregatorKind::DawidSkene, AggregatorKind::TrustPropagation}) {
        const auto a = aggregate(kind, votes);
        check_well_formed(a);
        for (const auto& post : a.posteriors) {
            const bool out = std::stoi(post.item_id.substr(1)) % 3 == 0;
            CHECK((post.p_out > 0.5) == out);
        }
    }
}

TEST_CASE("unanimous out votes") {
    std::vector<VoteRecord> votes;
    for (int i = 0; i < 8; ++i)
        for (int w = 0; w < 3; ++w) votes.push_back({"w" + std::to_string(w), "i" + std::to_string(i), "c", Label::Out, 0});
    const auto a = dawid_skene_em(votes);
    // Add-one smoothing keeps the confusion off 1, so agreement saturates near, not at, the clamp.
    for (const auto& post : a.posteriors) CHECK(post.p_out >= 0.95);
    for (const auto& w : a.workers) {
        CHECK(w.accuracy.at("c") >= 0.95);
        CHECK(w.accuracy.at("c") == doctest::Approx(a.posteriors.front().p_out));
    }
}

TEST_CASE("corroborated worker wins a conflict") {
    std::vector<VoteRecord> votes{{"A", "i00", "c", Label::Out, 0}, {"B", "i00", "c", Label::In, 0}};
    for (int i = 1; i <= 10; ++i) {
        const auto item = "i" + std::string(i < 10 ? "0" : "") + std::to_string(i);
        const auto label = i % 2 ? Label::Out : Label::In;
        votes.push_back({"A", item, "c", label, 0});
        votes.push_back({"C", item, "c", label, 0});
    }
    votes.push_back({"B", "i11", "c", Label::Out, 0});
    votes.push_back({"D", "i11", "c", Label::In, 0});
    for (auto kind : {AggregatorKind::TrustPropagation, AggregatorKind::DawidSkene}) {
        const auto a = aggregate(kind, votes);
        REQUIRE(a.posteriors.front().item_id == "i00");
        CHECK(a.posteriors.front().p_out > 0.5);
    }
}

TEST_CASE("slices must hold one criterion") {
    const VoteRecord v[] = {{"w", "i", "a", Label::Out, 0}, {"w", "i", "b", Label::Out, 0}};
    CHECK_THROWS_AS(dawid_skene_em(v), std::invalid_argument);
    AggregatorOptions bad;
    bad.prior_power = 0.0;
    CHECK_THROWS_AS(dawid_skene_em(std::span<const VoteRecord>(v, 1), bad), DomainError);
}

TEST_CASE("power and accuracy estimates") {
    std::vector<CriterionPosterior> p{{"a", "c", 0, 1}, {"b", "c", 1, 0}, {"c", "c", 0, 1}, {"d", "c", 1, 0}};
    CHECK(estimate_power(p) == 0.5);
    for (auto& x : p) x.p_out = 0, x.p_in = 1;
    CHECK(estimate_power(p) == 0.0);
    CHECK_THROWS_AS(estimate_power(std::span<const CriterionPosterior>{}), NoEvidence);

    Rng rng(8);
    std::vector<CriterionPosterior> hard;
    int ones = 0;
    for (int i = 0; i < 97; ++i) {
        const bool o = bernoulli(rng, 0.3);
        ones += o;
        hard.push_back({"x", "c", o ? 0.0 : 1.0, o ? 1.0 : 0.0});
    }
    CHECK(estimate_power(hard) == static_cast<double>(ones) / 97.0);

    const WorkerAccuracyEstimate w[] = {{"a", {{"c", 0.6}}}, {"b", {{"c", 0.8}}}, {"z", {{"other", 0.9}}}};
    CHECK(estimate_criterion_accuracy(w, "c") == doctest::Approx(0.7));
    const WorkerAccuracyEstimate single[] = {{"a", {{"c", 0.75}}}};
    CHECK(estimate_criterion_accuracy(single, "c") == 0.75);
    CHECK_THROWS_AS(estimate_criterion_accuracy(single, "nope"), NoEvidence);
}

TEST_CASE("every aggregator returns valid posteriors on random input") {
    Rng rng(55);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<VoteRecord> votes;
        for (int i = 0; i < 30; ++i)
            for (int w = 0; w < 8; ++w)
                if (bernoulli(rng, 0.4))
                    votes.push_back({"w" + std::to_string(w), "i" + std::to_string(i), "c",
                                     bernoulli(rng, 0.4) ? Label::Out : Label::In, 0});
        for (auto kind : {AggregatorKind::MajorityVote, AggregatorKind::DawidSkene, AggregatorKind::TrustPropagation})
            check_well_formed(aggregate(kind, votes));
    }
}
