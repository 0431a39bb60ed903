#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "screenflow/crowdsim.hpp"
#include "screenflow/experiment.hpp"

using namespace screenflow;

namespace {

const std::vector<CriterionId> kCriteria{"A", "B"};

}  // namespace

TEST_CASE("cheaters answer at random everywhere") {
    CrowdConfig c;
    c.cheater_probability = 1.0;
    Rng rng(1);
    for (int k = 0; k < 100; ++k) {
        const auto w = spawn_worker(c, kCriteria, rng, "w");
        CHECK(w.is_cheater);
        for (const auto& id : kCriteria) {
            CHECK(w.on(id).accuracy_on_in == 0.5);
            CHECK(w.on(id).accuracy_on_out == 0.5);
        }
    }
}

TEST_CASE("out-side boost on a fixed worker") {
    CrowdConfig c;
    c.cheater_probability = 0.0;
    c.accuracy_low = c.accuracy_high = 0.9;
    Rng rng(1);
    const auto w = spawn_worker(c, kCriteria, rng, "w");
    CHECK(w.on("A").accuracy_on_in == doctest::Approx(0.9));
    CHECK(w.on("A").accuracy_on_out == doctest::Approx(0.99));
    c.boost_mode = BoostMode::Additive;
    const auto v = spawn_worker(c, kCriteria, rng, "v");
    CHECK(v.on("A").accuracy_on_out == doctest::Approx(1.0));
    c.boost_mode = BoostMode::Multiplicative;
    c.difficulty["B"] = std::log(2.0);
    const auto d = spawn_worker(c, kCriteria, rng, "d");
    CHECK(d.on("B").accuracy_on_in == doctest::Approx(0.7));
    CHECK(d.on("B").accuracy_on_out == doctest::Approx(0.77));
}

TEST_CASE("honest workers keep the out side at least as accurate") {
    CrowdConfig c;
    c.difficulty["B"] = 0.7;
    Rng rng(2);
    for (int k = 0; k < 2000; ++k) {
        const auto w = spawn_worker(c, kCriteria, rng, "w");
        for (const auto& id : kCriteria) {
            CHECK(w.on(id).accuracy_on_out >= w.on(id).accuracy_on_in);
            CHECK(w.on(id).accuracy_on_out <= 1.0);
        }
    }
}

TEST_CASE("mean honest base accuracy") {
    CrowdConfig c;
    c.cheater_probability = 0.0;
    Rng rng(3);
    double sum = 0.0;
    const int n = 100000;
    for (int k = 0; k < n; ++k) sum += spawn_worker(c, kCriteria, rng, "w").base_accuracy;
    CHECK(std::abs(sum / n - 0.75) <= 0.005);
}

TEST_CASE("screening") {
    CrowdConfig c;
    c.cheater_probability = 1.0;
    Rng rng(4);
    const auto cheater = spawn_worker(c, kCriteria, rng, "c");
    int passed = 0;
    const int n = 100000;
    for (int k = 0; k < n; ++k) passed += screen_worker(cheater, 5, rng);
    CHECK(std::abs(static_cast<double>(passed) / n - 0.03125) <= 0.005);
    for (int k = 0; k < 100; ++k) CHECK(screen_worker(cheater, 0, rng));

    c.cheater_probability = 0.0;
    c.accuracy_low = c.accuracy_high = 1.0;
    c.out_accuracy_boost = 1.0;
    const auto perfect = spawn_worker(c, kCriteria, rng, "p");
    for (int k = 0; k < 100; ++k) CHECK(screen_worker(perfect, 10, rng));
    CHECK_THROWS_AS(screen_worker(perfect, -1, rng), DomainError);
}

TEST_CASE("vote sampling") {
    Rng rng(5);
    WorkerProfile w;
    w.confusion["A"] = {1.0, 1.0};
    for (int k = 0; k < 1000; ++k) CHECK(sample_vote(w, Label::Out, "A", rng) == Label::Out);
    w.confusion["A"] = {0.5, 0.5};
    int agree = 0;
    const int n = 100000;
    for (int k = 0; k < n; ++k) agree += sample_vote(w, Label::In, "A", rng) == Label::In;
    CHECK(std::abs(static_cast<double>(agree) / n - 0.5) <= 0.01);
    w.confusion["A"] = {0.6, 0.66};
    int outs = 0;
    for (int k = 0; k < n; ++k) {
        const auto l = sample_vote(w, Label::Out, "A", rng);
        CHECK(l != Label::Unclear);
        outs += l == Label::Out;
    }
    CHECK(std::abs(static_cast<double>(outs) / n - 0.66) <= 0.01);
    CHECK_THROWS(sample_vote(w, Label::Unclear, "A", rng));
}

TEST_CASE("requests are served by distinct workers within budget") {
    const auto items = generate_items(kCriteria, std::vector<double>{0.3, 0.3}, 50, 1);
    CrowdConfig c;
    c.n_tests = 3;
    c.labels_per_worker = 7;
    SimulatedCrowd crowd(c, kCriteria, items);
    const VoteRequest one[] = {{items[0].id, "A", 5}};
    const auto b = crowd.request_votes(one);
    CHECK(b.records.size() == 5);
    CHECK(b.shortfalls.empty());
    std::set<WorkerId> distinct;
    for (const auto& r : b.records) distinct.insert(r.worker_id);
    CHECK(distinct.size() == 5);

    std::vector<VoteRequest> many;
    for (const auto& item : items)
        for (const auto& cr : kCriteria) many.push_back({item.id, cr, 9});
    const auto all = crowd.request_votes(many);
    std::map<WorkerId, int> per_worker;
    std::set<std::tuple<WorkerId, ItemId, CriterionId>> seen;
    for (const auto& r : b.records) {
        ++per_worker[r.worker_id];
        seen.insert({r.worker_id, r.item_id, r.criterion_id});
    }
    for (const auto& r : all.records) {
        CHECK(r.label != Label::Unclear);
        CHECK(r.run_index == 1);
        ++per_worker[r.worker_id];
        CHECK(seen.insert({r.worker_id, r.item_id, r.criterion_id}).second);
    }
    for (const auto& [w, n] : per_worker) CHECK(n <= 7);
    CHECK(crowd.votes_served() == 5 + 50 * 2 * 9);
    // Ledger: every label plus the tests of every accepted worker.
    CHECK(crowd.cost() == doctest::Approx(c.unit_cost * (crowd.votes_served() + crowd.tests_paid())));
    CHECK(crowd.tests_paid() == 3 * crowd.workers_passed());
}

TEST_CASE("cost per label converges to the price per label") {
    const auto items = generate_items(kCriteria, std::vector<double>{0.3, 0.3}, 2000, 2);
    CrowdConfig c;
    c.n_tests = 6;
    c.labels_per_worker = 20;
    SimulatedCrowd crowd(c, kCriteria, items);
    std::vector<VoteRequest> reqs;
    for (const auto& item : items)
        for (const auto& cr : kCriteria) reqs.push_back({item.id, cr, 5});
    crowd.request_votes(reqs);
    const double ppl = price_per_label(c.unit_cost, c.labels_per_worker, c.n_tests);
    CHECK(std::abs(crowd.cost() / crowd.votes_served() / ppl - 1.0) <= 0.02);
}

TEST_CASE("screening raises the accuracy of accepted workers") {
    auto accepted_mean = [](int n_tests) {
        CrowdConfig c;
        c.n_tests = n_tests;
        c.labels_per_worker = 1;
        c.rng_seed = 99;
        std::vector<CriterionId> crit{"A"};
        std::vector<Item> items;
        for (int i = 0; i < 10000; ++i)
            items.push_back({"i" + std::to_string(i), std::map<CriterionId, Label>{{"A", Label::In}}});
        SimulatedCrowd crowd(c, crit, items);
        std::vector<VoteRequest> reqs;
        for (const auto& item : items) reqs.push_back({item.id, "A", 1});
        crowd.request_votes(reqs);
        std::vector<double> acc;
        for (const auto& w : crowd.accepted_workers()) acc.push_back(w.on("A").mean());
        return acc;
    };
    auto lo = accepted_mean(2), hi = accepted_mean(10);
    REQUIRE(lo.size() == 10000);
    REQUIRE(hi.size() == 10000);
    auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return s / v.size();
    };
    auto var = [&](const std::vector<double>& v) {
        const double m = mean(v);
        double s = 0;
        for (double x : v) s += (x - m) * (x - m);
        return s / (v.size() - 1);
    };
    const double z = (mean(hi) - mean(lo)) / std::sqrt(var(hi) / hi.size() + var(lo) / lo.size());
    CHECK(z > 3.0);

    // Empirical CDF of the screened pool sits below the unscreened one everywhere.
    auto unscreened = accepted_mean(0);
    std::sort(unscreened.begin(), unscreened.end());
    std::sort(hi.begin(), hi.end());
    for (double x = 0.5; x <= 1.0; x += 0.05) {
        const double f0 = std::upper_bound(unscreened.begin(), unscreened.end(), x) - unscreened.begin();
        const double f1 = std::upper_bound(hi.begin(), hi.end(), x) - hi.begin();
        CHECK(f1 <= f0 + 100);  // sampling slack of 1% of the pool
    }
}

TEST_CASE("expected screened accuracy matches the simulated pool") {
    CrowdConfig c;
    c.n_tests = 4;
    c.labels_per_worker = 1;
    c.rng_seed = 5;
    std::vector<CriterionId> crit{"A"};
    std::vector<Item> items;
    for (int i = 0; i < 40000; ++i)
        items.push_back({"i" + std::to_string(i), std::map<CriterionId, Label>{{"A", Label::Out}}});
    SimulatedCrowd crowd(c, crit, items);
    std::vector<VoteRequest> reqs;
    for (const auto& item : items) reqs.push_back({item.id, "A", 1});
    crowd.request_votes(reqs);
    double sum = 0;
    for (const auto& w : crowd.accepted_workers()) sum += w.on("A").mean();
    CHECK(sum / crowd.accepted_workers().size() == doctest::Approx(expected_screened_accuracy(c, crit, "A")).epsilon(0.005));
}

TEST_CASE("accuracy targets calibrate the honest mean") {
    CrowdConfig c;
    c.cheater_probability = 0.0;
    c.accuracy_target["A"] = 0.6;
    c.accuracy_target["B"] = 0.77;
    for (const auto& id : kCriteria)
        CHECK(expected_screened_accuracy(c, kCriteria, id) == doctest::Approx(c.accuracy_target[id]).epsilon(1e-6));
}

TEST_CASE("crowd streams are seed deterministic") {
    const auto items = generate_items(kCriteria, std::vector<double>{0.2, 0.4}, 100, 3);
    CrowdConfig c;
    c.n_tests = 2;
    std::vector<VoteRequest> reqs;
    for (const auto& item : items) reqs.push_back({item.id, "B", 3});
    SimulatedCrowd a(c, kCriteria, items), b(c, kCriteria, items);
    CHECK(a.request_votes(reqs).records == b.request_votes(reqs).records);
    c.rng_seed = 2;
    SimulatedCrowd d(c, kCriteria, items);
    SimulatedCrowd e(CrowdConfig{}, kCriteria, items);
    CHECK(d.request_votes(reqs).records != e.request_votes(reqs).records);
}

TEST_CASE("crowd config validation") {
    CrowdConfig c;
    CHECK_NOTHROW(c.validate());
    c.out_accuracy_boost = 0.9;
    CHECK_THROWS_AS(c.validate(), DomainError);
    c = {};
    c.accuracy_low = 0.4;
    CHECK_THROWS_AS(c.validate(), DomainError);
    const std::vector<Item> no_gold{{"x", std::nullopt}};
    SimulatedCrowd crowd(CrowdConfig{}, kCriteria, no_gold);
    const VoteRequest r[] = {{"x", "A", 1}};
    CHECK_THROWS(crowd.request_votes(r));
}
