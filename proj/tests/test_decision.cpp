#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "screenflow/decision.hpp"
#include "screenflow/random.hpp"

using namespace screenflow;

TEST_CASE("combine exclusion") {
    const double a[] = {1, 1, 1};
    CHECK(combine_exclusion(a) == 0.0);
    const double b[] = {0.8, 0.5};
    CHECK(combine_exclusion(b) == doctest::Approx(0.6).epsilon(1e-12));
    const double c[] = {0.0, 0.37};
    CHECK(combine_exclusion(c) == 1.0);
    CHECK_THROWS_AS(combine_exclusion(std::span<const double>{}), DomainError);
    const double bad[] = {1.2};
    CHECK_THROWS_AS(combine_exclusion(bad), DomainError);
}

TEST_CASE("combine exclusion is permutation invariant and monotone") {
    Rng rng(3);
    for (int k = 0; k < 200; ++k) {
        std::vector<double> p(1 + uniform_index(rng, 5));
        for (auto& x : p) x = uniform01(rng);
        const double v = combine_exclusion(p);
        auto q = p;
        shuffle(q, rng);
        CHECK(combine_exclusion(q) == doctest::Approx(v).epsilon(1e-14));
        q = p;
        q[0] = std::min(1.0, q[0] + 0.1);
        CHECK(combine_exclusion(q) <= v + 1e-15);
        const double single[] = {p[0]};
        CHECK(combine_exclusion(single) == doctest::Approx(1 - p[0]));
    }
}

TEST_CASE("decision threshold") {
    CHECK(decision_threshold(5) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
    CHECK(decision_threshold(1) == 0.5);
    CHECK(decision_threshold(9) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK_THROWS_AS(decision_threshold(0), DomainError);
    CHECK_THROWS_AS(decision_threshold(-1), DomainError);
    for (double lr = 0.1; lr < 20; lr += 0.3) CHECK(decision_threshold(lr + 0.1) > decision_threshold(lr));
}

TEST_CASE("predict criterion outcome closed cases") {
    auto p = predict_criterion_outcome(0.5, 1.0, 3, 5);
    CHECK(p.p_classified_out_given_out == 1.0);
    CHECK(p.p_classified_out_given_in == 0.0);
    CHECK(p.expected_votes == 3);
    auto q = predict_criterion_outcome(0.5, 0.8, 1, 1);
    CHECK(q.p_classified_out_given_in == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(q.p_classified_in_given_in == doctest::Approx(0.8).epsilon(1e-12));
    CHECK_THROWS_AS(predict_criterion_outcome(0.5, 0.4, 1, 1), DomainError);
    CHECK_THROWS_AS(predict_criterion_outcome(0.5, 0.8, 0, 1), DomainError);
}

TEST_CASE("predict criterion outcome matches a sampling oracle") {
    const double theta = 0.28, alpha = 0.77, lr = 5;
    const int J = 5;
    const auto pred = predict_criterion_outcome(theta, alpha, J, lr);
    // Oracle: draw class and J votes, classify with the Bayes posterior computed from scratch.
    Rng rng(2024);
    long n_in = 0, n_out = 0, out_in = 0, out_out = 0;
    const double thr = lr / (lr + 1);
    for (int s = 0; s < 1000000; ++s) {
        const bool is_out = uniform01(rng) < theta;
        int k = 0;
        for (int j = 0; j < J; ++j) {
            const bool correct = uniform01(rng) < alpha;
            if (correct == is_out) ++k;
        }
        const double lo = theta * std::pow(alpha, k) * std::pow(1 - alpha, J - k);
        const double li = (1 - theta) * std::pow(1 - alpha, k) * std::pow(alpha, J - k);
        const bool classified_out = lo / (lo + li) >= thr;
        if (is_out) {
            ++n_out;
            out_out += classified_out;
        } else {
            ++n_in;
            out_in += classified_out;
        }
    }
    const double oi = double(out_in) / n_in, oo = double(out_out) / n_out;
    CHECK(std::abs(pred.p_classified_out_given_in - oi) <= 0.005);
    CHECK(std::abs(pred.p_classified_in_given_in - (1 - oi)) <= 0.005);
    CHECK(std::abs(pred.p_classified_out_given_out - oo) <= 0.005);
    CHECK(std::abs(pred.p_classified_in_given_out - (1 - oo)) <= 0.005);
}

TEST_CASE("predict criterion outcome probabilities stay in range") {
    for (double th = 0.0; th <= 1.0; th += 0.125)
        for (double a = 0.5; a <= 1.0; a += 0.0625)
            for (int J = 1; J <= 7; J += 2) {
                const auto p = predict_criterion_outcome(th, a, J, 5);
                for (double v : {p.p_classified_out_given_in, p.p_classified_in_given_in, p.p_classified_out_given_out,
                                 p.p_classified_in_given_out}) {
                    CHECK(v >= 0.0);
                    CHECK(v <= 1.0);
                }
                CHECK(p.p_classified_out_given_in + p.p_classified_in_given_in == doctest::Approx(1.0));
            }
}

namespace {
CriterionOutcomePrediction stage(double pfe, double pin) {
    CriterionOutcomePrediction p;
    p.p_classified_out_given_in = pfe;
    p.p_classified_in_given_in = pin;
    return p;
}
}  // namespace

TEST_CASE("pfe for order") {
    const CriterionOutcomePrediction one[] = {stage(0.1, 0.9)};
    CHECK(pfe_for_order(one) == doctest::Approx(0.1));
    const CriterionOutcomePrediction two[] = {stage(0.1, 0.5), stage(0.2, 0.8)};
    CHECK(pfe_for_order(two) == doctest::Approx(0.2).epsilon(1e-12));
    const CriterionOutcomePrediction zero[] = {stage(0, 0.3), stage(0, 0.7), stage(0, 0.1)};
    CHECK(pfe_for_order(zero) == 0.0);
}

TEST_CASE("pfe for order invariants") {
    Rng rng(5);
    for (int k = 0; k < 100; ++k) {
        const auto s = stage(0.3 * uniform01(rng), 0.5 + 0.5 * uniform01(rng));
        std::vector<CriterionOutcomePrediction> same(4, s);
        std::vector<CriterionOutcomePrediction> copy = same;
        std::reverse(copy.begin(), copy.end());
        CHECK(pfe_for_order(same) == doctest::Approx(pfe_for_order(copy)).epsilon(1e-14));

        const double pfe = 0.2 * uniform01(rng);
        const double pin_a = 0.4 + 0.6 * uniform01(rng), pin_b = 0.4 + 0.6 * uniform01(rng);
        const auto lo = stage(pfe, std::min(pin_a, pin_b)), hi = stage(pfe, std::max(pin_a, pin_b));
        const CriterionOutcomePrediction best[] = {lo, hi}, worst[] = {hi, lo};
        CHECK(pfe_for_order(best) <= pfe_for_order(worst) + 1e-15);
    }
}

TEST_CASE("predict order cost and loss") {
    TaskConfig t;
    t.votes_per_item = 3;
    t.n_tests = 4;
    const CriterionProfile a{"A", 0.3, 0.0, 0.8};
    const CriterionId only[] = {"A"};
    const CriterionProfile single[] = {a};
    const auto ev = predict_order_cost_loss(only, single, t, 1000);
    CHECK(ev.expected_price ==
          doctest::Approx(price_per_label(t.unit_cost, t.labels_per_worker, t.n_tests) * 3 * 1000).epsilon(1e-12));

    // Power 1 and perfect accuracy: everything leaves at stage one.
    const CriterionProfile p[] = {{"A", 1.0, 0.0, 1.0}, {"B", 0.2, 0.0, 0.8}};
    const CriterionId order[] = {"A", "B"};
    const auto ev2 = predict_order_cost_loss(order, p, t, 100);
    CHECK(ev2.expected_price ==
          doctest::Approx(price_per_label(t.unit_cost, t.labels_per_worker, t.n_tests) * 3 * 100).epsilon(1e-12));
    const CriterionId bad[] = {"A", "A"};
    CHECK_THROWS(predict_order_cost_loss(bad, p, t, 100));
}

TEST_CASE("rank orderings") {
    TaskConfig t;
    const CriterionProfile one[] = {{"A", 0.3, 0.0, 0.8}};
    auto r = rank_orderings(one, t, 100);
    REQUIRE(r.size() == 1);
    CHECK(r[0].ordering == std::vector<CriterionId>{"A"});

    std::vector<CriterionProfile> many;
    for (int i = 0; i < 9; ++i) many.push_back({"c" + std::to_string(i), 0.1, 0.0, 0.8});
    CHECK_THROWS_AS(rank_orderings(many, t, 100), std::length_error);
}

TEST_CASE("higher power and accuracy first dominates") {
    for (double pa : {0.3, 0.42, 0.6})
        for (double aa : {0.8, 0.9})
            for (double pb : {0.05, 0.14})
                for (double ab : {0.6, 0.7})
                    for (int J : {3, 5}) {
                        TaskConfig t;
                        t.votes_per_item = J;
                        const CriterionProfile p[] = {{"A", pa, 0.0, aa}, {"B", pb, 0.0, ab}};
                        const CriterionId ab_order[] = {"A", "B"}, ba_order[] = {"B", "A"};
                        const auto x = predict_order_cost_loss(ab_order, p, t, 1000);
                        const auto y = predict_order_cost_loss(ba_order, p, t, 1000);
                        CHECK(x.expected_price < y.expected_price);
                        CHECK(x.expected_loss <= y.expected_loss + 1e-9);
                    }
}

TEST_CASE("calibrated profiles put the most selective criterion first") {
    TaskConfig t;
    t.n_tests = 0;
    const CriterionProfile p[] = {{"population", 0.24, 0.0, 0.60},
                                  {"use_of_tech", 0.61, 0.0, 0.77},
                                  {"intervention", 0.05, 0.0, 0.75}};
    const auto ranked = rank_orderings(p, t, 1000);
    REQUIRE(ranked.size() == 6);
    const auto cheapest = std::min_element(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.expected_price < b.expected_price;
    });
    CHECK(cheapest->ordering.front() == "use_of_tech");
}

TEST_CASE("compute metrics") {
    TaskConfig t;
    t.loss_ratio = 5;
    std::map<ItemId, Decision> d;
    std::map<ItemId, bool> g;
    // two false exclusions, three false inclusions, one correct each way
    d["a"] = Decision::Out, g["a"] = false;
    d["b"] = Decision::Out, g["b"] = false;
    d["c"] = Decision::In, g["c"] = true;
    d["d"] = Decision::In, g["d"] = true;
    d["e"] = Decision::LeftToExpert, g["e"] = true;
    d["f"] = Decision::Out, g["f"] = true;
    d["g"] = Decision::In, g["g"] = false;
    const auto m = compute_metrics(d, g, t, 40);
    CHECK(m.false_exclusions == 2);
    CHECK(m.false_inclusions == 3);
    CHECK(m.loss == 13.0);
    CHECK(m.items_left_to_experts == 1);
    CHECK(m.votes_used == 40);
    CHECK(m.price == doctest::Approx(40 * price_per_label(t.unit_cost, t.labels_per_worker, t.n_tests)));
    CHECK(m.precision_out == doctest::Approx(1.0 / 3.0));
    CHECK(m.recall_out == doctest::Approx(1.0 / 4.0));
}

TEST_CASE("compute metrics bounds") {
    TaskConfig t;
    std::map<ItemId, Decision> d;
    std::map<ItemId, bool> g;
    for (int i = 0; i < 1000; ++i) {
        const auto id = std::to_string(i);
        g[id] = i < 300;
        d[id] = i < 300 ? Decision::Out : Decision::In;
    }
    auto m = compute_metrics(d, g, t, 0);
    CHECK(m.loss == 0);
    CHECK(m.precision_out == 1.0);
    CHECK(m.recall_out == 1.0);
    for (auto& [id, dec] : d) dec = Decision::LeftToExpert;
    m = compute_metrics(d, g, t, 0);
    CHECK(m.false_inclusions == 300);
    CHECK(m.false_exclusions == 0);
    CHECK(m.loss == 300);
    CHECK(m.items_left_to_experts == 1000);
    std::map<ItemId, bool> missing;
    CHECK_THROWS_AS(compute_metrics(d, missing, t, 0), std::invalid_argument);
}

TEST_CASE("loss decomposition is exact") {
    Rng rng(9);
    for (int k = 0; k < 50; ++k) {
        TaskConfig t;
        t.loss_ratio = 1 + static_cast<double>(uniform_index(rng, 9));
        std::map<ItemId, Decision> d;
        std::map<ItemId, bool> g;
        for (int i = 0; i < 200; ++i) {
            const auto id = std::to_string(i);
            g[id] = bernoulli(rng, 0.3);
            d[id] = static_cast<Decision>(uniform_index(rng, 3));
        }
        const auto m = compute_metrics(d, g, t, 0);
        CHECK(m.loss - t.loss_ratio * m.false_exclusions - m.false_inclusions == 0.0);
        CHECK(m.precision_out >= 0);
        CHECK(m.precision_out <= 1);
        CHECK(m.recall_out >= 0);
        CHECK(m.recall_out <= 1);
    }
}

TEST_CASE("pareto frontier") {
    const PricedPoint pts[] = {{10, 5, 0}, {12, 4, 1}, {15, 4, 2}};
    const auto f = pareto_frontier(pts);
    REQUIRE(f.size() == 2);
    CHECK(f[0].tag == 0);
    CHECK(f[1].tag == 1);
    const PricedPoint one[] = {{3, 3, 7}};
    const auto g = pareto_frontier(one);
    REQUIRE(g.size() == 1);
    CHECK(g[0].tag == 7);
    CHECK(pareto_frontier(std::span<const PricedPoint>{}).empty());
}

TEST_CASE("pareto frontier agrees with the pairwise oracle") {
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<PricedPoint> pts;
        for (std::size_t i = 0; i < 100; ++i)
            pts.push_back({static_cast<double>(uniform_index(rng, 40)), static_cast<double>(uniform_index(rng, 40)), i});
        std::vector<std::size_t> oracle;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            bool dominated = false;
            for (std::size_t j = 0; j < pts.size() && !dominated; ++j)
                dominated = pts[j].price <= pts[i].price && pts[j].loss <= pts[i].loss &&
                            (pts[j].price < pts[i].price || pts[j].loss < pts[i].loss);
            if (!dominated) oracle.push_back(i);
        }
        std::vector<std::size_t> got;
        for (const auto& p : pareto_frontier(pts)) got.push_back(p.tag);
        CHECK(got == oracle);
    }
}
