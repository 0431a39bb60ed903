#pragma once

// Synthetic crowd: cheater mixture, difficulty-skewed accuracies, test
// question screening, and a per-label cost ledger.

#include <cstdint>
#include <map>
#include <span>
#include <unordered_map>
#include <vector>

#include "screenflow/model.hpp"
#include "screenflow/random.hpp"
#include "screenflow/strategy.hpp"

namespace screenflow {

enum class BoostMode { Multiplicative, Additive };

struct CrowdConfig {
    double cheater_probability = 0.3;
    /// Non-cheater base accuracy ~ Uniform[accuracy_low, accuracy_high].
    double accuracy_low = 0.5;
    double accuracy_high = 1.0;
    /// OUT-side accuracy: min(1, boost * acc_in), or min(1, acc_in + (boost - 1)) in additive mode.
    double out_accuracy_boost = 1.1;
    BoostMode boost_mode = BoostMode::Multiplicative;
    std::map<CriterionId, double> difficulty;
    /// Optional per-criterion mean accuracy for non-cheaters; replaces the
    /// difficulty skew for that criterion (used to calibrate to observed data).
    std::map<CriterionId, double> accuracy_target;
    int n_tests = 0;
    int labels_per_worker = 20;
    double unit_cost = 0.1;
    std::uint64_t rng_seed = 1;

    void validate() const;
};

WorkerProfile spawn_worker(const CrowdConfig& config, std::span<const CriterionId> criteria, Rng& rng, WorkerId id);

/// Passes iff all n_tests answers are correct; each is correct with the
/// worker's accuracy averaged over classes and criteria.
bool screen_worker(const WorkerProfile& worker, int n_tests, Rng& rng);

/// Gold for that criterion must be IN or OUT.
Label sample_vote(const WorkerProfile& worker, Label gold, const CriterionId& criterion, Rng& rng);

/// Expected per-vote accuracy (mean of the two class accuracies) on
/// `criterion` among workers who pass screening, by quadrature over the
/// accuracy distribution.
double expected_screened_accuracy(const CrowdConfig& config, std::span<const CriterionId> criteria,
                                  const CriterionId& criterion);

/// Unbounded simulated crowd answering vote requests for items with gold.
class SimulatedCrowd final : public VoteSource {
public:
    SimulatedCrowd(CrowdConfig config, std::vector<CriterionId> criteria, std::span<const Item> items);

    VoteBatch request_votes(std::span<const VoteRequest> requests) override;
    long votes_served() const override { return votes_served_; }
    double cost() const override { return cost_; }

    long workers_spawned() const { return workers_spawned_; }
    long workers_passed() const { return workers_passed_; }
    long tests_paid() const { return tests_paid_; }
    /// Screened-in workers in spawn order.
    const std::vector<WorkerProfile>& accepted_workers() const { return accepted_; }

private:
    struct Active {
        std::size_t worker;       // index into accepted_
        int remaining;
        std::vector<std::uint32_t> voted;  // pair keys already answered
    };

    std::size_t recruit();

    CrowdConfig config_;
    std::vector<CriterionId> criteria_;
    std::unordered_map<CriterionId, std::uint32_t> criterion_index_;
    std::unordered_map<ItemId, std::uint32_t> item_index_;
    std::vector<std::vector<Label>> gold_;  // [item][criterion]
    Rng rng_;
    std::vector<WorkerProfile> accepted_;
    std::vector<Active> active_;
    long votes_served_ = 0;
    double cost_ = 0.0;
    long workers_spawned_ = 0;
    long workers_passed_ = 0;
    long tests_paid_ = 0;
    std::uint32_t runs_ = 0;
};

}  // namespace screenflow
