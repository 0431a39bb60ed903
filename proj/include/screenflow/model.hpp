#pragma once

// Domain vocabulary for crowd-based multi-criteria screening: items,
// exclusion criteria, workers, votes, and the worker-behaviour formulas.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace screenflow {

using ItemId = std::string;
using CriterionId = std::string;
using WorkerId = std::string;

/// Raised when an argument falls outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Raised when an estimator has nothing to work with (no votes, no workers).
class NoEvidence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Label : std::uint8_t { In, Out, Unclear };

std::string_view to_string(Label label);
/// Parses "IN", "OUT", "UNCLEAR" (case-sensitive). Throws std::invalid_argument otherwise.
Label parse_label(std::string_view token);

constexpr Label flip(Label label) {
    return label == Label::In ? Label::Out : (label == Label::Out ? Label::In : Label::Unclear);
}

struct Item {
    ItemId id;
    /// Ground truth per criterion; only IN / OUT.
    std::optional<std::map<CriterionId, Label>> gold;

    /// An item is OUT overall iff at least one criterion applies.
    bool gold_out() const;
};

struct CriterionProfile {
    CriterionId id;
    double power = 0.0;
    double difficulty = 0.0;
    double accuracy_estimate = 0.5;

    /// Throws DomainError when a field leaves its range.
    void validate() const;
};

/// Per-class accuracies of one worker on one criterion.
struct Confusion {
    double accuracy_on_in = 0.5;
    double accuracy_on_out = 0.5;

    double accuracy_on(Label gold) const { return gold == Label::Out ? accuracy_on_out : accuracy_on_in; }
    double mean() const { return 0.5 * (accuracy_on_in + accuracy_on_out); }
};

struct WorkerProfile {
    WorkerId id;
    double base_accuracy = 0.5;
    bool is_cheater = false;
    std::map<CriterionId, Confusion> confusion;

    const Confusion& on(const CriterionId& criterion) const;
};

struct VoteRecord {
    WorkerId worker_id;
    ItemId item_id;
    CriterionId criterion_id;
    Label label = Label::Unclear;
    std::uint32_t run_index = 0;

    friend bool operator==(const VoteRecord&, const VoteRecord&) = default;
};

/// Append-only vote log with slice indexes. One writer; readers may share
/// const references.
class VoteStore {
public:
    /// Throws std::invalid_argument when (worker, item, criterion, run) is already present.
    void append(VoteRecord record);
    void append(std::span<const VoteRecord> records);

    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const std::vector<VoteRecord>& records() const { return records_; }
    const VoteRecord& operator[](std::size_t i) const { return records_[i]; }

    std::vector<VoteRecord> by_item(const ItemId& item) const;
    std::vector<VoteRecord> by_criterion(const CriterionId& criterion) const;
    std::vector<VoteRecord> by_worker(const WorkerId& worker) const;
    std::vector<VoteRecord> by_pair(const ItemId& item, const CriterionId& criterion) const;

    std::size_t count_pair(const ItemId& item, const CriterionId& criterion) const;
    std::size_t count_pair(const ItemId& item, const CriterionId& criterion, Label label) const;

private:
    static std::string pair_key(const ItemId& item, const CriterionId& criterion);
    std::vector<VoteRecord> gather(const std::vector<std::size_t>* indexes) const;

    std::vector<VoteRecord> records_;
    std::unordered_map<ItemId, std::vector<std::size_t>> by_item_;
    std::unordered_map<CriterionId, std::vector<std::size_t>> by_criterion_;
    std::unordered_map<WorkerId, std::vector<std::size_t>> by_worker_;
    std::unordered_map<std::string, std::vector<std::size_t>> by_pair_;
    std::unordered_map<std::string, char> seen_;
};

/// Task-level knobs shared by every strategy.
struct TaskConfig {
    int n_tests = 2;               // N_t
    int labels_per_worker = 20;    // N_l
    int votes_per_item = 3;        // J
    double unit_cost = 0.1;        // UC
    double loss_ratio = 5.0;       // lr
    double p_out_threshold = 0.99;
    double p_in_threshold = 0.99;
    int batch_size = 10;
    double stop_threshold = 100.0;
    double cost_ratio = 0.05;
    std::uint64_t rng_seed = 1;
    /// UNCLEAR votes are abstentions unless this is set, in which case they count as IN.
    bool unclear_as_in = false;

    /// Throws DomainError on any out-of-range field.
    void validate() const;
};

/// alpha_{c,w} = 0.5 + (alpha_w - 0.5) * exp(-d_c)
double skewed_accuracy(double base_accuracy, double difficulty);

/// UC * (N_l + N_t) / N_l
double price_per_label(double unit_cost, int n_labels, int n_tests);

/// Maps a raw label onto the IN/OUT evidence it contributes, or nullopt for an abstention.
std::optional<Label> effective_label(Label label, bool unclear_as_in);

}  // namespace screenflow
