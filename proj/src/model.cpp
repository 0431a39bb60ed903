#include "screenflow/model.hpp"

#include <cmath>

namespace screenflow {

std::string_view to_string(Label label) {
    switch (label) {
        case Label::In: return "IN";
        case Label::Out: return "OUT";
        case Label::Unclear: return "UNCLEAR";
    }
    return "UNCLEAR";
}

Label parse_label(std::string_view token) {
    if (token == "IN") return Label::In;
    if (token == "OUT") return Label::Out;
    if (token == "UNCLEAR") return Label::Unclear;
    throw std::invalid_argument("unknown label token '" + std::string(token) + "'");
}

bool Item::gold_out() const {
    if (!gold) throw std::invalid_argument("item " + id + " has no gold labels");
    for (const auto& [criterion, label] : *gold) {
        if (label == Label::Out) return true;
    }
    return false;
}

void CriterionProfile::validate() const {
    if (!(power >= 0.0 && power <= 1.0))
        throw DomainError("criterion " + id + ": power outside [0, 1]");
    if (!(difficulty >= 0.0))
        throw DomainError("criterion " + id + ": negative difficulty");
    if (!(accuracy_estimate >= 0.5 && accuracy_estimate <= 1.0))
        throw DomainError("criterion " + id + ": accuracy estimate outside [0.5, 1]");
}

const Confusion& WorkerProfile::on(const CriterionId& criterion) const {
    auto it = confusion.find(criterion);
    if (it == confusion.end())
        throw std::out_of_range("worker " + id + " has no confusion entry for criterion " + criterion);
    return it->second;
}

std::string VoteStore::pair_key(const ItemId& item, const CriterionId& criterion) {
    std::string key;
    key.reserve(item.size() + criterion.size() + 1);
    key.append(item).push_back('\x1f');
    key.append(criterion);
    return key;
}

void VoteStore::append(VoteRecord record) {
    std::string unique = pair_key(record.item_id, record.criterion_id);
    unique.push_back('\x1f');
    unique.append(record.worker_id).push_back('\x1f');
    unique.append(std::to_string(record.run_index));
    if (!seen_.emplace(std::move(unique), 0).second) {
        throw std::invalid_argument("duplicate vote: worker " + record.worker_id + " on item " +
                                    record.item_id + " / criterion " + record.criterion_id +
                                    " in run " + std::to_string(record.run_index));
    }
    const std::size_t index = records_.size();
    by_item_[record.item_id].push_back(index);
    by_criterion_[record.criterion_id].push_back(index);
    by_worker_[record.worker_id].push_back(index);
    by_pair_[pair_key(record.item_id, record.criterion_id)].push_back(index);
    records_.push_back(std::move(record));
}

void VoteStore::append(std::span<const VoteRecord> records) {
    for (const auto& r : records) append(r);
}

std::vector<VoteRecord> VoteStore::gather(const std::vector<std::size_t>* indexes) const {
    std::vector<VoteRecord> out;
    if (!indexes) return out;
    out.reserve(indexes->size());
    for (auto i : *indexes) out.push_back(records_[i]);
    return out;
}

template <typename Map, typename Key>
static const std::vector<std::size_t>* lookup(const Map& map, const Key& key) {
    auto it = map.find(key);
    return it == map.end() ? nullptr : &it->second;
}

std::vector<VoteRecord> VoteStore::by_item(const ItemId& item) const {
    return gather(lookup(by_item_, item));
}

std::vector<VoteRecord> VoteStore::by_criterion(const CriterionId& criterion) const {
    return gather(lookup(by_criterion_, criterion));
}

std::vector<VoteRecord> VoteStore::by_worker(const WorkerId& worker) const {
    return gather(lookup(by_worker_, worker));
}

std::vector<VoteRecord> VoteStore::by_pair(const ItemId& item, const CriterionId& criterion) const {
    return gather(lookup(by_pair_, pair_key(item, criterion)));
}

std::size_t VoteStore::count_pair(const ItemId& item, const CriterionId& criterion) const {
    const auto* idx = lookup(by_pair_, pair_key(item, criterion));
    return idx ? idx->size() : 0;
}

std::size_t VoteStore::count_pair(const ItemId& item, const CriterionId& criterion, Label label) const {
    const auto* idx = lookup(by_pair_, pair_key(item, criterion));
    if (!idx) return 0;
    std::size_t n = 0;
    for (auto i : *idx) n += records_[i].label == label;
    return n;
}

void TaskConfig::validate() const {
    if (n_tests < 0) throw DomainError("n_tests must be >= 0");
    if (labels_per_worker < 1) throw DomainError("labels_per_worker must be >= 1");
    if (votes_per_item < 1) throw DomainError("votes_per_item must be >= 1");
    if (batch_size < 1) throw DomainError("batch_size must be >= 1");
    if (!(unit_cost >= 0.0)) throw DomainError("unit_cost must be >= 0");
    if (!(loss_ratio > 0.0)) throw DomainError("loss_ratio must be > 0");
    if (!(p_out_threshold > 0.5 && p_out_threshold < 1.0))
        throw DomainError("p_out_threshold must lie in (0.5, 1)");
    if (!(p_in_threshold > 0.5 && p_in_threshold < 1.0))
        throw DomainError("p_in_threshold must lie in (0.5, 1)");
    if (!(stop_threshold > 0.0)) throw DomainError("stop_threshold must be > 0");
    if (!(cost_ratio > 0.0)) throw DomainError("cost_ratio must be > 0");
}

double skewed_accuracy(double base_accuracy, double difficulty) {
    if (!(base_accuracy >= 0.5 && base_accuracy <= 1.0))
        throw DomainError("base accuracy must lie in [0.5, 1]");
    if (!(difficulty >= 0.0)) throw DomainError("difficulty must be >= 0");
    return 0.5 + (base_accuracy - 0.5) * std::exp(-difficulty);
}

double price_per_label(double unit_cost, int n_labels, int n_tests) {
    if (n_labels <= 0) throw DomainError("price_per_label: n_labels must be >= 1");
    if (n_tests < 0) throw DomainError("price_per_label: n_tests must be >= 0");
    if (!(unit_cost >= 0.0)) throw DomainError("price_per_label: unit_cost must be >= 0");
    return unit_cost * static_cast<double>(n_labels + n_tests) / static_cast<double>(n_labels);
}

std::optional<Label> effective_label(Label label, bool unclear_as_in) {
    if (label != Label::Unclear) return label;
    if (unclear_as_in) return Label::In;
    return std::nullopt;
}

}  // namespace screenflow
