#pragma once

// Recorded vote datasets (CSV in, CSV out), a replaying vote source, and
// the metrics / frontier / trace files the CLI emits.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "screenflow/decision.hpp"
#include "screenflow/random.hpp"
#include "screenflow/strategy.hpp"

namespace screenflow {

/// Parse or validation failure, with the file and 1-based line when known.
class DataError : public std::runtime_error {
public:
    DataError(const std::string& source, std::size_t line, const std::string& message);
    const std::string& source() const { return source_; }
    std::size_t line() const { return line_; }

private:
    std::string source_;
    std::size_t line_;
};

struct CriterionInfo {
    CriterionId id;
    std::string name;
    friend bool operator==(const CriterionInfo&, const CriterionInfo&) = default;
};

using GoldKey = std::pair<ItemId, CriterionId>;

struct DatasetBundle {
    std::vector<VoteRecord> votes;
    std::map<GoldKey, Label> gold;
    std::vector<CriterionInfo> criteria;

    std::vector<CriterionId> criterion_ids() const;
    /// Items with gold for every manifest criterion, ordered by id. Items
    /// appearing only in votes come without gold.
    std::vector<Item> items() const;
    /// Every vote references a manifest criterion; gold (when present) covers every voted pair.
    void validate() const;
};

/// Maps an external CSV layout onto the canonical columns and labels.
/// Defaults describe the canonical schema.
struct CsvLayout {
    std::string worker_column = "worker_id";
    std::string item_column = "item_id";
    std::string criterion_column = "criterion_id";
    std::string label_column = "label";
    /// Optional; when absent from the header every vote gets run 0.
    std::string run_column = "run_index";
    std::string name_column = "name";
    std::map<std::string, Label> label_tokens{{"IN", Label::In}, {"OUT", Label::Out}, {"UNCLEAR", Label::Unclear}};
    char delimiter = ',';
};

/// Splits one CSV record (RFC 4180 quoting, no embedded newlines).
std::vector<std::string> split_csv_line(const std::string& line, char delimiter = ',');

std::vector<VoteRecord> parse_votes(std::istream& in, const std::string& source, const CsvLayout& layout = {});
std::map<GoldKey, Label> parse_gold(std::istream& in, const std::string& source, const CsvLayout& layout = {});
std::vector<CriterionInfo> parse_manifest(std::istream& in, const std::string& source, const CsvLayout& layout = {});

/// Loads votes plus optional gold and manifest files. Without a manifest the
/// criteria are those seen in votes and gold, named by id.
DatasetBundle load_votes(const std::filesystem::path& votes, const std::optional<std::filesystem::path>& gold = {},
                         const std::optional<std::filesystem::path>& manifest = {}, const CsvLayout& layout = {});

/// Writes the canonical schema; gold and manifest are skipped when their path is empty.
void write_bundle(const DatasetBundle& bundle, const std::filesystem::path& votes,
                  const std::filesystem::path& gold, const std::filesystem::path& manifest);

/// Serves recorded votes, each at most once, in a seeded shuffle per (item, criterion).
class ReplaySource final : public VoteSource {
public:
    ReplaySource(const DatasetBundle& bundle, std::uint64_t seed, double unit_cost = 0.0);

    VoteBatch request_votes(std::span<const VoteRequest> requests) override;
    long votes_served() const override { return served_; }
    double cost() const override { return static_cast<double>(served_) * unit_cost_; }

    std::size_t remaining(const ItemId& item, const CriterionId& criterion) const;
    long total_shortfall() const { return shortfall_; }

private:
    struct Queue {
        std::vector<std::size_t> order;
        std::size_t cursor = 0;
    };
    std::vector<VoteRecord> votes_;
    std::map<GoldKey, Queue> queues_;
    double unit_cost_;
    long served_ = 0;
    long shortfall_ = 0;
};

// ---------------------------------------------------------------------------
// Results

enum class TableFormat { Csv, Json };

/// .json selects JSON, anything else CSV.
TableFormat format_for(const std::filesystem::path& path);

struct MetricsRow {
    std::string scenario;
    std::string strategy;
    int replication = 0;
    std::uint64_t seed = 0;
    int n_tests = 0;
    int votes_per_item = 0;
    double price = 0.0;
    double loss = 0.0;
    long false_exclusions = 0;
    long false_inclusions = 0;
    double precision = 1.0;
    double recall = 1.0;
    long votes_used = 0;
    long items_left_to_experts = 0;
    long shortfall = 0;

    friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

MetricsRow make_metrics_row(const StrategyOutcome& outcome, const TaskConfig& task, std::string scenario,
                            int replication, std::uint64_t seed);

/// Column names in file order.
const std::vector<std::string>& metrics_columns();

void write_metrics(std::ostream& out, const std::vector<MetricsRow>& rows, TableFormat format);
void write_metrics(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics(std::istream& in, const std::string& source, TableFormat format);
std::vector<MetricsRow> read_metrics(const std::filesystem::path& path);

/// Non-dominated rows on (price, loss), in input order.
std::vector<MetricsRow> frontier_rows(const std::vector<MetricsRow>& rows);

/// `<stem>_frontier<ext>` next to `path`.
std::filesystem::path frontier_path(const std::filesystem::path& path);

/// Writes the metrics table to `path` and its frontier to frontier_path(path).
void export_results(const std::vector<MetricsRow>& rows, const std::vector<MetricsRow>& frontier,
                    const std::filesystem::path& path);

void write_trace(const std::filesystem::path& path, const StrategyOutcome& outcome);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

}  // namespace screenflow
