#include "screenflow/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace screenflow {

using nlohmann::json;

DataError::DataError(const std::string& source, std::size_t line, const std::string& message)
    : std::runtime_error(line > 0 ? source + ":" + std::to_string(line) + ": " + message : source + ": " + message),
      source_(source),
      line_(line) {}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::vector<std::string> split_csv_line(const std::string& line, char delimiter) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == delimiter) {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field += ch;
        }
    }
    if (quoted) throw std::invalid_argument("unterminated quoted field");
    fields.push_back(std::move(field));
    return fields;
}

namespace {

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

// Line-by-line reader over a CSV with a required header.
class CsvReader {
public:
    CsvReader(std::istream& in, std::string source, char delimiter)
        : in_(in), source_(std::move(source)), delimiter_(delimiter) {
        std::vector<std::string> header;
        if (!next(header)) throw DataError(source_, 0, "empty file, header required");
        for (std::size_t i = 0; i < header.size(); ++i) columns_[header[i]] = i;
        width_ = header.size();
    }

    std::optional<std::size_t> column(const std::string& name) const {
        auto it = columns_.find(name);
        if (it == columns_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t require(const std::string& name) const {
        auto c = column(name);
        if (!c) throw DataError(source_, 1, "schema mismatch: missing column '" + name + "'");
        return *c;
    }

    bool next(std::vector<std::string>& fields) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            try {
                fields = split_csv_line(line, delimiter_);
            } catch (const std::invalid_argument& e) {
                throw DataError(source_, line_, e.what());
            }
            if (width_ && fields.size() != width_)
                throw DataError(source_, line_,
                                "schema mismatch: expected " + std::to_string(width_) + " fields, got " +
                                    std::to_string(fields.size()));
            return true;
        }
        return false;
    }

    std::size_t line() const { return line_; }
    const std::string& source() const { return source_; }
    [[noreturn]] void fail(const std::string& message) const { throw DataError(source_, line_, message); }

private:
    std::istream& in_;
    std::string source_;
    char delimiter_;
    std::map<std::string, std::size_t> columns_;
    std::size_t width_ = 0;
    std::size_t line_ = 0;
};

Label label_token(const CsvReader& reader, const CsvLayout& layout, const std::string& token) {
    auto it = layout.label_tokens.find(token);
    if (it == layout.label_tokens.end()) reader.fail("unknown label token '" + token + "'");
    return it->second;
}

void require_nonempty(const CsvReader& reader, const std::string& value, const char* what) {
    if (value.empty()) reader.fail(std::string("empty ") + what);
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path.string(), 0, "cannot open for reading");
    return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string(), 0, "cannot open for writing");
    return out;
}

void check_written(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw DataError(path.string(), 0, "write failed");
}

}  // namespace

std::vector<VoteRecord> parse_votes(std::istream& in, const std::string& source, const CsvLayout& layout) {
    CsvReader reader(in, source, layout.delimiter);
    const auto w = reader.require(layout.worker_column);
    const auto i = reader.require(layout.item_column);
    const auto c = reader.require(layout.criterion_column);
    const auto l = reader.require(layout.label_column);
    const auto r = reader.column(layout.run_column);

    std::vector<VoteRecord> votes;
    std::map<std::tuple<WorkerId, ItemId, CriterionId>, std::size_t> seen;
    std::vector<std::string> f;
    while (reader.next(f)) {
        VoteRecord v;
        v.worker_id = f[w];
        v.item_id = f[i];
        v.criterion_id = f[c];
        require_nonempty(reader, v.worker_id, "worker id");
        require_nonempty(reader, v.item_id, "item id");
        require_nonempty(reader, v.criterion_id, "criterion id");
        v.label = label_token(reader, layout, f[l]);
        if (r) {
            const auto& text = f[*r];
            auto res = std::from_chars(text.data(), text.data() + text.size(), v.run_index);
            if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
                reader.fail("invalid run index '" + text + "'");
        }
        auto [it, fresh] = seen.emplace(std::tuple{v.worker_id, v.item_id, v.criterion_id}, reader.line());
        if (!fresh)
            reader.fail("duplicate vote by worker '" + v.worker_id + "' on item '" + v.item_id + "', criterion '" +
                        v.criterion_id + "' (first at line " + std::to_string(it->second) + ")");
        votes.push_back(std::move(v));
    }
    return votes;
}

std::map<GoldKey, Label> parse_gold(std::istream& in, const std::string& source, const CsvLayout& layout) {
    CsvReader reader(in, source, layout.delimiter);
    const auto i = reader.require(layout.item_column);
    const auto c = reader.require(layout.criterion_column);
    const auto l = reader.require(layout.label_column);
    std::map<GoldKey, Label> gold;
    std::vector<std::string> f;
    while (reader.next(f)) {
        require_nonempty(reader, f[i], "item id");
        require_nonempty(reader, f[c], "criterion id");
        const Label label = label_token(reader, layout, f[l]);
        if (label == Label::Unclear) reader.fail("gold label must be IN or OUT");
        if (!gold.emplace(GoldKey{f[i], f[c]}, label).second)
            reader.fail("duplicate gold for item '" + f[i] + "', criterion '" + f[c] + "'");
    }
    return gold;
}

std::vector<CriterionInfo> parse_manifest(std::istream& in, const std::string& source, const CsvLayout& layout) {
    CsvReader reader(in, source, layout.delimiter);
    const auto c = reader.require(layout.criterion_column);
    const auto n = reader.column(layout.name_column);
    std::vector<CriterionInfo> out;
    std::set<CriterionId> seen;
    std::vector<std::string> f;
    while (reader.next(f)) {
        require_nonempty(reader, f[c], "criterion id");
        if (!seen.insert(f[c]).second) reader.fail("duplicate criterion '" + f[c] + "'");
        out.push_back({f[c], n ? f[*n] : f[c]});
    }
    return out;
}

std::vector<CriterionId> DatasetBundle::criterion_ids() const {
    std::vector<CriterionId> ids;
    for (const auto& c : criteria) ids.push_back(c.id);
    return ids;
}

std::vector<Item> DatasetBundle::items() const {
    std::set<ItemId> ids;
    for (const auto& v : votes) ids.insert(v.item_id);
    for (const auto& [key, label] : gold) ids.insert(key.first);
    std::vector<Item> items;
    for (const auto& id : ids) {
        Item item{id, std::nullopt};
        std::map<CriterionId, Label> g;
        for (const auto& c : criteria) {
            auto it = gold.find({id, c.id});
            if (it != gold.end()) g[c.id] = it->second;
        }
        if (!criteria.empty() && g.size() == criteria.size()) item.gold = std::move(g);
        items.push_back(std::move(item));
    }
    return items;
}

void DatasetBundle::validate() const {
    std::set<CriterionId> known;
    for (const auto& c : criteria) known.insert(c.id);
    for (std::size_t k = 0; k < votes.size(); ++k) {
        const auto& v = votes[k];
        if (!known.count(v.criterion_id))
            throw DataError("votes", k + 2, "dangling criterion id '" + v.criterion_id + "'");
        if (!gold.empty() && !gold.count({v.item_id, v.criterion_id}))
            throw DataError("votes", k + 2,
                            "no gold for item '" + v.item_id + "', criterion '" + v.criterion_id + "'");
    }
    for (const auto& [key, label] : gold)
        if (!known.count(key.second)) throw DataError("gold", 0, "dangling criterion id '" + key.second + "'");
}

DatasetBundle load_votes(const std::filesystem::path& votes, const std::optional<std::filesystem::path>& gold,
                         const std::optional<std::filesystem::path>& manifest, const CsvLayout& layout) {
    DatasetBundle bundle;
    {
        auto in = open_in(votes);
        bundle.votes = parse_votes(in, votes.string(), layout);
    }
    if (gold) {
        auto in = open_in(*gold);
        bundle.gold = parse_gold(in, gold->string(), layout);
    }
    if (manifest) {
        auto in = open_in(*manifest);
        bundle.criteria = parse_manifest(in, manifest->string(), layout);
        std::set<CriterionId> known;
        for (const auto& c : bundle.criteria) known.insert(c.id);
        for (std::size_t k = 0; k < bundle.votes.size(); ++k)
            if (!known.count(bundle.votes[k].criterion_id))
                throw DataError(votes.string(), k + 2,
                                "dangling criterion id '" + bundle.votes[k].criterion_id + "'");
    } else {
        std::set<CriterionId> ids;
        for (const auto& v : bundle.votes) ids.insert(v.criterion_id);
        for (const auto& [key, label] : bundle.gold) ids.insert(key.second);
        for (const auto& id : ids) bundle.criteria.push_back({id, id});
    }
    if (gold) {
        for (std::size_t k = 0; k < bundle.votes.size(); ++k) {
            const auto& v = bundle.votes[k];
            if (!bundle.gold.count({v.item_id, v.criterion_id}))
                throw DataError(votes.string(), k + 2,
                                "no gold for item '" + v.item_id + "', criterion '" + v.criterion_id + "'");
        }
    }
    bundle.validate();
    return bundle;
}

void write_bundle(const DatasetBundle& bundle, const std::filesystem::path& votes, const std::filesystem::path& gold,
                  const std::filesystem::path& manifest) {
    {
        auto out = open_out(votes);
        out << "worker_id,item_id,criterion_id,label,run_index\n";
        for (const auto& v : bundle.votes)
            out << csv_escape(v.worker_id) << ',' << csv_escape(v.item_id) << ',' << csv_escape(v.criterion_id) << ','
                << to_string(v.label) << ',' << v.run_index << '\n';
        check_written(out, votes);
    }
    if (!gold.empty()) {
        auto out = open_out(gold);
        out << "item_id,criterion_id,label\n";
        for (const auto& [key, label] : bundle.gold)
            out << csv_escape(key.first) << ',' << csv_escape(key.second) << ',' << to_string(label) << '\n';
        check_written(out, gold);
    }
    if (!manifest.empty()) {
        auto out = open_out(manifest);
        out << "criterion_id,name\n";
        for (const auto& c : bundle.criteria) out << csv_escape(c.id) << ',' << csv_escape(c.name) << '\n';
        check_written(out, manifest);
    }
}

ReplaySource::ReplaySource(const DatasetBundle& bundle, std::uint64_t seed, double unit_cost)
    : votes_(bundle.votes), unit_cost_(unit_cost) {
    for (std::size_t k = 0; k < votes_.size(); ++k)
        queues_[{votes_[k].item_id, votes_[k].criterion_id}].order.push_back(k);
    Rng rng(seed);
    for (auto& [key, q] : queues_) shuffle(q.order, rng);
}

VoteBatch ReplaySource::request_votes(std::span<const VoteRequest> requests) {
    VoteBatch batch;
    for (const auto& req : requests) {
        int missing = req.n_votes;
        auto it = queues_.find({req.item_id, req.criterion_id});
        if (it != queues_.end()) {
            auto& q = it->second;
            while (missing > 0 && q.cursor < q.order.size()) {
                batch.records.push_back(votes_[q.order[q.cursor++]]);
                --missing;
                ++served_;
            }
        }
        if (missing > 0) {
            batch.shortfalls.push_back({req.item_id, req.criterion_id, missing});
            shortfall_ += missing;
        }
    }
    return batch;
}

std::size_t ReplaySource::remaining(const ItemId& item, const CriterionId& criterion) const {
    auto it = queues_.find({item, criterion});
    return it == queues_.end() ? 0 : it->second.order.size() - it->second.cursor;
}

// ---------------------------------------------------------------------------

TableFormat format_for(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return ext == ".json" ? TableFormat::Json : TableFormat::Csv;
}

MetricsRow make_metrics_row(const StrategyOutcome& outcome, const TaskConfig& task, std::string scenario,
                            int replication, std::uint64_t seed) {
    MetricsRow row;
    row.scenario = std::move(scenario);
    row.strategy = std::string(to_string(outcome.strategy));
    row.replication = replication;
    row.seed = seed;
    row.n_tests = task.n_tests;
    row.votes_per_item = task.votes_per_item;
    const auto& m = outcome.metrics;
    row.price = m.price;
    row.loss = m.loss;
    row.false_exclusions = m.false_exclusions;
    row.false_inclusions = m.false_inclusions;
    row.precision = m.precision_out;
    row.recall = m.recall_out;
    row.votes_used = m.votes_used;
    row.items_left_to_experts = m.items_left_to_experts;
    row.shortfall = outcome.shortfall;
    return row;
}

const std::vector<std::string>& metrics_columns() {
    static const std::vector<std::string> columns{
        "scenario", "strategy", "replication", "seed", "n_tests", "votes_per_item", "price", "loss",
        "false_exclusions", "false_inclusions", "precision", "recall", "votes_used", "items_left_to_experts",
        "shortfall"};
    return columns;
}

namespace {

std::vector<std::string> row_fields(const MetricsRow& r) {
    return {r.scenario,
            r.strategy,
            std::to_string(r.replication),
            std::to_string(r.seed),
            std::to_string(r.n_tests),
            std::to_string(r.votes_per_item),
            format_double(r.price),
            format_double(r.loss),
            std::to_string(r.false_exclusions),
            std::to_string(r.false_inclusions),
            format_double(r.precision),
            format_double(r.recall),
            std::to_string(r.votes_used),
            std::to_string(r.items_left_to_experts),
            std::to_string(r.shortfall)};
}

json row_json(const MetricsRow& r) {
    json j = json::object();
    j["scenario"] = r.scenario;
    j["strategy"] = r.strategy;
    j["replication"] = r.replication;
    j["seed"] = r.seed;
    j["n_tests"] = r.n_tests;
    j["votes_per_item"] = r.votes_per_item;
    j["price"] = r.price;
    j["loss"] = r.loss;
    j["false_exclusions"] = r.false_exclusions;
    j["false_inclusions"] = r.false_inclusions;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["votes_used"] = r.votes_used;
    j["items_left_to_experts"] = r.items_left_to_experts;
    j["shortfall"] = r.shortfall;
    return j;
}

template <typename T>
T parse_number(const std::string& text, const std::string& source, std::size_t line, const std::string& column) {
    T value{};
    auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
        throw DataError(source, line, "column '" + column + "': not a number: '" + text + "'");
    return value;
}

}  // namespace

void write_metrics(std::ostream& out, const std::vector<MetricsRow>& rows, TableFormat format) {
    if (format == TableFormat::Json) {
        // Keys are emitted in column order, not alphabetically.
        out << "[";
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const json j = row_json(rows[k]);
            out << (k ? ",\n  {" : "\n  {");
            bool first = true;
            for (const auto& col : metrics_columns()) {
                out << (first ? "" : ", ") << json(col).dump() << ": " << j.at(col).dump();
                first = false;
            }
            out << "}";
        }
        out << (rows.empty() ? "]\n" : "\n]\n");
        return;
    }
    const auto& cols = metrics_columns();
    for (std::size_t k = 0; k < cols.size(); ++k) out << (k ? "," : "") << cols[k];
    out << '\n';
    for (const auto& r : rows) {
        const auto f = row_fields(r);
        for (std::size_t k = 0; k < f.size(); ++k) out << (k ? "," : "") << csv_escape(f[k]);
        out << '\n';
    }
}

void write_metrics(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
    auto out = open_out(path);
    write_metrics(out, rows, format_for(path));
    check_written(out, path);
}

std::vector<MetricsRow> read_metrics(std::istream& in, const std::string& source, TableFormat format) {
    std::vector<MetricsRow> rows;
    if (format == TableFormat::Json) {
        json doc;
        try {
            doc = json::parse(in);
        } catch (const json::exception& e) {
            throw DataError(source, 0, std::string("malformed JSON: ") + e.what());
        }
        if (!doc.is_array()) throw DataError(source, 0, "expected an array of rows");
        for (std::size_t k = 0; k < doc.size(); ++k) {
            const auto& j = doc[k];
            try {
                MetricsRow r;
                r.scenario = j.at("scenario").get<std::string>();
                r.strategy = j.at("strategy").get<std::string>();
                r.replication = j.at("replication").get<int>();
                r.seed = j.at("seed").get<std::uint64_t>();
                r.n_tests = j.at("n_tests").get<int>();
                r.votes_per_item = j.at("votes_per_item").get<int>();
                r.price = j.at("price").get<double>();
                r.loss = j.at("loss").get<double>();
                r.false_exclusions = j.at("false_exclusions").get<long>();
                r.false_inclusions = j.at("false_inclusions").get<long>();
                r.precision = j.at("precision").get<double>();
                r.recall = j.at("recall").get<double>();
                r.votes_used = j.at("votes_used").get<long>();
                r.items_left_to_experts = j.at("items_left_to_experts").get<long>();
                r.shortfall = j.at("shortfall").get<long>();
                rows.push_back(std::move(r));
            } catch (const json::exception& e) {
                throw DataError(source, 0, "row " + std::to_string(k) + ": " + e.what());
            }
        }
        return rows;
    }
    CsvReader reader(in, source, ',');
    std::vector<std::size_t> idx;
    for (const auto& col : metrics_columns()) idx.push_back(reader.require(col));
    std::vector<std::string> f;
    while (reader.next(f)) {
        const auto line = reader.line();
        auto get = [&](std::size_t k) -> const std::string& { return f[idx[k]]; };
        const auto& cols = metrics_columns();
        MetricsRow r;
        r.scenario = get(0);
        r.strategy = get(1);
        r.replication = parse_number<int>(get(2), source, line, cols[2]);
        r.seed = parse_number<std::uint64_t>(get(3), source, line, cols[3]);
        r.n_tests = parse_number<int>(get(4), source, line, cols[4]);
        r.votes_per_item = parse_number<int>(get(5), source, line, cols[5]);
        r.price = parse_number<double>(get(6), source, line, cols[6]);
        r.loss = parse_number<double>(get(7), source, line, cols[7]);
        r.false_exclusions = parse_number<long>(get(8), source, line, cols[8]);
        r.false_inclusions = parse_number<long>(get(9), source, line, cols[9]);
        r.precision = parse_number<double>(get(10), source, line, cols[10]);
        r.recall = parse_number<double>(get(11), source, line, cols[11]);
        r.votes_used = parse_number<long>(get(12), source, line, cols[12]);
        r.items_left_to_experts = parse_number<long>(get(13), source, line, cols[13]);
        r.shortfall = parse_number<long>(get(14), source, line, cols[14]);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<MetricsRow> read_metrics(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_metrics(in, path.string(), format_for(path));
}

std::vector<MetricsRow> frontier_rows(const std::vector<MetricsRow>& rows) {
    std::vector<PricedPoint> points;
    points.reserve(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) points.push_back({rows[k].price, rows[k].loss, k});
    std::vector<MetricsRow> out;
    for (const auto& p : pareto_frontier(points)) out.push_back(rows[p.tag]);
    return out;
}

std::filesystem::path frontier_path(const std::filesystem::path& path) {
    auto p = path;
    p.replace_filename(path.stem().string() + "_frontier" + path.extension().string());
    return p;
}

void export_results(const std::vector<MetricsRow>& rows, const std::vector<MetricsRow>& frontier,
                    const std::filesystem::path& path) {
    write_metrics(path, rows);
    write_metrics(frontier_path(path), frontier);
}

void write_trace(const std::filesystem::path& path, const StrategyOutcome& outcome) {
    json doc = json::object();
    doc["strategy"] = std::string(to_string(outcome.strategy));
    doc["criteria_order"] = outcome.criteria_order;
    doc["power_estimates"] = outcome.power_estimates;
    doc["accuracy_estimates"] = outcome.accuracy_estimates;
    doc["shortfall"] = outcome.shortfall;
    json trace = json::array();
    for (const auto& t : outcome.trace) {
        trace.push_back({{"iteration", t.iteration},
                         {"phase", t.phase},
                         {"votes_requested", t.votes_requested},
                         {"power_estimates", t.power_estimates},
                         {"items_closed_out", t.items_closed_out},
                         {"items_closed_in", t.items_closed_in},
                         {"items_given_up", t.items_given_up},
                         {"shortfall", t.shortfall}});
    }
    doc["trace"] = std::move(trace);
    json closures = json::array();
    for (const auto& c : outcome.closures)
        closures.push_back({{"item_id", c.item_id},
                            {"decision", std::string(to_string(c.decision))},
                            {"p_out_combined", c.p_out_combined},
                            {"iteration", c.iteration}});
    doc["closures"] = std::move(closures);
    if (outcome.has_metrics) {
        const auto& m = outcome.metrics;
        doc["metrics"] = {{"price", m.price},
                          {"loss", m.loss},
                          {"false_exclusions", m.false_exclusions},
                          {"false_inclusions", m.false_inclusions},
                          {"precision", m.precision_out},
                          {"recall", m.recall_out},
                          {"votes_used", m.votes_used},
                          {"items_left_to_experts", m.items_left_to_experts}};
    }
    auto out = open_out(path);
    out << doc.dump(2) << '\n';
    check_written(out, path);
}

}  // namespace screenflow
