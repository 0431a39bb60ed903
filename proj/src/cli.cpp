#include "screenflow/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "screenflow/experiment.hpp"

namespace screenflow {

namespace {

void configure_logging() {
    static const bool done = [] {
        auto logger = spdlog::stderr_logger_mt("screenflow");
        logger->set_pattern("[%l] %v");
        spdlog::set_default_logger(logger);
        return true;
    }();
    (void)done;
    auto level = spdlog::level::warn;
    if (const char* env = std::getenv("SCREENFLOW_LOG"); env && *env) level = spdlog::level::from_str(env);
    spdlog::set_level(level);
}

struct CommonArgs {
    std::string config;
    std::vector<std::string> sets;
    std::string out;
    int replications = 0;
    std::uint64_t seed = 0;
    std::string strategies;
    unsigned parallelism = std::max(1u, std::thread::hardware_concurrency());
    CLI::Option* replications_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool need_out) {
    cmd->add_option("--config", a.config, "Config file (key = value lines)")->check(CLI::ExistingFile);
    cmd->add_option("--set", a.sets, "Override a config key, KEY=VALUE (repeatable)");
    auto* out = cmd->add_option("--out", a.out, "Output file (.csv or .json)");
    if (need_out) out->required();
    a.replications_opt = cmd->add_option("--replications", a.replications, "Replications per grid cell")
                             ->check(CLI::PositiveNumber);
    a.seed_opt = cmd->add_option("--seed", a.seed, "Master seed");
    cmd->add_option("--strategies", a.strategies, "Comma-separated: baseline, m-runs, sm-runs, all");
    cmd->add_option("--parallelism", a.parallelism, "Worker threads")->check(CLI::PositiveNumber);
}

ExperimentConfig build_config(const CommonArgs& a) {
    ExperimentConfig cfg;
    if (!a.config.empty()) cfg = load_config(a.config);
    for (const auto& s : a.sets) apply_override(cfg, s);
    if (a.replications_opt->count()) cfg.replications = a.replications;
    if (a.seed_opt->count()) cfg.strategy.task.rng_seed = a.seed;
    if (!a.strategies.empty()) apply_setting(cfg, "strategies", a.strategies);
    cfg.validate();
    return cfg;
}

struct DatasetArgs {
    std::string votes;
    std::string gold;
    std::string manifest;
    std::vector<std::string> columns;
    std::vector<std::string> label_tokens;
    char delimiter = ',';
};

void add_dataset(CLI::App* cmd, DatasetArgs& d, bool need_votes) {
    auto* votes = cmd->add_option("--votes", d.votes, "Vote CSV")->check(CLI::ExistingFile);
    if (need_votes) votes->required();
    cmd->add_option("--gold", d.gold, "Gold label CSV")->check(CLI::ExistingFile);
    cmd->add_option("--manifest", d.manifest, "Criteria manifest CSV")->check(CLI::ExistingFile);
    cmd->add_option("--column", d.columns,
                    "Map a canonical column to the file's header, e.g. worker_id=annotator (repeatable)");
    cmd->add_option("--label-token", d.label_tokens,
                    "Map a file token to IN/OUT/UNCLEAR, e.g. yes=OUT (repeatable; replaces the defaults)");
    cmd->add_option("--delimiter", d.delimiter, "Field separator of the input files (default ,)");
}

std::pair<std::string, std::string> split_assignment(const std::string& s, const char* what) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(std::string(what) + " '" + s + "' is not A=B");
    return {s.substr(0, eq), s.substr(eq + 1)};
}

CsvLayout build_layout(const DatasetArgs& d) {
    CsvLayout layout;
    for (const auto& c : d.columns) {
        auto [canonical, external] = split_assignment(c, "--column");
        if (canonical == "worker_id") layout.worker_column = external;
        else if (canonical == "item_id") layout.item_column = external;
        else if (canonical == "criterion_id") layout.criterion_column = external;
        else if (canonical == "label") layout.label_column = external;
        else if (canonical == "run_index") layout.run_column = external;
        else if (canonical == "name") layout.name_column = external;
        else throw ConfigError("--column: unknown canonical column '" + canonical + "'");
    }
    if (!d.label_tokens.empty()) {
        layout.label_tokens.clear();
        for (const auto& t : d.label_tokens) {
            auto [token, label] = split_assignment(t, "--label-token");
            try {
                layout.label_tokens[token] = parse_label(label);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("--label-token: ") + e.what());
            }
        }
    }
    layout.delimiter = d.delimiter;
    return layout;
}

DatasetBundle load_dataset(const DatasetArgs& d) {
    std::optional<std::filesystem::path> gold, manifest;
    if (!d.gold.empty()) gold = d.gold;
    if (!d.manifest.empty()) manifest = d.manifest;
    return load_votes(d.votes, gold, manifest, build_layout(d));
}

struct Summary {
    long runs = 0;
    double price = 0, loss = 0, precision = 0, recall = 0, left = 0, shortfall = 0;
};

void print_summary(std::ostream& out, const std::vector<MetricsRow>& rows) {
    std::vector<std::tuple<std::string, int, int>> order;
    std::map<std::tuple<std::string, int, int>, Summary> groups;
    for (const auto& r : rows) {
        const auto key = std::tuple{r.strategy, r.n_tests, r.votes_per_item};
        auto [it, fresh] = groups.try_emplace(key);
        if (fresh) order.push_back(key);
        auto& s = it->second;
        ++s.runs;
        s.price += r.price;
        s.loss += r.loss;
        s.precision += r.precision;
        s.recall += r.recall;
        s.left += static_cast<double>(r.items_left_to_experts);
        s.shortfall += static_cast<double>(r.shortfall);
    }
    out << "strategy  n_tests  J  runs  mean_price  mean_loss  precision  recall  left_to_experts  shortfall\n";
    out << std::fixed;
    for (const auto& key : order) {
        const auto& s = groups.at(key);
        const double n = static_cast<double>(s.runs);
        out << std::left << std::setw(9) << std::get<0>(key) << std::right << std::setw(8) << std::get<1>(key)
            << std::setw(3) << std::get<2>(key) << std::setw(6) << s.runs << std::setprecision(2) << std::setw(12)
            << s.price / n << std::setw(11) << s.loss / n << std::setprecision(4) << std::setw(11)
            << s.precision / n << std::setw(8) << s.recall / n << std::setprecision(2) << std::setw(17) << s.left / n
            << std::setw(11) << s.shortfall / n << "\n";
    }
    out.unsetf(std::ios::fixed);
}

int cmd_simulate(const CommonArgs& a, const std::string& trace, std::ostream& out) {
    const auto cfg = build_config(a);
    spdlog::info("simulate: {} strategies x {} N_t x {} J x {} replications", cfg.strategies.size(),
                 cfg.n_tests_grid.size(), cfg.votes_grid.size(), cfg.replications);
    const auto rows = run_sweep(cfg, a.parallelism, [](std::size_t done, std::size_t total) {
        if (done % 50 == 0 || done == total) spdlog::debug("simulate: {}/{} runs", done, total);
    });
    const auto frontier = frontier_rows(rows);
    export_results(rows, frontier, a.out);
    if (!trace.empty()) {
        const std::filesystem::path base(trace);
        const int nt = cfg.n_tests_grid.empty() ? cfg.strategy.task.n_tests : cfg.n_tests_grid.front();
        const int j = cfg.votes_grid.empty() ? cfg.strategy.task.votes_per_item : cfg.votes_grid.front();
        for (auto s : cfg.strategies) {
            auto path = base;
            path.replace_filename(base.stem().string() + "_" + std::string(to_string(s)) + base.extension().string());
            write_trace(path, simulate_once(cfg, s, nt, j, 0).outcome);
        }
    }
    print_summary(out, rows);
    out << "wrote " << rows.size() << " rows to " << a.out << " and " << frontier.size() << " frontier rows to "
        << frontier_path(a.out).string() << "\n";
    return kExitOk;
}

int cmd_replay(const CommonArgs& a, const DatasetArgs& d, std::ostream& out, std::ostream& err) {
    const auto cfg = build_config(a);
    const auto bundle = load_dataset(d);
    const auto items = bundle.items();
    const bool has_gold = std::all_of(items.begin(), items.end(), [](const Item& i) { return i.gold.has_value(); });
    if (!has_gold) err << "warning: dataset lacks complete gold labels; loss, precision and recall are not computed\n";
    const auto rows = run_replay(cfg, bundle, a.parallelism);
    export_results(rows, frontier_rows(rows), a.out);
    print_summary(out, rows);
    long shortfall = 0, left = 0;
    for (const auto& r : rows) {
        shortfall += r.shortfall;
        left += r.items_left_to_experts;
    }
    out << "replayed " << bundle.votes.size() << " recorded votes over " << items.size() << " items; total shortfall "
        << shortfall << ", items left to experts " << left << "\n";
    return kExitOk;
}

int cmd_estimate(const CommonArgs& a, const DatasetArgs& d, std::ostream& out, std::ostream& err) {
    const auto cfg = build_config(a);
    std::vector<VoteRecord> votes;
    std::vector<CriterionId> criteria;
    std::map<CriterionId, double> true_power, true_accuracy;
    std::size_t baseline_items = 0;
    if (!d.votes.empty()) {
        const auto bundle = load_dataset(d);
        votes = bundle.votes;
        criteria = bundle.criterion_ids();
        baseline_items = bundle.items().size();
    } else {
        auto sim = cfg;
        sim.n_items = cfg.strategy.sm_baseline_size;
        const auto bundle = generate_dataset(sim, cfg.strategy.task.votes_per_item, cfg.strategy.task.rng_seed);
        votes = bundle.votes;
        criteria = cfg.criteria;
        baseline_items = sim.n_items;
        const auto crowd = crowd_for(cfg, cfg.strategy.task.n_tests, 0);
        for (std::size_t i = 0; i < cfg.criteria.size(); ++i) {
            true_power[cfg.criteria[i]] = cfg.powers[i];
            true_accuracy[cfg.criteria[i]] = expected_screened_accuracy(crowd, cfg.criteria, cfg.criteria[i]);
        }
    }
    const auto estimates = estimate_from_votes(votes, criteria, cfg.strategy);
    for (const auto& e : estimates)
        if (e.votes_per_item < 3.0)
            err << "warning: criterion " << e.criterion << " has " << e.votes_per_item
                << " votes per item (< 3); estimation error may exceed 10%\n";

    std::ostringstream table;
    table << "criterion,power,accuracy,items,votes_per_item" << (true_power.empty() ? "" : ",true_power,true_accuracy") << "\n";
    for (const auto& e : estimates) {
        table << e.criterion << "," << format_double(e.power) << "," << format_double(e.accuracy) << "," << e.items
              << "," << format_double(e.votes_per_item);
        if (!true_power.empty())
            table << "," << format_double(true_power.at(e.criterion)) << ","
                  << format_double(true_accuracy.at(e.criterion));
        table << "\n";
    }
    out << "baseline items: " << baseline_items << ", aggregator: " << to_string(cfg.strategy.estimation_aggregator)
        << "\n"
        << table.str();
    if (!a.out.empty()) {
        std::ofstream f(a.out, std::ios::binary);
        if (!f) throw DataError(a.out, 0, "cannot open for writing");
        f << table.str();
        if (!f.flush()) throw DataError(a.out, 0, "write failed");
    }
    return kExitOk;
}

int cmd_pareto(const std::string& in, const std::string& out_path, std::ostream& out) {
    std::vector<MetricsRow> rows;
    try {
        rows = read_metrics(in);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    const auto frontier = frontier_rows(rows);
    write_metrics(out_path, frontier);
    out << frontier.size() << " of " << rows.size() << " rows are Pareto-optimal; wrote " << out_path << "\n";
    return kExitOk;
}

int cmd_dataset(const CommonArgs& a, const std::string& votes, const std::string& gold, const std::string& manifest,
                int j, std::ostream& out) {
    const auto cfg = build_config(a);
    const int per_item = j > 0 ? j : cfg.strategy.task.votes_per_item;
    const auto bundle = generate_dataset(cfg, per_item, cfg.strategy.task.rng_seed);
    write_bundle(bundle, votes, gold, manifest);
    out << "wrote " << bundle.votes.size() << " votes on " << cfg.n_items << " items to " << votes << "\n";
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    configure_logging();
    CLI::App app{"Crowd screening strategies: simulate, replay, estimate, pareto"};
    app.name("screenflow");
    app.require_subcommand(1);

    CommonArgs sim_args;
    std::string trace;
    auto* simulate = app.add_subcommand("simulate", "Grid sweep of strategies on synthetic crowds");
    add_common(simulate, sim_args, true);
    simulate->add_option("--trace", trace, "Also write per-strategy JSON traces of replication 0 (STEM_<strategy>EXT, first grid cell)");

    CommonArgs rep_args;
    DatasetArgs rep_data;
    auto* replay = app.add_subcommand("replay", "Run strategies against a recorded vote dataset");
    add_common(replay, rep_args, true);
    add_dataset(replay, rep_data, true);

    CommonArgs est_args;
    DatasetArgs est_data;
    auto* estimate = app.add_subcommand("estimate", "Estimate criterion power and crowd accuracy");
    add_common(estimate, est_args, false);
    add_dataset(estimate, est_data, false);

    std::string pareto_in, pareto_out;
    auto* pareto = app.add_subcommand("pareto", "Extract the (price, loss) Pareto frontier of a metrics file");
    pareto->add_option("--in", pareto_in, "Metrics CSV or JSON")->required()->check(CLI::ExistingFile);
    pareto->add_option("--out", pareto_out, "Frontier output (.csv or .json)")->required();

    CommonArgs ds_args;
    std::string ds_votes, ds_gold, ds_manifest;
    int ds_j = 0;
    auto* dataset = app.add_subcommand("dataset", "Write a synthetic vote dataset in the canonical CSV schema");
    add_common(dataset, ds_args, false);
    dataset->add_option("--votes-out", ds_votes, "Vote CSV to write")->required();
    dataset->add_option("--gold-out", ds_gold, "Gold CSV to write");
    dataset->add_option("--manifest-out", ds_manifest, "Manifest CSV to write");
    dataset->add_option("--votes-per-item", ds_j, "Votes per (item, criterion); default votes_per_item");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*simulate) return cmd_simulate(sim_args, trace, out);
        if (*replay) return cmd_replay(rep_args, rep_data, out, err);
        if (*estimate) return cmd_estimate(est_args, est_data, out, err);
        if (*pareto) return cmd_pareto(pareto_in, pareto_out, out);
        if (*dataset) return cmd_dataset(ds_args, ds_votes, ds_gold, ds_manifest, ds_j, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return *replay || *estimate ? kExitUsage : kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace screenflow
