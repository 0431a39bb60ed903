#include "screenflow/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace screenflow {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    if (trim(value).empty()) return out;
    std::stringstream ss(value);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(trim(part));
    return out;
}

template <typename T>
T parse_num(const std::string& key, const std::string& text) {
    T v{};
    const auto t = trim(text);
    auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc{} || res.ptr != t.data() + t.size())
        throw ConfigError("key '" + key + "': cannot parse '" + text + "'");
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    const auto t = trim(text);
    if (t == "true" || t == "1" || t == "yes") return true;
    if (t == "false" || t == "0" || t == "no") return false;
    throw ConfigError("key '" + key + "': expected true/false, got '" + text + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
    std::vector<T> out;
    for (const auto& part : split_list(text)) out.push_back(parse_num<T>(key, part));
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <typename T>
std::string join(const std::vector<T>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ",";
        if constexpr (std::is_same_v<T, double>) {
            out += fmt_double(values[i]);
        } else if constexpr (std::is_same_v<T, std::string>) {
            out += values[i];
        } else {
            out += std::to_string(values[i]);
        }
    }
    return out;
}

struct Key {
    std::string name;
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

#define SF_DOUBLE(NAME, FIELD)                                                                                   \
    Key{NAME, [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_num<double>(k, v); }, \
        [](const ExperimentConfig& c) { return fmt_double(c.FIELD); }}
#define SF_INT(NAME, FIELD)                                                                                   \
    Key{NAME, [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_num<int>(k, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }}
#define SF_SIZE(NAME, FIELD)                                                                                   \
    Key{NAME,                                                                                                  \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_num<std::size_t>(k, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }}
#define SF_BOOL(NAME, FIELD)                                                                                   \
    Key{NAME, [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_bool(k, v); }, \
        [](const ExperimentConfig& c) { return std::string(c.FIELD ? "true" : "false"); }}
#define SF_DLIST(NAME, FIELD)                                                                                   \
    Key{NAME, [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_list<double>(k, v); }, \
        [](const ExperimentConfig& c) { return join(c.FIELD); }}
#define SF_ILIST(NAME, FIELD)                                                                                   \
    Key{NAME, [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_list<int>(k, v); }, \
        [](const ExperimentConfig& c) { return join(c.FIELD); }}

const std::vector<Key>& keys() {
    static const std::vector<Key> table{
        Key{"scenario", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.scenario = trim(v); },
            [](const ExperimentConfig& c) { return c.scenario; }},
        Key{"criteria", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.criteria = split_list(v); },
            [](const ExperimentConfig& c) { return join(c.criteria); }},
        Key{"criterion_names",
            [](ExperimentConfig& c, const std::string&, const std::string& v) { c.criterion_names = split_list(v); },
            [](const ExperimentConfig& c) { return join(c.criterion_names); }},
        SF_DLIST("powers", powers),
        SF_DLIST("difficulties", difficulties),
        SF_DLIST("accuracy_targets", accuracy_targets),
        SF_DLIST("known_powers", known_powers),
        SF_DLIST("known_accuracies", known_accuracies),
        SF_SIZE("n_items", n_items),
        SF_ILIST("n_tests_grid", n_tests_grid),
        SF_ILIST("votes_grid", votes_grid),
        Key{"strategies",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                std::vector<StrategyKind> out;
                for (const auto& name : split_list(v)) {
                    if (name == "all") {
                        out = {StrategyKind::Baseline, StrategyKind::MRuns, StrategyKind::SMRuns};
                        continue;
                    }
                    try {
                        out.push_back(parse_strategy(name));
                    } catch (const std::invalid_argument& e) {
                        throw ConfigError("key '" + k + "': " + e.what());
                    }
                }
                c.strategies = std::move(out);
            },
            [](const ExperimentConfig& c) {
                std::vector<std::string> names;
                for (auto s : c.strategies) names.emplace_back(to_string(s));
                return join(names);
            }},
        SF_INT("replications", replications),
        Key{"rng_seed",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.strategy.task.rng_seed = parse_num<std::uint64_t>(k, v);
            },
            [](const ExperimentConfig& c) { return std::to_string(c.strategy.task.rng_seed); }},
        SF_INT("n_tests", strategy.task.n_tests),
        SF_INT("labels_per_worker", strategy.task.labels_per_worker),
        SF_INT("votes_per_item", strategy.task.votes_per_item),
        SF_DOUBLE("unit_cost", strategy.task.unit_cost),
        SF_DOUBLE("loss_ratio", strategy.task.loss_ratio),
        SF_DOUBLE("p_out_threshold", strategy.task.p_out_threshold),
        SF_DOUBLE("p_in_threshold", strategy.task.p_in_threshold),
        SF_INT("batch_size", strategy.task.batch_size),
        SF_DOUBLE("stop_threshold", strategy.task.stop_threshold),
        SF_DOUBLE("cost_ratio", strategy.task.cost_ratio),
        SF_BOOL("unclear_as_in", strategy.task.unclear_as_in),
        Key{"aggregator",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                try {
                    c.strategy.aggregator = parse_aggregator(trim(v));
                } catch (const std::invalid_argument& e) {
                    throw ConfigError("key '" + k + "': " + e.what());
                }
            },
            [](const ExperimentConfig& c) { return std::string(to_string(c.strategy.aggregator)); }},
        Key{"estimation_aggregator",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                try {
                    c.strategy.estimation_aggregator = parse_aggregator(trim(v));
                } catch (const std::invalid_argument& e) {
                    throw ConfigError("key '" + k + "': " + e.what());
                }
            },
            [](const ExperimentConfig& c) { return std::string(to_string(c.strategy.estimation_aggregator)); }},
        SF_SIZE("m_runs_baseline_size", strategy.m_runs_baseline_size),
        SF_SIZE("sm_baseline_size", strategy.sm_baseline_size),
        SF_BOOL("reestimate_accuracy", strategy.reestimate_accuracy),
        SF_DOUBLE("accuracy_bias", strategy.accuracy_bias),
        SF_DOUBLE("power_bias", strategy.power_bias),
        SF_DOUBLE("prior_power", strategy.aggregator_options.prior_power),
        SF_INT("em_max_iters", strategy.aggregator_options.max_iters),
        SF_DOUBLE("em_tol", strategy.aggregator_options.tol),
        SF_DOUBLE("trust_damping", strategy.aggregator_options.damping),
        SF_DOUBLE("trust_implication", strategy.aggregator_options.implication),
        SF_DOUBLE("trust_initial", strategy.aggregator_options.initial_trust),
        SF_DOUBLE("cheater_probability", crowd.cheater_probability),
        SF_DOUBLE("accuracy_low", crowd.accuracy_low),
        SF_DOUBLE("accuracy_high", crowd.accuracy_high),
        SF_DOUBLE("out_accuracy_boost", crowd.out_accuracy_boost),
        Key{"boost_mode",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                const auto t = trim(v);
                if (t == "multiplicative") {
                    c.crowd.boost_mode = BoostMode::Multiplicative;
                } else if (t == "additive") {
                    c.crowd.boost_mode = BoostMode::Additive;
                } else {
                    throw ConfigError("key '" + k + "': expected multiplicative or additive, got '" + v + "'");
                }
            },
            [](const ExperimentConfig& c) {
                return std::string(c.crowd.boost_mode == BoostMode::Multiplicative ? "multiplicative" : "additive");
            }},
    };
    return table;
}

#undef SF_DOUBLE
#undef SF_INT
#undef SF_SIZE
#undef SF_BOOL
#undef SF_DLIST
#undef SF_ILIST

void check_aligned(const ExperimentConfig& c, std::size_t size, const char* key, bool optional) {
    if (optional && size == 0) return;
    if (size != c.criteria.size())
        throw ConfigError(std::string("key '") + key + "' has " + std::to_string(size) + " entries for " +
                          std::to_string(c.criteria.size()) + " criteria");
}

}  // namespace

void ExperimentConfig::validate() const {
    if (criteria.empty()) throw ConfigError("key 'criteria' is empty");
    std::set<CriterionId> unique(criteria.begin(), criteria.end());
    if (unique.size() != criteria.size()) throw ConfigError("key 'criteria' has duplicates");
    check_aligned(*this, criterion_names.size(), "criterion_names", true);
    check_aligned(*this, powers.size(), "powers", false);
    check_aligned(*this, difficulties.size(), "difficulties", true);
    check_aligned(*this, accuracy_targets.size(), "accuracy_targets", true);
    check_aligned(*this, known_powers.size(), "known_powers", true);
    check_aligned(*this, known_accuracies.size(), "known_accuracies", true);
    for (double p : powers)
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("key 'powers': value outside [0, 1]");
    for (double p : known_powers)
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("key 'known_powers': value outside [0, 1]");
    for (double a : known_accuracies)
        if (!(a >= 0.5 && a <= 1.0)) throw ConfigError("key 'known_accuracies': value outside [0.5, 1]");
    if (n_items < 1) throw ConfigError("key 'n_items' must be >= 1");
    if (replications < 1) throw ConfigError("key 'replications' must be >= 1");
    if (strategies.empty()) throw ConfigError("key 'strategies' is empty");
    for (int n : n_tests_grid)
        if (n < 0) throw ConfigError("key 'n_tests_grid': negative entry");
    for (int j : votes_grid)
        if (j < 1) throw ConfigError("key 'votes_grid': entries must be >= 1");
    try {
        strategy.task.validate();
        auto crowd_check = crowd;
        for (std::size_t i = 0; i < difficulties.size(); ++i) crowd_check.difficulty[criteria[i]] = difficulties[i];
        for (std::size_t i = 0; i < accuracy_targets.size(); ++i)
            crowd_check.accuracy_target[criteria[i]] = accuracy_targets[i];
        crowd_check.validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
}

void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value) {
    for (const auto& k : keys()) {
        if (k.name == key) {
            k.set(config, key, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not KEY=VALUE");
    apply_setting(config, trim(std::string_view(assignment).substr(0, eq)), assignment.substr(eq + 1));
}

ExperimentConfig parse_config(std::istream& in, const std::string& source, ExperimentConfig base) {
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        try {
            if (eq == std::string::npos) throw ConfigError("expected 'key = value'");
            apply_setting(base, trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(number) + ": " + e.what());
        }
    }
    return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string() + ": cannot open config");
    return parse_config(in, path.string(), std::move(base));
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& k : keys()) out.push_back(k.name);
        return out;
    }();
    return names;
}

std::string render_config(const ExperimentConfig& config) {
    std::string out;
    for (const auto& k : keys()) out += k.name + " = " + k.get(config) + "\n";
    return out;
}

}  // namespace screenflow
