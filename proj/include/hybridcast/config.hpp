#pragma once

#include <hybridcast/analysis.hpp>
#include <hybridcast/error.hpp>
#include <hybridcast/market_data.hpp>
#include <hybridcast/pipeline.hpp>
#include <hybridcast/serialize.hpp>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hybridcast::config {

/// Every recognised key with its default. Config files and `--set` flags may
/// only override keys that appear here (plus free-form entries under `data`).
inline json defaults() {
    return json::parse(R"({
  "data": {},
  "symbol": "",
  "features": ["open", "high", "low", "close", "volume"],
  "target": "close",
  "n_steps_in": 30,
  "n_steps_out": 1,
  "train_fraction": 0.8,
  "horizon_mode": "per_step",
  "mape_epsilon": null,
  "lstm": {
    "hidden_size": 64,
    "epochs": 50,
    "learning_rate": 0.01,
    "seed": 42,
    "optimizer": "adam",
    "clip_norm": 5.0,
    "batch_size": 0
  },
  "booster": {
    "rounds": 200,
    "lambda": 1.0,
    "gamma": 0.0,
    "max_depth": 4,
    "min_samples_leaf": 2,
    "learning_rate": 0.3
  },
  "analysis": {
    "volatility_window": 30,
    "correlation_window": 60,
    "correlation_on": "returns",
    "decomposition_period": 7,
    "histogram_bins": 50,
    "sma_fast": 20,
    "sma_slow": 50,
    "initial_capital": 10000.0,
    "cost_rate": 0.0
  },
  "output_dir": "out",
  "model_dir": ""
})");
}

struct AnalysisConfig {
    std::size_t volatility_window = 30;
    std::size_t correlation_window = 60;
    bool correlate_prices = false;
    std::size_t decomposition_period = 7;
    std::size_t histogram_bins = 50;
    analysis::BacktestConfig backtest;
};

struct RunConfig {
    std::vector<std::pair<std::string, std::filesystem::path>> data;  // in file order
    std::string symbol;                                                // primary symbol
    std::vector<data::PriceField> features;
    std::size_t target_column = 0;
    std::size_t n_in = 30;
    std::size_t n_out = 1;
    double train_fraction = 0.8;
    pipeline::HybridConfig model;
    std::optional<double> mape_epsilon;
    AnalysisConfig analysis;
    std::filesystem::path output_dir;
    std::filesystem::path model_dir;
    json snapshot;  // fully merged document, stored next to trained models

    std::vector<std::string> feature_names() const {
        std::vector<std::string> names;
        for (auto f : features) names.emplace_back(data::field_name(f));
        return names;
    }

    const std::filesystem::path& primary_path() const {
        for (const auto& [sym, path] : data)
            if (sym == symbol) return path;
        throw ConfigError("no data path for symbol '" + symbol + "'");
    }
};

namespace detail {

inline void merge(json& base, const json& over, const std::string& path) {
    if (!over.is_object()) throw ConfigError("'" + (path.empty() ? std::string("config") : path) + "' must be an object");
    for (auto it = over.begin(); it != over.end(); ++it) {
        const std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (path == "data") {
            base[it.key()] = it.value();
            continue;
        }
        if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
        json& slot = base[it.key()];
        if (slot.is_object()) {
            merge(slot, it.value(), key);
        } else {
            slot = it.value();
        }
    }
}

template <typename T>
T get(const json& j, const std::string& key) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type");
    }
}

inline std::size_t count(const json& root, const std::string& dotted, std::size_t min) {
    const json* j = &root;
    std::string_view rest = dotted;
    while (true) {
        auto dot = rest.find('.');
        j = &j->at(std::string(rest.substr(0, dot)));
        if (dot == std::string_view::npos) break;
        rest.remove_prefix(dot + 1);
    }
    if (!j->is_number_integer() && !j->is_number_unsigned()) {
        throw ConfigError("config key '" + dotted + "' must be an integer");
    }
    const auto v = j->get<long long>();
    if (v < static_cast<long long>(min)) {
        throw ConfigError("config key '" + dotted + "' must be at least " + std::to_string(min));
    }
    return static_cast<std::size_t>(v);
}

inline double real(const json& j, const std::string& key) {
    if (!j.is_number()) throw ConfigError("config key '" + key + "' must be a number");
    return j.get<double>();
}

}  // namespace detail

/// Applies `key=value` to a merged document. The value is parsed as JSON when
/// possible and taken as a bare string otherwise.
inline void apply_override(json& doc, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
    }
    const std::string key(assignment.substr(0, eq));
    const std::string text(assignment.substr(eq + 1));
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    json* node = &doc;
    std::string_view rest = key;
    std::string prefix;
    while (true) {
        const auto dot = rest.find('.');
        const std::string part(rest.substr(0, dot));
        const bool last = dot == std::string_view::npos;
        const bool free_form = prefix == "data";
        if (!node->is_object() || (!free_form && !node->contains(part))) {
            throw ConfigError("unknown config key '" + key + "'");
        }
        if (last) {
            json& slot = (*node)[part];
            if (!free_form && slot.is_object()) {
                detail::merge(slot, value, key);
            } else {
                slot = value;
            }
            return;
        }
        node = &(*node)[part];
        prefix = prefix.empty() ? part : prefix + "." + part;
        rest.remove_prefix(dot + 1);
    }
}

/// Reads `TOOL_SEED`-style values.
inline std::uint64_t parse_seed(std::string_view text) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || p != text.data() + text.size()) {
        throw ConfigError("seed '" + std::string(text) + "' is not an unsigned integer");
    }
    return v;
}

/// Merges defaults <- file <- env seed <- overrides. Call validate() on the result.
inline json merge_sources(const std::optional<json>& file, const std::optional<std::string>& env_seed,
                          const std::vector<std::string>& overrides) {
    json doc = defaults();
    if (file) detail::merge(doc, *file, "");
    if (env_seed) doc["lstm"]["seed"] = parse_seed(*env_seed);
    for (const auto& o : overrides) apply_override(doc, o);
    return doc;
}

inline RunConfig validate(const json& doc) {
    RunConfig c;
    c.snapshot = doc;

    const json& paths = doc.at("data");
    if (!paths.is_object()) throw ConfigError("'data' must map symbols to CSV paths");
    for (auto it = paths.begin(); it != paths.end(); ++it) {
        if (!it.value().is_string()) throw ConfigError("data path for '" + it.key() + "' must be a string");
        c.data.emplace_back(it.key(), it.value().get<std::string>());
    }
    c.symbol = detail::get<std::string>(doc.at("symbol"), "symbol");
    if (c.symbol.empty() && !c.data.empty()) c.symbol = c.data.front().first;
    if (!c.symbol.empty() && std::none_of(c.data.begin(), c.data.end(), [&](const auto& d) { return d.first == c.symbol; })) {
        throw ConfigError("symbol '" + c.symbol + "' has no entry under 'data'");
    }

    const auto names = detail::get<std::vector<std::string>>(doc.at("features"), "features");
    if (names.empty()) throw ConfigError("'features' must list at least one field");
    for (const auto& n : names) {
        auto f = data::parse_field(n);
        if (!f) throw ConfigError("unknown feature '" + n + "'");
        if (std::find(c.features.begin(), c.features.end(), *f) != c.features.end()) {
            throw ConfigError("feature '" + n + "' listed twice");
        }
        c.features.push_back(*f);
    }
    const auto target = data::parse_field(detail::get<std::string>(doc.at("target"), "target"));
    if (!target) throw ConfigError("unknown target field");
    auto pos = std::find(c.features.begin(), c.features.end(), *target);
    if (pos == c.features.end()) throw ConfigError("target must be one of the features");
    c.target_column = static_cast<std::size_t>(pos - c.features.begin());

    c.n_in = detail::count(doc, "n_steps_in", 1);
    c.n_out = detail::count(doc, "n_steps_out", 1);
    c.train_fraction = detail::real(doc.at("train_fraction"), "train_fraction");
    if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");

    const std::string horizon = detail::get<std::string>(doc.at("horizon_mode"), "horizon_mode");
    c.model.horizon = horizon_from_name(horizon);
    if (!doc.at("mape_epsilon").is_null()) {
        const double eps = detail::real(doc.at("mape_epsilon"), "mape_epsilon");
        if (!(eps > 0.0)) throw ConfigError("mape_epsilon must be positive");
        c.mape_epsilon = eps;
    }

    const json& l = doc.at("lstm");
    auto& lc = c.model.lstm;
    lc.hidden = detail::count(doc, "lstm.hidden_size", 1);
    lc.epochs = detail::count(doc, "lstm.epochs", 1);
    lc.learning_rate = detail::real(l.at("learning_rate"), "lstm.learning_rate");
    if (!(lc.learning_rate > 0.0)) throw ConfigError("lstm.learning_rate must be positive");
    if (!l.at("seed").is_number_unsigned() && !(l.at("seed").is_number_integer() && l.at("seed").get<long long>() >= 0)) {
        throw ConfigError("lstm.seed must be a non-negative integer");
    }
    lc.seed = l.at("seed").get<std::uint64_t>();
    const std::string opt = detail::get<std::string>(l.at("optimizer"), "lstm.optimizer");
    if (opt == "adam") {
        lc.optimizer = lstm::Optimizer::adam;
    } else if (opt == "sgd") {
        lc.optimizer = lstm::Optimizer::sgd;
    } else {
        throw ConfigError("lstm.optimizer must be 'adam' or 'sgd'");
    }
    lc.clip_norm = detail::real(l.at("clip_norm"), "lstm.clip_norm");
    if (!(lc.clip_norm >= 0.0)) throw ConfigError("lstm.clip_norm must be >= 0");
    lc.batch_size = detail::count(doc, "lstm.batch_size", 0);

    const json& b = doc.at("booster");
    c.model.rounds = detail::count(doc, "booster.rounds", 0);
    c.model.booster.lambda = detail::real(b.at("lambda"), "booster.lambda");
    c.model.booster.gamma = detail::real(b.at("gamma"), "booster.gamma");
    c.model.booster.max_depth = detail::count(doc, "booster.max_depth", 0);
    c.model.booster.min_samples_leaf = detail::count(doc, "booster.min_samples_leaf", 1);
    c.model.booster.learning_rate = detail::real(b.at("learning_rate"), "booster.learning_rate");
    c.model.validate();

    const json& a = doc.at("analysis");
    auto& ac = c.analysis;
    ac.volatility_window = detail::count(doc, "analysis.volatility_window", 2);
    ac.correlation_window = detail::count(doc, "analysis.correlation_window", 3);
    const std::string corr_on = detail::get<std::string>(a.at("correlation_on"), "analysis.correlation_on");
    if (corr_on != "returns" && corr_on != "prices") {
        throw ConfigError("analysis.correlation_on must be 'returns' or 'prices'");
    }
    ac.correlate_prices = corr_on == "prices";
    ac.decomposition_period = detail::count(doc, "analysis.decomposition_period", 2);
    ac.histogram_bins = detail::count(doc, "analysis.histogram_bins", 1);
    ac.backtest.fast = detail::count(doc, "analysis.sma_fast", 1);
    ac.backtest.slow = detail::count(doc, "analysis.sma_slow", 2);
    if (ac.backtest.slow <= ac.backtest.fast) throw ConfigError("analysis.sma_slow must exceed analysis.sma_fast");
    ac.backtest.initial_capital = detail::real(a.at("initial_capital"), "analysis.initial_capital");
    if (!(ac.backtest.initial_capital > 0.0)) throw ConfigError("analysis.initial_capital must be positive");
    ac.backtest.cost_rate = detail::real(a.at("cost_rate"), "analysis.cost_rate");
    if (!(ac.backtest.cost_rate >= 0.0 && ac.backtest.cost_rate < 1.0)) {
        throw ConfigError("analysis.cost_rate must lie in [0, 1)");
    }

    c.output_dir = detail::get<std::string>(doc.at("output_dir"), "output_dir");
    if (c.output_dir.empty()) throw ConfigError("output_dir must not be empty");
    const auto model_dir = detail::get<std::string>(doc.at("model_dir"), "model_dir");
    c.model_dir = model_dir.empty() ? c.output_dir / "model" : std::filesystem::path(model_dir);
    return c;
}

}  // namespace hybridcast::config
