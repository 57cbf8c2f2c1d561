#pragma once

#include <hybridcast/analysis.hpp>
#include <hybridcast/config.hpp>
#include <hybridcast/csv.hpp>
#include <hybridcast/error.hpp>
#include <hybridcast/market_data.hpp>
#include <hybridcast/pipeline.hpp>
#include <hybridcast/serialize.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace hybridcast::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
    exit_ok = 0,
    exit_internal = 1,
    exit_config = 2,
    exit_data = 3,
    exit_numeric = 4,
};

inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return exit_config;
    if (dynamic_cast<const SchemaError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
        dynamic_cast<const IoError*>(&e) || dynamic_cast<const SizingError*>(&e)) {
        return exit_data;
    }
    if (dynamic_cast<const Error*>(&e)) return exit_numeric;
    return exit_internal;
}

/// Artifacts are written into a sibling `<dir>.tmp` directory and renamed
/// into place on commit; anything left uncommitted is removed.
class StagingDir {
public:
    explicit StagingDir(fs::path target) : target_(std::move(target)) {
        staging_ = target_;
        staging_ += ".tmp";
        std::error_code ec;
        fs::remove_all(staging_, ec);
        fs::create_directories(staging_, ec);
        if (ec) throw IoError("cannot create " + staging_.string() + ": " + ec.message());
    }

    StagingDir(const StagingDir&) = delete;
    StagingDir& operator=(const StagingDir&) = delete;

    ~StagingDir() {
        if (!committed_) {
            std::error_code ec;
            fs::remove_all(staging_, ec);
        }
    }

    const fs::path& path() const noexcept { return staging_; }
    fs::path operator/(const std::string& name) const { return staging_ / name; }

    void commit() {
        std::error_code ec;
        fs::remove_all(target_, ec);
        fs::rename(staging_, target_, ec);
        if (ec) throw IoError("cannot move results into " + target_.string() + ": " + ec.message());
        committed_ = true;
    }

private:
    fs::path target_;
    fs::path staging_;
    bool committed_ = false;
};

struct LoadedSeries {
    data::PriceSeries series;
    std::string hash;
};

inline LoadedSeries load_series(const fs::path& path) {
    const std::string bytes = read_file(path);
    std::istringstream in(bytes);
    try {
        return {data::parse_csv(in), fingerprint(bytes)};
    } catch (const SchemaError& e) {
        throw SchemaError(path.string() + ": " + e.what());
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

namespace detail {

inline std::string write_csv(const std::function<void(csv::RowWriter&)>& body) {
    std::ostringstream os;
    csv::RowWriter w(os);
    body(w);
    return os.str();
}

inline json stats_json(const analysis::DistributionStats& s) {
    return json{{"count", s.count},
                {"mean", s.mean},
                {"std", s.std},
                {"skewness", s.skewness},
                {"excess_kurtosis", s.excess_kurtosis}};
}

inline std::size_t index_of(const config::RunConfig& cfg, const std::string& symbol) {
    for (std::size_t i = 0; i < cfg.data.size(); ++i)
        if (cfg.data[i].first == symbol) return i;
    throw ConfigError("unknown symbol '" + symbol + "'");
}

inline void require_data(const config::RunConfig& cfg) {
    if (cfg.data.empty()) throw ConfigError("no input data configured (set data.<SYMBOL>=<path>)");
}

}  // namespace detail

/// Files written by `analyze`, in order.
inline const std::vector<std::string>& analysis_artifacts() {
    static const std::vector<std::string> files{
        "rebased_prices.csv",      "volatility.csv", "returns_histogram.csv", "correlation_matrix.csv",
        "rolling_correlation.csv", "dominance.csv",  "decomposition.csv",     "backtest.csv"};
    return files;
}

/// Exploratory analysis over every configured symbol, aligned by date.
inline void cmd_analyze(const config::RunConfig& cfg, std::ostream& out) {
    detail::require_data(cfg);
    std::vector<data::PriceSeries> loaded;
    for (const auto& [symbol, path] : cfg.data) {
        auto s = load_series(path).series;
        s.symbol = symbol;
        loaded.push_back(std::move(s));
    }
    const auto series = data::align_by_date(loaded);
    const std::size_t T = series.front().size();
    if (T < 2) throw SizingError("analyze: fewer than 2 dates shared by all symbols");
    const auto& dates = series.front().records;
    const std::size_t primary = detail::index_of(cfg, cfg.symbol);
    const auto& ac = cfg.analysis;

    std::vector<std::string> symbols;
    std::vector<Vector> closes, returns, caps;
    for (const auto& s : series) {
        symbols.push_back(s.symbol);
        closes.push_back(data::field_values(s, data::PriceField::close));
        returns.push_back(analysis::daily_returns(closes.back()));
        caps.push_back(data::field_values(s, data::PriceField::marketcap));
    }

    std::vector<Vector> rebased;
    for (const auto& s : series) rebased.push_back(data::rebase_to_100(s, data::PriceField::close));
    std::vector<Vector> vol;
    for (const auto& r : returns) vol.push_back(analysis::rolling_volatility(r, ac.volatility_window));

    const auto& corr_input = ac.correlate_prices ? closes : returns;
    const std::size_t corr_offset = ac.correlate_prices ? 0 : 1;  // first date index of corr_input
    Matrix corr = symbols.size() >= 2 ? analysis::correlation_matrix(corr_input, symbols) : Matrix{{1.0}};
    std::vector<std::pair<std::string, analysis::MaybeVector>> rolling;
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        for (std::size_t j = i + 1; j < symbols.size(); ++j) {
            rolling.emplace_back(symbols[i] + "~" + symbols[j],
                                 analysis::rolling_correlation(corr_input[i], corr_input[j], ac.correlation_window));
        }
    }
    const Matrix dominance = analysis::market_dominance(caps);
    const auto decomposition = analysis::decompose_additive(closes[primary], ac.decomposition_period);
    const auto backtest = analysis::sma_crossover_backtest(closes[primary], ac.backtest);

    json summary{{"symbols", symbols}, {"aligned_dates", T}, {"first_date", dates.front().date_text},
                 {"last_date", dates.back().date_text}, {"returns", json::object()}};
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        summary["returns"][symbols[i]] = detail::stats_json(analysis::distribution_stats(returns[i]));
    }
    summary["backtest"] = json{{"symbol", symbols[primary]},
                               {"fast", ac.backtest.fast},
                               {"slow", ac.backtest.slow},
                               {"initial_capital", ac.backtest.initial_capital},
                               {"strategy_final", backtest.strategy_final},
                               {"buy_and_hold_final", backtest.buy_and_hold_final},
                               {"closed_trades", backtest.trades.size()}};

    StagingDir stage(cfg.output_dir / "analysis");
    write_file(stage / "rebased_prices.csv", detail::write_csv([&](csv::RowWriter& w) {
                   w.cell("date");
                   for (const auto& s : symbols) {
                       w.cell(s + "_close").cell(s + "_volume").cell(s + "_marketcap").cell(s + "_rebased");
                   }
                   w.end();
                   for (std::size_t t = 0; t < T; ++t) {
                       w.cell(dates[t].date_text);
                       for (std::size_t i = 0; i < series.size(); ++i) {
                           const auto& r = series[i].records[t];
                           w.cell(r.close).cell(r.volume).cell(r.marketcap).cell(rebased[i][t]);
                       }
                       w.end();
                   }
               }));
    write_file(stage / "volatility.csv", detail::write_csv([&](csv::RowWriter& w) {
                   w.cell("date");
                   for (const auto& s : symbols) w.cell(s);
                   w.end();
                   // vol[j] covers returns[j .. j + window), i.e. ends at price index j + window
                   for (std::size_t j = 0; j < vol.front().size(); ++j) {
                       w.cell(dates[j + ac.volatility_window].date_text);
                       for (const auto& v : vol) w.cell(v[j]);
                       w.end();
                   }
               }));
    write_file(stage / "returns_histogram.csv", detail::write_csv([&](csv::RowWriter& w) {
                   w.cell("symbol").cell("bin").cell("lower").cell("upper").cell("count").end();
                   for (std::size_t i = 0; i < symbols.size(); ++i) {
                       const auto h = analysis::histogram(returns[i], ac.histogram_bins);
                       for (std::size_t b = 0; b < h.counts.size(); ++b) {
                           w.cell(symbols[i]).cell(b).cell(h.edges[b]).cell(h.edges[b + 1]).cell(h.counts[b]).end();
                       }
                   }
               }));
    write_file(stage / "correlation_matrix.csv", detail::write_csv([&](csv::RowWriter& w) {
                   w.cell("symbol");
                   for (const auto& s : symbols) w.cell(s);
                   w.end();
                   for (std::size_t i = 0; i < symbols.size(); ++i) {
                       w.cell(symbols[i]);
                       for (std::size_t j = 0; j < symbols.size(); ++j) w.cell(corr(i, j));
                       w.end();
                   }
               }));
    write_file(stage / "rolling_correlation.csv", detail::write_csv([&](csv::RowWriter& w) {
                   w.cell("date");
                   for (const auto& [name, values] : rolling) w.cell(name);
                   w.end();
                   if (rolling.empty()) return;
                   for (std::size_t j = 0; j < rolling.front().second.size(); ++j) {
                       w.cell(dates[j + corr_offset + ac.correlation_window - 1].date_text);
                       for (const auto& [name, values] : rolling) w.cell(values[j]);
                       w.end();
                   }
               }));
    write_file(stage / "dominance.csv", detail::write_csv([&](csv::RowWriter& w) {
                   w.cell("date");
                   for (const auto& s : symbols) w.cell(s);
                   w.end();
                   for (std::size_t t = 0; t < T; ++t) {
                       w.cell(dates[t].date_text);
                       for (std::size_t i = 0; i < symbols.size(); ++i) w.cell(dominance(i, t));
                       w.end();
                   }
               }));
    write_file(stage / "decomposition.csv", detail::write_csv([&](csv::RowWriter& w) {
                   w.cell("date").cell("observed").cell("trend").cell("seasonal").cell("residual").end();
                   for (std::size_t t = 0; t < T; ++t) {
                       w.cell(dates[t].date_text)
                           .cell(closes[primary][t])
                           .cell(decomposition.trend[t])
                           .cell(decomposition.seasonal[t])
                           .cell(decomposition.residual[t])
                           .end();
                   }
               }));
    write_file(stage / "backtest.csv", detail::write_csv([&](csv::RowWriter& w) {
                   w.cell("date").cell("close").cell("strategy").cell("buy_and_hold").end();
                   for (std::size_t t = 0; t < T; ++t) {
                       w.cell(dates[t].date_text)
                           .cell(closes[primary][t])
                           .cell(backtest.strategy[t])
                           .cell(backtest.buy_and_hold[t])
                           .end();
                   }
               }));
    write_file(stage / "summary.json", dump(summary));
    stage.commit();
    out << "analyze: " << symbols.size() << " symbol(s), " << T << " aligned dates -> "
        << (cfg.output_dir / "analysis").string() << "\n";
}

/// Fits the hybrid model and both baselines on the primary symbol.
inline void cmd_train(const config::RunConfig& cfg, std::ostream& out,
                      const std::optional<fs::path>& dump_windows = std::nullopt) {
    detail::require_data(cfg);
    const auto loaded = load_series(cfg.primary_path());
    const Matrix features = data::feature_matrix(loaded.series, cfg.features);
    const auto prepared = pipeline::prepare_datasets(features, cfg.target_column, cfg.n_in, cfg.n_out,
                                                     cfg.train_fraction, cfg.feature_names());

    const auto stage_one = pipeline::train_stage_one(prepared.train, cfg.model);
    auto boosters = pipeline::train_stage_two(stage_one.latents, prepared.train.targets, cfg.model);

    ModelBundle bundle;
    bundle.hybrid = pipeline::assemble_hybrid(prepared.train, stage_one, std::move(boosters), cfg.model);
    bundle.lstm_only = pipeline::lstm_baseline_from(stage_one, prepared.train);
    bundle.gbt_lags = pipeline::train_baseline_gbt(prepared.train, cfg.model);
    bundle.loss_history = stage_one.net.loss_history;
    bundle.train_latents = stage_one.latents;
    bundle.feature_names = cfg.feature_names();

    ManifestInfo info{cfg.model.lstm.seed, loaded.hash, cfg.symbol, cfg.snapshot};
    StagingDir stage(cfg.model_dir);
    save_model_dir(stage.path(), bundle, info);
    stage.commit();

    if (dump_windows) {
        std::ostringstream os;
        data::write_windows_csv(os, prepared.train);
        data::write_windows_csv(os, prepared.test, false);
        write_file(*dump_windows, os.str());
    }
    out << "train: " << cfg.symbol << " " << prepared.train.size() << " train / " << prepared.test.size()
        << " test windows, final LSTM loss " << csv::number(bundle.loss_history.back()) << " -> "
        << cfg.model_dir.string() << "\n";
}

/// Scores the hybrid model and both baselines on the held-out windows.
inline pipeline::EvalReport cmd_evaluate(const config::RunConfig& cfg, const fs::path& model_dir, std::ostream& out,
                                         std::ostream& err) {
    const LoadedModel model = load_model_dir(model_dir);
    const config::RunConfig trained = config::validate(model.info.config);
    fs::path data_path;
    for (const auto& [sym, path] : cfg.data)
        if (sym == model.info.symbol) data_path = path;
    if (data_path.empty()) throw ConfigError("no data path configured for model symbol '" + model.info.symbol + "'");

    const auto loaded = load_series(data_path);
    if (loaded.hash != model.info.data_hash) {
        err << "evaluate: warning: data fingerprint differs from the one the model was trained on\n";
    }
    const auto& b = model.bundle;
    if (b.feature_names != trained.feature_names()) throw ShapeError("evaluate: model features disagree with its config");
    const Matrix features = data::feature_matrix(loaded.series, trained.features);
    const auto all = data::make_windows(features, b.hybrid.target_column, b.hybrid.n_in, b.hybrid.n_out,
                                        b.feature_names);
    const auto split = data::chrono_split(all, trained.train_fraction);
    if (b.hybrid.scaler.features() != features.cols()) throw ShapeError("evaluate: scaler width mismatch");
    const auto test = data::apply_scaler(split.second, b.hybrid.scaler);

    const auto forecasters = pipeline::standard_forecasters(b.hybrid, b.lstm_only, b.gbt_lags);
    const auto report = pipeline::evaluate(forecasters, test, cfg.mape_epsilon);

    std::vector<pipeline::ForecastResult> results;
    for (const auto& f : forecasters) results.push_back(f.predict(test));

    StagingDir stage(cfg.output_dir / "report");
    write_file(stage / "report.csv", report_csv(report));
    write_file(stage / "report.json", dump(to_json(report)));
    write_file(stage / "predictions.csv", detail::write_csv([&](csv::RowWriter& w) {
                   w.cell("date").cell("step").cell("actual");
                   for (const auto& f : forecasters) w.cell(f.name);
                   w.end();
                   for (std::size_t i = 0; i < test.size(); ++i) {
                       for (std::size_t s = 0; s < test.n_out; ++s) {
                           const std::size_t row = test.origins[i] + test.n_in + s;
                           w.cell(loaded.series.records[row].date_text).cell(s + 1).cell(results.front().targets(i, s));
                           for (const auto& r : results) w.cell(r.predictions(i, s));
                           w.end();
                       }
                   }
               }));
    stage.commit();

    for (const auto& row : report.rows) {
        out << row.model << ": MAPE " << csv::number(row.test_mape) << "%, MinMax RMSE "
            << csv::number(row.test_minmax_rmse) << "\n";
    }
    return report;
}

/// SMA crossover against buy-and-hold on the primary symbol.
inline analysis::BacktestResult cmd_backtest(const config::RunConfig& cfg, std::ostream& out) {
    detail::require_data(cfg);
    const auto loaded = load_series(cfg.primary_path());
    const auto& records = loaded.series.records;
    const Vector closes = data::field_values(loaded.series, data::PriceField::close);
    auto result = analysis::sma_crossover_backtest(closes, cfg.analysis.backtest);

    StagingDir stage(cfg.output_dir / "backtest");
    write_file(stage / "equity_curve.csv", detail::write_csv([&](csv::RowWriter& w) {
                   w.cell("date").cell("strategy").cell("buy_and_hold").end();
                   for (std::size_t t = 0; t < records.size(); ++t) {
                       w.cell(records[t].date_text).cell(result.strategy[t]).cell(result.buy_and_hold[t]).end();
                   }
               }));
    write_file(stage / "trades.csv", detail::write_csv([&](csv::RowWriter& w) {
                   w.cell("entry_index").cell("exit_index").cell("entry_date").cell("exit_date");
                   w.cell("entry_price").cell("exit_price").cell("return").end();
                   for (const auto& tr : result.trades) {
                       w.cell(tr.entry).cell(tr.exit).cell(records[tr.entry].date_text).cell(records[tr.exit].date_text);
                       w.cell(closes[tr.entry]).cell(closes[tr.exit]).cell(closes[tr.exit] / closes[tr.entry] - 1.0).end();
                   }
               }));
    stage.commit();
    out << "backtest: " << cfg.symbol << " strategy " << csv::number(result.strategy_final) << " vs buy-and-hold "
        << csv::number(result.buy_and_hold_final) << " (" << result.trades.size() << " closed trades)\n";
    return result;
}

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> process_env(const std::string& name) {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
}

inline constexpr const char* kSeedEnv = "TOOL_SEED";

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
               const EnvLookup& env = process_env) {
    CLI::App app{"Hybrid LSTM + gradient-boosted tree forecasting toolkit for OHLCV data", "hybridcast"};
    app.require_subcommand(1);
    std::string config_path;
    std::vector<std::string> overrides;
    std::string model_path;
    std::string dump_windows;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration");
        sub->add_option("--set", overrides, "Override a config value: dotted.key=value (repeatable)");
    };
    auto* analyze = app.add_subcommand("analyze", "Emit the data behind every exploratory figure");
    auto* train = app.add_subcommand("train", "Train the hybrid model and baselines");
    auto* evaluate = app.add_subcommand("evaluate", "Score trained models on the test split");
    auto* backtest = app.add_subcommand("backtest", "SMA crossover versus buy-and-hold");
    for (auto* sub : {analyze, train, evaluate, backtest}) add_common(sub);
    train->add_option("--dump-windows", dump_windows, "Also write the scaled windows as flat CSV");
    evaluate->add_option("--model", model_path, "Model directory (default: model_dir from the config)");

    std::vector<std::string> argv_store{"hybridcast"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        config::RunConfig cfg;
        try {
            std::optional<json> file;
            if (!config_path.empty()) {
                try {
                    file = json::parse(read_file(config_path));
                } catch (const json::exception& e) {
                    throw ConfigError("cannot parse " + config_path + ": " + e.what());
                } catch (const IoError& e) {
                    throw ConfigError(e.what());
                }
            }
            cfg = config::validate(config::merge_sources(file, env(kSeedEnv), overrides));
        } catch (const json::exception& e) {
            throw ConfigError(std::string("invalid configuration: ") + e.what());
        }

        if (analyze->parsed()) {
            cmd_analyze(cfg, out);
        } else if (train->parsed()) {
            cmd_train(cfg, out, dump_windows.empty() ? std::nullopt : std::optional<fs::path>(dump_windows));
        } else if (evaluate->parsed()) {
            cmd_evaluate(cfg, model_path.empty() ? cfg.model_dir : fs::path(model_path), out, err);
        } else if (backtest->parsed()) {
            cmd_backtest(cfg, out);
        }
        return exit_ok;
    } catch (const std::exception& e) {
        err << "hybridcast: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

}  // namespace hybridcast::cli
