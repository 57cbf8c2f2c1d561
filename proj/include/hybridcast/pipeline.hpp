#pragma once

#include <hybridcast/error.hpp>
#include <hybridcast/gbtree.hpp>
#include <hybridcast/lstm.hpp>
#include <hybridcast/market_data.hpp>
#include <hybridcast/metrics.hpp>
#include <hybridcast/numkernel.hpp>

#include <cstddef>
#include <functional>
#include <optional>
#include <tuple>
#include <string>
#include <utility>
#include <vector>

namespace hybridcast::pipeline {

/// How the stage-two regressors cover the output horizon.
enum class HorizonMode {
    per_step,     // one booster per horizon step
    horizon_mean  // one booster on the mean of the horizon, broadcast to every step
};

struct HybridConfig {
    lstm::TrainConfig lstm;
    gbt::TreeParams booster;
    std::size_t rounds = 200;
    HorizonMode horizon = HorizonMode::per_step;

    void validate() const {
        lstm.validate();
        booster.validate();
    }
};

/// LSTM feature extractor followed by boosters on its final hidden state.
struct HybridModel {
    lstm::LstmParams lstm;
    std::vector<gbt::Booster> boosters;
    data::ScalerState scaler;
    std::size_t target_column = 0;
    std::size_t n_in = 0;
    std::size_t n_out = 0;
    HorizonMode horizon = HorizonMode::per_step;
};

/// Everything stage one produces: the fitted network (with the head it was
/// trained through) and the training-set latents that stage two consumes.
struct StageOne {
    lstm::TrainResult net;
    Matrix latents;
};

namespace detail {

inline void require_scaled(const data::WindowedDataset& ds, const char* op) {
    if (!ds.scaled()) throw StateError(std::string(op) + ": dataset has not been scaled");
}

inline void require_same_scaler(const data::ScalerState& model, const data::WindowedDataset& ds, const char* op) {
    require_scaled(ds, op);
    if (!(model == ds.scaler)) throw ShapeError(std::string(op) + ": dataset was scaled with a different scaler");
}

/// Column(s) each booster fits: one per step, or the row mean of the horizon.
inline std::vector<Vector> stage_two_targets(const Matrix& y, HorizonMode mode) {
    std::vector<Vector> out;
    if (mode == HorizonMode::per_step) {
        for (std::size_t s = 0; s < y.cols(); ++s) out.push_back(y.col(s));
    } else {
        Vector mean(y.rows(), 0.0);
        for (std::size_t i = 0; i < y.rows(); ++i) {
            for (double v : y.row(i)) mean[i] += v;
            mean[i] /= static_cast<double>(y.cols());
        }
        out.push_back(std::move(mean));
    }
    return out;
}

/// N x n_out scaled predictions from stage-two boosters on a feature matrix.
inline Matrix booster_predictions(const std::vector<gbt::Booster>& boosters, const Matrix& features,
                                  std::size_t n_out, HorizonMode mode) {
    Matrix out(features.rows(), n_out);
    for (std::size_t i = 0; i < features.rows(); ++i) {
        for (std::size_t s = 0; s < n_out; ++s) {
            const auto& b = mode == HorizonMode::per_step ? boosters[s] : boosters.front();
            out(i, s) = b.predict(features.row(i));
        }
    }
    return out;
}

}  // namespace detail

inline StageOne train_stage_one(const data::WindowedDataset& train, const HybridConfig& cfg,
                                const lstm::EpochObserver& observer = {}) {
    detail::require_scaled(train, "train_stage_one");
    StageOne s;
    s.net = lstm::train(train, cfg.lstm, observer);
    s.latents = lstm::extract_latents(s.net.params, train);
    return s;
}

/// Fits the boosters on cached latents; the network is not touched, so the
/// latents stay bit-identical across stage-two retraining.
inline std::vector<gbt::Booster> train_stage_two(const Matrix& latents, const Matrix& targets,
                                                 const HybridConfig& cfg) {
    if (latents.rows() != targets.rows()) throw ShapeError("train_stage_two: latent and target row counts differ");
    std::vector<gbt::Booster> boosters;
    for (const Vector& y : detail::stage_two_targets(targets, cfg.horizon)) {
        boosters.push_back(gbt::train_booster(latents, y, cfg.booster, cfg.rounds));
    }
    return boosters;
}

inline HybridModel assemble_hybrid(const data::WindowedDataset& train, const StageOne& stage_one,
                                   std::vector<gbt::Booster> boosters, const HybridConfig& cfg) {
    HybridModel m;
    m.lstm = stage_one.net.params;
    m.boosters = std::move(boosters);
    m.scaler = train.scaler;
    m.target_column = train.target_column;
    m.n_in = train.n_in;
    m.n_out = train.n_out;
    m.horizon = cfg.horizon;
    return m;
}

inline HybridModel train_hybrid(const data::WindowedDataset& train, const HybridConfig& cfg) {
    cfg.validate();
    if (train.size() == 0) throw SizingError("train_hybrid: empty training set");
    const StageOne s1 = train_stage_one(train, cfg);
    return assemble_hybrid(train, s1, train_stage_two(s1.latents, train.targets, cfg), cfg);
}

struct StepMetrics {
    std::optional<double> mape;
    std::optional<double> minmax_rmse;
};

struct ForecastResult {
    Matrix predictions;  // N x n_out, original price units
    Matrix targets;      // N x n_out, original price units
    std::vector<StepMetrics> per_step;
};

inline ForecastResult make_forecast_result(Matrix predictions, Matrix targets) {
    ForecastResult r{std::move(predictions), std::move(targets), {}};
    if (!r.predictions.all_finite()) throw DomainError("forecast: predictions are not finite");
    for (std::size_t s = 0; s < r.predictions.cols(); ++s) {
        const Vector a = r.targets.col(s);
        const Vector f = r.predictions.col(s);
        StepMetrics m;
        try {
            m.mape = metrics::mape(a, f);
        } catch (const Error&) {
        }
        try {
            m.minmax_rmse = metrics::minmax_rmse(a, f);
        } catch (const Error&) {
        }
        r.per_step.push_back(m);
    }
    return r;
}

inline Matrix predict_hybrid_scaled(const HybridModel& model, const data::WindowedDataset& ds) {
    detail::require_same_scaler(model.scaler, ds, "predict_hybrid");
    if (ds.n_out != model.n_out || ds.n_in != model.n_in) {
        throw ShapeError("predict_hybrid: dataset horizon does not match the model");
    }
    const Matrix z = lstm::extract_latents(model.lstm, ds);
    return detail::booster_predictions(model.boosters, z, model.n_out, model.horizon);
}

inline ForecastResult predict_hybrid(const HybridModel& model, const data::WindowedDataset& ds) {
    Matrix scaled = predict_hybrid_scaled(model, ds);
    return make_forecast_result(data::invert_targets(model.scaler, model.target_column, scaled),
                                data::invert_targets(ds.scaler, ds.target_column, ds.targets));
}

/// Raw windows, their chronological split, and the split scaled with a
/// scaler fitted on the training part only.
struct PreparedData {
    data::WindowedDataset train;
    data::WindowedDataset test;
    data::WindowedDataset train_raw;
    data::WindowedDataset test_raw;
    data::ScalerState scaler;
};

inline PreparedData prepare_datasets(const Matrix& features, std::size_t target_column, std::size_t n_in,
                                     std::size_t n_out, double train_fraction,
                                     std::vector<std::string> feature_names = {}) {
    PreparedData p;
    const auto all = data::make_windows(features, target_column, n_in, n_out, std::move(feature_names));
    std::tie(p.train_raw, p.test_raw) = data::chrono_split(all, train_fraction);
    p.scaler = data::fit_window_scaler(p.train_raw);
    p.train = data::apply_scaler(p.train_raw, p.scaler);
    p.test = data::apply_scaler(p.test_raw, p.scaler);
    return p;
}

// ---------------------------------------------------------------------------
// Baselines

/// The stage-one network used on its own: its linear head is the forecaster.
struct LstmBaseline {
    lstm::LstmParams params;
    lstm::LinearHead head;
    data::ScalerState scaler;
    std::size_t target_column = 0;
};

inline LstmBaseline lstm_baseline_from(const StageOne& s, const data::WindowedDataset& train) {
    return {s.net.params, s.net.head, train.scaler, train.target_column};
}

inline LstmBaseline train_baseline_lstm(const data::WindowedDataset& train, const HybridConfig& cfg) {
    detail::require_scaled(train, "train_baseline_lstm");
    const auto net = lstm::train(train, cfg.lstm);
    return {net.params, net.head, train.scaler, train.target_column};
}

inline ForecastResult predict_baseline(const LstmBaseline& m, const data::WindowedDataset& ds) {
    detail::require_same_scaler(m.scaler, ds, "predict_baseline_lstm");
    Matrix scaled(ds.size(), ds.n_out);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto fwd = lstm::sequence_forward(m.params, ds.inputs[i]);
        const Vector y = m.head.apply(fwd.final_hidden);
        if (y.size() != ds.n_out) throw ShapeError("predict_baseline_lstm: head width does not match horizon");
        std::copy(y.begin(), y.end(), scaled.row(i).begin());
    }
    return make_forecast_result(data::invert_targets(m.scaler, m.target_column, scaled),
                                data::invert_targets(ds.scaler, ds.target_column, ds.targets));
}

/// Each window flattened row-major into n_in x d lag features.
inline Matrix flatten_windows(const data::WindowedDataset& ds) {
    Matrix out(ds.size(), ds.n_in * ds.n_features);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto src = ds.inputs[i].data();
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

/// Boosters on flattened lag windows, no recurrent stage.
struct GbtBaseline {
    std::vector<gbt::Booster> boosters;
    data::ScalerState scaler;
    std::size_t target_column = 0;
    std::size_t n_in = 0;
    std::size_t n_out = 0;
    HorizonMode horizon = HorizonMode::per_step;
};

inline GbtBaseline train_baseline_gbt(const data::WindowedDataset& train, const HybridConfig& cfg) {
    cfg.booster.validate();
    detail::require_scaled(train, "train_baseline_gbt");
    GbtBaseline m;
    m.scaler = train.scaler;
    m.target_column = train.target_column;
    m.n_in = train.n_in;
    m.n_out = train.n_out;
    m.horizon = cfg.horizon;
    m.boosters = train_stage_two(flatten_windows(train), train.targets, cfg);
    return m;
}

inline ForecastResult predict_baseline(const GbtBaseline& m, const data::WindowedDataset& ds) {
    detail::require_same_scaler(m.scaler, ds, "predict_baseline_gbt");
    if (ds.n_in != m.n_in || ds.n_out != m.n_out) throw ShapeError("predict_baseline_gbt: window shape mismatch");
    Matrix scaled = detail::booster_predictions(m.boosters, flatten_windows(ds), m.n_out, m.horizon);
    return make_forecast_result(data::invert_targets(m.scaler, m.target_column, scaled),
                                data::invert_targets(ds.scaler, ds.target_column, ds.targets));
}

// ---------------------------------------------------------------------------
// Evaluation

/// Named model under evaluation; `predict` returns original-unit forecasts.
struct Forecaster {
    std::string name;
    std::function<ForecastResult(const data::WindowedDataset&)> predict;
};

struct EvalRow {
    std::string model;
    double test_mape = 0.0;         // percent
    double test_minmax_rmse = 0.0;  // ratio
};

struct EvalReport {
    std::vector<EvalRow> rows;
};

/// Per-step MAPE and MinMax RMSE in original units, averaged over the horizon.
inline EvalRow score(const std::string& name, const ForecastResult& f, std::optional<double> mape_epsilon = {}) {
    EvalRow row{name, 0.0, 0.0};
    const std::size_t steps = f.predictions.cols();
    for (std::size_t s = 0; s < steps; ++s) {
        const Vector a = f.targets.col(s);
        const Vector p = f.predictions.col(s);
        row.test_mape += metrics::mape(a, p, mape_epsilon);
        row.test_minmax_rmse += metrics::minmax_rmse(a, p);
    }
    row.test_mape /= static_cast<double>(steps);
    row.test_minmax_rmse /= static_cast<double>(steps);
    return row;
}

inline EvalReport evaluate(const std::vector<Forecaster>& models, const data::WindowedDataset& test,
                           std::optional<double> mape_epsilon = {}) {
    if (models.empty()) throw SizingError("evaluate: no models");
    if (test.size() == 0) throw SizingError("evaluate: empty test set");
    EvalReport report;
    for (const auto& m : models) report.rows.push_back(score(m.name, m.predict(test), mape_epsilon));
    return report;
}

inline std::vector<Forecaster> standard_forecasters(const HybridModel& hybrid, const LstmBaseline& lstm_only,
                                                    const GbtBaseline& gbt_lags) {
    return {
        {"hybrid", [&hybrid](const data::WindowedDataset& d) { return predict_hybrid(hybrid, d); }},
        {"lstm-only", [&lstm_only](const data::WindowedDataset& d) { return predict_baseline(lstm_only, d); }},
        {"gbt-lags", [&gbt_lags](const data::WindowedDataset& d) { return predict_baseline(gbt_lags, d); }},
    };
}

}  // namespace hybridcast::pipeline
