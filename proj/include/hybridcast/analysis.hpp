#pragma once

#include <hybridcast/error.hpp>
#include <hybridcast/numkernel.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hybridcast::analysis {

using MaybeVector = std::vector<std::optional<double>>;

namespace detail {

inline double mean(std::span<const double> v) noexcept {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample (n - 1) standard deviation, two-pass.
inline double sample_std(std::span<const double> v) noexcept {
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Pearson correlation, or nullopt when either input has zero variance.
inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b) noexcept {
    const double ma = mean(a);
    const double mb = mean(b);
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if (saa == 0.0 || sbb == 0.0) return std::nullopt;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

}  // namespace detail

/// Simple returns r[t] = (P[t] - P[t-1]) / P[t-1].
inline Vector daily_returns(std::span<const double> closes) {
    if (closes.size() < 2) throw SizingError("daily_returns: need at least 2 prices");
    for (std::size_t t = 0; t < closes.size(); ++t) {
        if (!(closes[t] > 0.0)) throw DomainError("daily_returns: non-positive price at index " + std::to_string(t));
    }
    Vector r(closes.size() - 1);
    for (std::size_t t = 1; t < closes.size(); ++t) r[t - 1] = (closes[t] - closes[t - 1]) / closes[t - 1];
    return r;
}

/// Trailing-window sample standard deviation. Element i of the result covers
/// returns[i .. i + window).
inline Vector rolling_volatility(std::span<const double> returns, std::size_t window = 30) {
    if (window < 2) throw SizingError("rolling_volatility: window must be at least 2");
    if (window > returns.size()) {
        throw SizingError("rolling_volatility: window " + std::to_string(window) + " exceeds series length " +
                          std::to_string(returns.size()));
    }
    Vector out(returns.size() - window + 1);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::sample_std(returns.subspan(i, window));
    return out;
}

/// Pearson correlation matrix of aligned series.
inline Matrix correlation_matrix(const std::vector<Vector>& series, const std::vector<std::string>& names = {}) {
    if (series.size() < 2) throw SizingError("correlation_matrix: need at least 2 series");
    const std::size_t len = series.front().size();
    if (len < 2) throw SizingError("correlation_matrix: series need at least 2 observations");
    auto label = [&](std::size_t i) { return i < names.size() ? names[i] : "series " + std::to_string(i); };
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (series[i].size() != len) throw ShapeError("correlation_matrix: " + label(i) + " has a different length");
        if (detail::sample_std(series[i]) == 0.0) {
            throw DomainError("correlation_matrix: " + label(i) + " has zero variance");
        }
    }
    Matrix c(series.size(), series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        c(i, i) = 1.0;
        for (std::size_t j = i + 1; j < series.size(); ++j) {
            auto r = detail::pearson(series[i], series[j]);
            if (!r) throw DomainError("correlation_matrix: zero variance between " + label(i) + " and " + label(j));
            c(i, j) = c(j, i) = *r;
        }
    }
    return c;
}

/// Trailing-window Pearson correlation. Windows where either side is constant
/// are reported as undefined.
inline MaybeVector rolling_correlation(std::span<const double> a, std::span<const double> b, std::size_t window = 60) {
    if (a.size() != b.size()) throw ShapeError("rolling_correlation: series lengths differ");
    if (window < 3) throw SizingError("rolling_correlation: window must be at least 3");
    if (window > a.size()) {
        throw SizingError("rolling_correlation: window " + std::to_string(window) + " exceeds series length " +
                          std::to_string(a.size()));
    }
    MaybeVector out(a.size() - window + 1);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::pearson(a.subspan(i, window), b.subspan(i, window));
    return out;
}

/// Per-date share of total market capitalisation. Row s of the result is
/// series s, column t is date t.
inline Matrix market_dominance(const std::vector<Vector>& caps) {
    if (caps.empty()) throw SizingError("market_dominance: no series");
    const std::size_t len = caps.front().size();
    for (const auto& c : caps) {
        if (c.size() != len) throw ShapeError("market_dominance: series lengths differ");
        for (double v : c) {
            if (!(v >= 0.0)) throw DomainError("market_dominance: negative market capitalisation");
        }
    }
    Matrix share(caps.size(), len);
    for (std::size_t t = 0; t < len; ++t) {
        double total = 0.0;
        for (const auto& c : caps) total += c[t];
        if (!(total > 0.0)) throw DomainError("market_dominance: total capitalisation is zero at index " +
                                              std::to_string(t));
        for (std::size_t s = 0; s < caps.size(); ++s) share(s, t) = caps[s][t] / total;
    }
    return share;
}

struct DecompositionResult {
    MaybeVector trend;     // undefined within period/2 of either edge
    Vector seasonal;       // repeats with `period`, sums to zero over one cycle
    MaybeVector residual;  // defined wherever trend is
    std::size_t period = 0;

    /// (trend + seasonal) + residual at index t, when defined.
    std::optional<double> reconstruct(std::size_t t) const {
        if (!trend[t] || !residual[t]) return std::nullopt;
        return *trend[t] + seasonal[t] + *residual[t];
    }
};

/// Classical additive decomposition. Trend is a centred moving average of
/// length `period` (the 2 x period average for even periods); seasonal is
/// the per-phase mean of the detrended series, re-centred to sum to zero.
inline DecompositionResult decompose_additive(std::span<const double> series, std::size_t period = 7) {
    if (period < 2) throw SizingError("decompose_additive: period must be at least 2");
    const std::size_t n = series.size();
    if (n < 2 * period) {
        throw SizingError("decompose_additive: need at least " + std::to_string(2 * period) + " observations, got " +
                          std::to_string(n));
    }
    DecompositionResult out;
    out.period = period;
    out.trend.assign(n, std::nullopt);
    out.residual.assign(n, std::nullopt);
    out.seasonal.assign(n, 0.0);

    const std::size_t half = period / 2;
    const bool even = period % 2 == 0;
    for (std::size_t t = half; t + half < n; ++t) {
        double sum = 0.0;
        if (even) {
            sum = 0.5 * series[t - half] + 0.5 * series[t + half];
            for (std::size_t k = t - half + 1; k < t + half; ++k) sum += series[k];
        } else {
            for (std::size_t k = t - half; k <= t + half; ++k) sum += series[k];
        }
        out.trend[t] = sum / static_cast<double>(period);
    }

    Vector phase_sum(period, 0.0);
    std::vector<std::size_t> phase_count(period, 0);
    for (std::size_t t = 0; t < n; ++t) {
        if (!out.trend[t]) continue;
        phase_sum[t % period] += series[t] - *out.trend[t];
        ++phase_count[t % period];
    }
    Vector phase_mean(period);
    for (std::size_t p = 0; p < period; ++p) phase_mean[p] = phase_sum[p] / static_cast<double>(phase_count[p]);
    const double centre = detail::mean(phase_mean);
    for (double& v : phase_mean) v -= centre;
    for (std::size_t t = 0; t < n; ++t) out.seasonal[t] = phase_mean[t % period];

    for (std::size_t t = 0; t < n; ++t) {
        if (!out.trend[t]) continue;
        const double fitted = *out.trend[t] + out.seasonal[t];
        double r = series[t] - fitted;
        // The subtraction can round; step r by ulps until the sum is exact.
        for (int step = 0; step < 16 && fitted + r != series[t]; ++step) {
            r = std::nextafter(r, fitted + r < series[t] ? INFINITY : -INFINITY);
        }
        out.residual[t] = r;
    }
    return out;
}

/// Trailing simple moving average; element i covers series[i .. i + window).
inline Vector sma(std::span<const double> series, std::size_t window) {
    if (window == 0) throw SizingError("sma: window must be at least 1");
    if (window > series.size()) {
        throw SizingError("sma: window " + std::to_string(window) + " exceeds series length " +
                          std::to_string(series.size()));
    }
    Vector out(series.size() - window + 1);
    for (std::size_t i = 0; i < out.size(); ++i) {
        double sum = 0.0;
        for (std::size_t k = i; k < i + window; ++k) sum += series[k];
        out[i] = sum / static_cast<double>(window);
    }
    return out;
}

struct BacktestConfig {
    std::size_t fast = 20;
    std::size_t slow = 50;
    double initial_capital = 10000.0;
    double cost_rate = 0.0;  // fraction of notional charged on every fill
};

struct Trade {
    std::size_t entry = 0;
    std::size_t exit = 0;

    friend bool operator==(const Trade&, const Trade&) = default;
};

struct BacktestResult {
    Vector strategy;
    Vector buy_and_hold;
    std::vector<Trade> trades;                 // closed round trips
    std::optional<std::size_t> open_entry;     // position still held at the last bar
    double strategy_final = 0.0;
    double buy_and_hold_final = 0.0;
};

/// Long-only, all-in SMA crossover. A cross observed at bar t fills at the
/// close of bar t + 1.
inline BacktestResult sma_crossover_backtest(std::span<const double> closes, const BacktestConfig& cfg = {}) {
    if (cfg.fast < 1 || cfg.slow <= cfg.fast) throw SizingError("sma_crossover_backtest: need slow > fast >= 1");
    if (closes.size() <= cfg.slow) {
        throw SizingError("sma_crossover_backtest: need more than " + std::to_string(cfg.slow) + " prices");
    }
    if (!(cfg.initial_capital > 0.0)) throw DomainError("sma_crossover_backtest: initial capital must be positive");
    if (!(cfg.cost_rate >= 0.0 && cfg.cost_rate < 1.0)) {
        throw DomainError("sma_crossover_backtest: cost rate must lie in [0, 1)");
    }
    for (std::size_t t = 0; t < closes.size(); ++t) {
        if (!(closes[t] > 0.0)) {
            throw DomainError("sma_crossover_backtest: non-positive price at index " + std::to_string(t));
        }
    }

    const Vector fast = sma(closes, cfg.fast);
    const Vector slow = sma(closes, cfg.slow);
    auto spread = [&](std::size_t t) { return fast[t + 1 - cfg.fast] - slow[t + 1 - cfg.slow]; };

    const std::size_t n = closes.size();
    BacktestResult res;
    res.strategy.resize(n);
    res.buy_and_hold.resize(n);

    double cash = cfg.initial_capital;
    double units = 0.0;
    bool want_long = false;
    bool pending = false;
    for (std::size_t t = 0; t < n; ++t) {
        if (pending) {
            if (want_long) {
                units = cash * (1.0 - cfg.cost_rate) / closes[t];
                cash = 0.0;
                res.open_entry = t;
            } else {
                cash = units * closes[t] * (1.0 - cfg.cost_rate);
                units = 0.0;
                res.trades.push_back({*res.open_entry, t});
                res.open_entry.reset();
            }
            pending = false;
        }
        res.strategy[t] = units > 0.0 ? units * closes[t] : cash;
        res.buy_and_hold[t] = cfg.initial_capital * closes[t] / closes[0];

        if (t >= cfg.slow && t + 1 < n) {
            const double prev = spread(t - 1);
            const double cur = spread(t);
            const bool holding = res.open_entry.has_value();
            if (prev <= 0.0 && cur > 0.0 && !holding) {
                want_long = true;
                pending = true;
            } else if (prev >= 0.0 && cur < 0.0 && holding) {
                want_long = false;
                pending = true;
            }
        }
    }
    res.strategy[0] = cfg.initial_capital;
    res.buy_and_hold[0] = cfg.initial_capital;
    res.strategy_final = res.strategy.back();
    res.buy_and_hold_final = res.buy_and_hold.back();
    return res;
}

struct DistributionStats {
    double mean = 0.0;
    double std = 0.0;              // sample
    double skewness = 0.0;         // m3 / m2^1.5
    double excess_kurtosis = 0.0;  // m4 / m2^2 - 3
    std::size_t count = 0;
};

inline DistributionStats distribution_stats(std::span<const double> x) {
    if (x.size() < 4) throw SizingError("distribution_stats: need at least 4 observations");
    DistributionStats s;
    s.count = x.size();
    s.mean = detail::mean(x);
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : x) {
        const double d = v - s.mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    if (m2 == 0.0) throw DomainError("distribution_stats: zero variance");
    const auto n = static_cast<double>(x.size());
    s.std = std::sqrt(m2 / (n - 1.0));
    m2 /= n;
    m3 /= n;
    m4 /= n;
    s.skewness = m3 / std::pow(m2, 1.5);
    s.excess_kurtosis = m4 / (m2 * m2) - 3.0;
    return s;
}

struct Histogram {
    Vector edges;                     // bins + 1 boundaries
    std::vector<std::size_t> counts;  // last bin is closed on the right
};

inline Histogram histogram(std::span<const double> x, std::size_t bins) {
    if (bins == 0) throw SizingError("histogram: need at least one bin");
    if (x.empty()) throw SizingError("histogram: no observations");
    auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
    double lo = *lo_it, hi = *hi_it;
    if (lo == hi) {
        lo -= 0.5;
        hi += 0.5;
    }
    Histogram h;
    h.edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
    h.counts.assign(bins, 0);
    for (double v : x) {
        auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
        ++h.counts[std::min(b, bins - 1)];
    }
    return h;
}

}  // namespace hybridcast::analysis
