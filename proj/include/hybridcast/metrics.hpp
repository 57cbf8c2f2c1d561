#pragma once

#include <hybridcast/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>

namespace hybridcast::metrics {

enum class Units { percent, ratio, price };

struct MetricValue {
    std::string name;
    double value = 0.0;
    Units units = Units::ratio;
};

namespace detail {
inline void check_lengths(std::span<const double> a, std::span<const double> f, const char* op) {
    if (a.size() != f.size()) {
        throw ShapeError(std::string(op) + ": actual has " + std::to_string(a.size()) + " values, forecast has " +
                         std::to_string(f.size()));
    }
    if (a.empty()) throw SizingError(std::string(op) + ": empty input");
}
}  // namespace detail

/// Mean absolute percentage error, in percent. A zero actual is an error
/// unless `epsilon` is given, in which case |A_t| + epsilon is the denominator.
inline double mape(std::span<const double> actual, std::span<const double> forecast,
                   std::optional<double> epsilon = std::nullopt) {
    detail::check_lengths(actual, forecast, "mape");
    double sum = 0.0;
    for (std::size_t t = 0; t < actual.size(); ++t) {
        const double err = std::abs(actual[t] - forecast[t]);
        if (epsilon) {
            sum += err / (std::abs(actual[t]) + *epsilon);
        } else {
            if (actual[t] == 0.0) throw DomainError("mape: actual value is zero at index " + std::to_string(t));
            sum += err / std::abs(actual[t]);
        }
    }
    return 100.0 * sum / static_cast<double>(actual.size());
}

inline double rmse(std::span<const double> actual, std::span<const double> forecast) {
    detail::check_lengths(actual, forecast, "rmse");
    double sum = 0.0;
    for (std::size_t t = 0; t < actual.size(); ++t) {
        const double e = actual[t] - forecast[t];
        sum += e * e;
    }
    return std::sqrt(sum / static_cast<double>(actual.size()));
}

inline double mae(std::span<const double> actual, std::span<const double> forecast) {
    detail::check_lengths(actual, forecast, "mae");
    double sum = 0.0;
    for (std::size_t t = 0; t < actual.size(); ++t) sum += std::abs(actual[t] - forecast[t]);
    return sum / static_cast<double>(actual.size());
}

/// RMSE divided by the range of the actual values.
inline double minmax_rmse(std::span<const double> actual, std::span<const double> forecast) {
    detail::check_lengths(actual, forecast, "minmax_rmse");
    if (actual.size() < 2) throw SizingError("minmax_rmse: need at least 2 observations");
    const auto [lo, hi] = std::minmax_element(actual.begin(), actual.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) throw DomainError("minmax_rmse: actual values have zero range");
    return rmse(actual, forecast) / range;
}

}  // namespace hybridcast::metrics
