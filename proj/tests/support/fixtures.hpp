#pragma once

#include <hybridcast/csv.hpp>
#include <hybridcast/market_data.hpp>
#include <hybridcast/numkernel.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace fixtures {

using hybridcast::Matrix;
using hybridcast::Vector;

inline Vector sine_trend(std::size_t n, double level, double slope, double amplitude, double period) {
    Vector v(n);
    for (std::size_t t = 0; t < n; ++t) {
        const double td = static_cast<double>(t);
        v[t] = level + slope * td + amplitude * std::sin(2.0 * std::numbers::pi * td / period);
    }
    return v;
}

inline Vector linear(std::size_t n, double a, double b) {
    Vector v(n);
    for (std::size_t t = 0; t < n; ++t) v[t] = a * static_cast<double>(t) + b;
    return v;
}

inline Vector constant(std::size_t n, double value) { return Vector(n, value); }

/// Daily records from 2017-01-01, opening at the previous close.
inline hybridcast::data::PriceSeries series_from_closes(const std::string& symbol, const Vector& closes) {
    using namespace std::chrono;
    hybridcast::data::PriceSeries s;
    s.symbol = symbol;
    s.name = symbol + " coin";
    const sys_days start = year{2017} / January / 1;
    for (std::size_t t = 0; t < closes.size(); ++t) {
        hybridcast::data::OhlcvRecord r;
        const sys_days day = start + days{static_cast<int>(t)};
        r.date = sys_seconds{day};
        const year_month_day ymd{day};
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                      static_cast<unsigned>(ymd.day()));
        r.date_text = buf;
        r.close = closes[t];
        r.open = t == 0 ? closes[t] : closes[t - 1];
        r.high = std::max(r.open, r.close) + 1.0;
        r.low = std::max(0.0, std::min(r.open, r.close) - 1.0);
        r.volume = 1.0e6 + 10.0 * static_cast<double>(t);
        r.marketcap = r.close * 1.0e4;
        s.records.push_back(r);
    }
    return s;
}

inline std::string to_csv(const hybridcast::data::PriceSeries& s) {
    std::ostringstream os;
    hybridcast::csv::RowWriter w(os);
    w.cell("SNo").cell("Name").cell("Symbol").cell("Date").cell("High").cell("Low").cell("Open").cell("Close");
    w.cell("Volume").cell("Marketcap").end();
    for (std::size_t i = 0; i < s.records.size(); ++i) {
        const auto& r = s.records[i];
        w.cell(i + 1).cell(s.name).cell(s.symbol).cell(r.date_text).cell(r.high).cell(r.low).cell(r.open);
        w.cell(r.close).cell(r.volume).cell(r.marketcap).end();
    }
    return os.str();
}

inline std::string closes_csv(const std::string& symbol, const Vector& closes) {
    return to_csv(series_from_closes(symbol, closes));
}

/// Noiseless series used for the end-to-end checks: a 25-day cycle on a mild
/// upward drift.
inline Vector forecast_series(std::size_t n = 500) { return sine_trend(n, 1000.0, 0.2, 100.0, 25.0); }

/// Deterministic feature matrix with uniform entries in [-1, 1].
inline Matrix random_matrix(std::uint64_t seed, std::size_t rows, std::size_t cols) {
    hybridcast::Rng rng(seed);
    return hybridcast::seeded_uniform(rng, rows, cols, 1.0);
}

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("hybridcast-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

    std::filesystem::path write(const std::string& name, const std::string& content) const {
        const auto p = path_ / name;
        std::ofstream(p, std::ios::binary) << content;
        return p;
    }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace fixtures
