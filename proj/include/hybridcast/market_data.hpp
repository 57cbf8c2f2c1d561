#pragma once

#include <hybridcast/csv.hpp>
#include <hybridcast/error.hpp>
#include <hybridcast/numkernel.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <istream>
#include <iterator>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hybridcast::data {

using Timestamp = std::chrono::sys_seconds;

struct OhlcvRecord {
    Timestamp date;
    std::string date_text;  // as it appeared in the source, reused when writing artifacts
    double open = 0.0;
    double high = 0.0;
    double low = 0.0;
    double close = 0.0;
    double volume = 0.0;
    double marketcap = 0.0;
};

struct PriceSeries {
    std::string symbol;
    std::string name;
    std::vector<OhlcvRecord> records;

    std::size_t size() const noexcept { return records.size(); }
};

enum class PriceField { open, high, low, close, volume, marketcap };

inline std::string_view field_name(PriceField f) noexcept {
    switch (f) {
        case PriceField::open: return "open";
        case PriceField::high: return "high";
        case PriceField::low: return "low";
        case PriceField::close: return "close";
        case PriceField::volume: return "volume";
        case PriceField::marketcap: return "marketcap";
    }
    return "?";
}

inline std::optional<PriceField> parse_field(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    for (auto f : {PriceField::open, PriceField::high, PriceField::low, PriceField::close, PriceField::volume,
                   PriceField::marketcap}) {
        if (lower == field_name(f)) return f;
    }
    return std::nullopt;
}

inline double field_value(const OhlcvRecord& r, PriceField f) noexcept {
    switch (f) {
        case PriceField::open: return r.open;
        case PriceField::high: return r.high;
        case PriceField::low: return r.low;
        case PriceField::close: return r.close;
        case PriceField::volume: return r.volume;
        case PriceField::marketcap: return r.marketcap;
    }
    return 0.0;
}

inline Vector field_values(const PriceSeries& s, PriceField f) {
    Vector out;
    out.reserve(s.size());
    for (const auto& r : s.records) out.push_back(field_value(r, f));
    return out;
}

namespace detail {

inline std::string_view trim(std::string_view s) noexcept {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

/// RFC-4180 field split of one physical line (embedded newlines unsupported).
inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

inline std::optional<int> parse_int(std::string_view s) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace detail

/// Accepts `YYYY-MM-DD`, `YYYY-MM-DD hh:mm:ss`, and `YYYY-MM-DDThh:mm:ss[Z]`
/// (fractional seconds are truncated).
inline std::optional<Timestamp> parse_timestamp(std::string_view text) {
    using namespace std::chrono;
    text = detail::trim(text);
    if (text.size() < 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    auto y = detail::parse_int(text.substr(0, 4));
    auto m = detail::parse_int(text.substr(5, 2));
    auto d = detail::parse_int(text.substr(8, 2));
    if (!y || !m || !d) return std::nullopt;
    const year_month_day ymd{year{*y}, month{static_cast<unsigned>(*m)}, day{static_cast<unsigned>(*d)}};
    if (!ymd.ok()) return std::nullopt;
    Timestamp ts = time_point_cast<seconds>(sys_days{ymd});
    std::string_view rest = text.substr(10);
    if (rest.empty()) return ts;
    if (rest.front() != ' ' && rest.front() != 'T') return std::nullopt;
    rest.remove_prefix(1);
    if (!rest.empty() && rest.back() == 'Z') rest.remove_suffix(1);
    if (auto dot = rest.find('.'); dot != std::string_view::npos) rest = rest.substr(0, dot);
    if (rest.size() != 8 || rest[2] != ':' || rest[5] != ':') return std::nullopt;
    auto hh = detail::parse_int(rest.substr(0, 2));
    auto mm = detail::parse_int(rest.substr(3, 2));
    auto ss = detail::parse_int(rest.substr(6, 2));
    if (!hh || !mm || !ss || *hh > 23 || *mm > 59 || *ss > 60) return std::nullopt;
    return ts + hours{*hh} + minutes{*mm} + seconds{*ss};
}

inline const std::array<std::string_view, 10>& csv_columns() {
    static const std::array<std::string_view, 10> cols{"SNo",  "Name", "Symbol", "Date",   "High",
                                                       "Low",  "Open", "Close",  "Volume", "Marketcap"};
    return cols;
}

/// Reads one symbol's history. The header must name exactly the ten dataset
/// columns (any order, any case). Records come back sorted by date.
inline PriceSeries parse_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!detail::trim(line).empty()) {
            have_header = true;
            break;
        }
    }
    if (!have_header) throw SchemaError("input has no header row");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

    const auto& expected = csv_columns();
    std::array<std::optional<std::size_t>, 10> index{};
    const auto header = detail::split_csv_line(line);
    for (std::size_t i = 0; i < header.size(); ++i) {
        std::string name(detail::trim(header[i]));
        std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
        bool known = false;
        for (std::size_t k = 0; k < expected.size(); ++k) {
            std::string want(expected[k]);
            std::transform(want.begin(), want.end(), want.begin(), [](unsigned char c) { return std::tolower(c); });
            if (name == want) {
                if (index[k]) throw SchemaError("duplicate column '" + std::string(expected[k]) + "'");
                index[k] = i;
                known = true;
            }
        }
        if (!known) throw SchemaError("unexpected column '" + std::string(detail::trim(header[i])) + "'");
    }
    for (std::size_t k = 0; k < expected.size(); ++k) {
        if (!index[k]) throw SchemaError("missing column '" + std::string(expected[k]) + "'");
    }
    enum Col { SNo, Name, Symbol, Date, High, Low, Open, Close, Volume, Marketcap };

    PriceSeries series;
    std::vector<std::size_t> source_line;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size()) {
            throw ValidationError("expected " + std::to_string(header.size()) + " fields, found " +
                                      std::to_string(fields.size()),
                                  line_no);
        }
        auto text = [&](Col c) { return std::string(detail::trim(fields[*index[c]])); };
        auto number = [&](Col c) {
            auto v = detail::parse_double(fields[*index[c]]);
            if (!v) {
                throw ValidationError("cannot parse " + std::string(expected[c]) + " value '" + text(c) + "'",
                                      line_no);
            }
            return *v;
        };

        OhlcvRecord r;
        r.date_text = text(Date);
        auto ts = parse_timestamp(r.date_text);
        if (!ts) throw ValidationError("cannot parse Date value '" + r.date_text + "'", line_no);
        r.date = *ts;
        r.high = number(High);
        r.low = number(Low);
        r.open = number(Open);
        r.close = number(Close);
        r.volume = number(Volume);
        r.marketcap = number(Marketcap);

        if (r.open < 0 || r.high < 0 || r.low < 0 || r.close < 0) {
            throw ValidationError("negative price", line_no);
        }
        if (r.volume < 0) throw ValidationError("negative volume", line_no);
        if (r.marketcap < 0) throw ValidationError("negative marketcap", line_no);
        if (r.low > r.high) throw ValidationError("Low exceeds High", line_no);
        if (r.low > std::min(r.open, r.close) || std::max(r.open, r.close) > r.high) {
            throw ValidationError("Open/Close outside [Low, High]", line_no);
        }

        const std::string symbol = text(Symbol);
        const std::string name = text(Name);
        if (series.records.empty()) {
            series.symbol = symbol;
            series.name = name;
        } else if (symbol != series.symbol) {
            throw ValidationError("symbol '" + symbol + "' differs from '" + series.symbol + "'", line_no);
        }
        series.records.push_back(std::move(r));
        source_line.push_back(line_no);
    }
    if (series.records.empty()) throw ValidationError("no data rows");

    std::vector<std::size_t> order(series.records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return series.records[a].date < series.records[b].date;
    });
    std::vector<OhlcvRecord> sorted;
    sorted.reserve(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i > 0 && series.records[order[i]].date == series.records[order[i - 1]].date) {
            throw ValidationError("duplicate date " + series.records[order[i]].date_text + " (also on line " +
                                      std::to_string(source_line[order[i - 1]]) + ")",
                                  source_line[order[i]]);
        }
        sorted.push_back(std::move(series.records[order[i]]));
    }
    series.records = std::move(sorted);
    return series;
}

/// Restricts every series to the calendar days present in all of them.
/// A series with two records on one day cannot be aligned.
inline std::vector<PriceSeries> align_by_date(const std::vector<PriceSeries>& series) {
    using std::chrono::days;
    using std::chrono::floor;
    if (series.empty()) return {};
    std::vector<std::vector<std::chrono::sys_days>> day_lists;
    for (const auto& s : series) {
        std::vector<std::chrono::sys_days> d;
        for (const auto& r : s.records) {
            const auto day = floor<days>(r.date);
            if (!d.empty() && d.back() == day) {
                throw ValidationError(s.symbol + " has more than one record on " + r.date_text.substr(0, 10));
            }
            d.push_back(day);
        }
        day_lists.push_back(std::move(d));
    }
    std::vector<std::chrono::sys_days> common = day_lists.front();
    for (std::size_t i = 1; i < day_lists.size(); ++i) {
        std::vector<std::chrono::sys_days> next;
        std::set_intersection(common.begin(), common.end(), day_lists[i].begin(), day_lists[i].end(),
                              std::back_inserter(next));
        common = std::move(next);
    }
    std::vector<PriceSeries> out;
    for (std::size_t i = 0; i < series.size(); ++i) {
        PriceSeries s{series[i].symbol, series[i].name, {}};
        std::size_t c = 0;
        for (std::size_t k = 0; k < series[i].records.size() && c < common.size(); ++k) {
            if (day_lists[i][k] == common[c]) {
                s.records.push_back(series[i].records[k]);
                ++c;
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

/// Rebases a price field so the first observation reads 100.
inline Vector rebase_to_100(const PriceSeries& series, PriceField field = PriceField::close) {
    if (series.records.empty()) throw SizingError("rebase_to_100: empty series");
    const double first = field_value(series.records.front(), field);
    if (!(first > 0.0)) throw DomainError("rebase_to_100: first value must be positive (division by zero)");
    Vector out;
    out.reserve(series.size());
    for (const auto& r : series.records) out.push_back(100.0 * field_value(r, field) / first);
    out[0] = 100.0;
    return out;
}

/// T x d feature matrix in the given field order.
inline Matrix feature_matrix(const PriceSeries& series, std::span<const PriceField> fields) {
    Matrix m(series.size(), fields.size());
    for (std::size_t t = 0; t < series.size(); ++t) {
        for (std::size_t j = 0; j < fields.size(); ++j) m(t, j) = field_value(series.records[t], fields[j]);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Min-max scaling

struct ScalerState {
    Vector min;
    Vector max;
    std::vector<std::string> feature_names;

    bool fitted() const noexcept { return !min.empty(); }
    std::size_t features() const noexcept { return min.size(); }

    friend bool operator==(const ScalerState&, const ScalerState&) = default;
};

inline ScalerState minmax_fit(const Matrix& rows, std::vector<std::string> names = {}) {
    if (rows.rows() < 2) throw SizingError("minmax_fit: need at least 2 rows, got " + std::to_string(rows.rows()));
    if (rows.cols() == 0) throw SizingError("minmax_fit: no features");
    if (!names.empty() && names.size() != rows.cols()) throw ShapeError("minmax_fit: name count mismatch");
    ScalerState s;
    s.min.assign(rows.cols(), 0.0);
    s.max.assign(rows.cols(), 0.0);
    for (std::size_t j = 0; j < rows.cols(); ++j) {
        s.min[j] = s.max[j] = rows(0, j);
        for (std::size_t i = 1; i < rows.rows(); ++i) {
            s.min[j] = std::min(s.min[j], rows(i, j));
            s.max[j] = std::max(s.max[j], rows(i, j));
        }
    }
    s.feature_names = std::move(names);
    return s;
}

inline double scale_value(const ScalerState& s, std::size_t feature, double v) noexcept {
    const double range = s.max[feature] - s.min[feature];
    if (range == 0.0) return 0.5;
    return (v - s.min[feature]) / range;
}

inline double invert_value(const ScalerState& s, std::size_t feature, double v) noexcept {
    const double range = s.max[feature] - s.min[feature];
    if (range == 0.0) return s.min[feature];
    return s.min[feature] + v * range;
}

namespace detail {
inline void check_scaler(const ScalerState& s, const Matrix& rows, const char* op) {
    if (!s.fitted()) throw StateError(std::string(op) + ": scaler has not been fitted");
    if (rows.cols() != s.features()) {
        throw ShapeError(std::string(op) + ": scaler has " + std::to_string(s.features()) +
                         " features, rows have " + std::to_string(rows.cols()));
    }
}
}  // namespace detail

inline Matrix minmax_apply(const ScalerState& s, const Matrix& rows) {
    detail::check_scaler(s, rows, "minmax_apply");
    Matrix out = rows;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = scale_value(s, j, rows(i, j));
    return out;
}

inline Matrix minmax_invert(const ScalerState& s, const Matrix& rows) {
    detail::check_scaler(s, rows, "minmax_invert");
    Matrix out = rows;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = invert_value(s, j, rows(i, j));
    return out;
}

// ---------------------------------------------------------------------------
// Windowing

/// N sliding windows over a T x d feature matrix. Sample i holds feature rows
/// [i, i + n_in) and the target column at rows [i + n_in, i + n_in + n_out).
struct WindowedDataset {
    std::vector<Matrix> inputs;         // N matrices, each n_in x d
    Matrix targets;                     // N x n_out
    std::vector<std::size_t> origins;   // source row of each sample's first timestep
    std::vector<std::string> feature_names;
    std::size_t target_column = 0;
    std::size_t n_in = 0;
    std::size_t n_out = 0;
    std::size_t n_features = 0;
    ScalerState scaler;                 // fitted once the dataset has been scaled

    std::size_t size() const noexcept { return inputs.size(); }
    bool scaled() const noexcept { return scaler.fitted(); }
};

inline WindowedDataset make_windows(const Matrix& features, std::size_t target_column, std::size_t n_in,
                                    std::size_t n_out, std::vector<std::string> feature_names = {}) {
    if (n_in == 0 || n_out == 0) throw SizingError("make_windows: n_in and n_out must be at least 1");
    if (target_column >= features.cols()) throw ShapeError("make_windows: target column out of range");
    if (!feature_names.empty() && feature_names.size() != features.cols()) {
        throw ShapeError("make_windows: feature name count mismatch");
    }
    const std::size_t T = features.rows();
    if (T < n_in + n_out) {
        throw SizingError("make_windows: series has " + std::to_string(T) + " rows, need at least " +
                          std::to_string(n_in + n_out));
    }
    const std::size_t N = T - n_in - n_out + 1;
    const std::size_t d = features.cols();

    WindowedDataset ds;
    ds.n_in = n_in;
    ds.n_out = n_out;
    ds.n_features = d;
    ds.target_column = target_column;
    ds.feature_names = std::move(feature_names);
    ds.targets = Matrix(N, n_out);
    ds.inputs.reserve(N);
    ds.origins.reserve(N);
    for (std::size_t i = 0; i < N; ++i) {
        Matrix x(n_in, d);
        for (std::size_t t = 0; t < n_in; ++t) std::copy_n(features.row(i + t).begin(), d, x.row(t).begin());
        ds.inputs.push_back(std::move(x));
        ds.origins.push_back(i);
        for (std::size_t s = 0; s < n_out; ++s) ds.targets(i, s) = features(i + n_in + s, target_column);
    }
    return ds;
}

inline WindowedDataset slice(const WindowedDataset& ds, std::size_t begin, std::size_t end) {
    WindowedDataset out;
    out.n_in = ds.n_in;
    out.n_out = ds.n_out;
    out.n_features = ds.n_features;
    out.target_column = ds.target_column;
    out.feature_names = ds.feature_names;
    out.scaler = ds.scaler;
    out.inputs.assign(ds.inputs.begin() + static_cast<std::ptrdiff_t>(begin),
                      ds.inputs.begin() + static_cast<std::ptrdiff_t>(end));
    out.origins.assign(ds.origins.begin() + static_cast<std::ptrdiff_t>(begin),
                       ds.origins.begin() + static_cast<std::ptrdiff_t>(end));
    out.targets = Matrix(end - begin, ds.n_out);
    for (std::size_t i = begin; i < end; ++i)
        std::copy_n(ds.targets.row(i).begin(), ds.n_out, out.targets.row(i - begin).begin());
    return out;
}

/// Chronological split; the training part gets floor(N * fraction) samples.
inline std::pair<WindowedDataset, WindowedDataset> chrono_split(const WindowedDataset& ds, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw DomainError("chrono_split: train fraction must lie in (0, 1)");
    }
    const std::size_t N = ds.size();
    const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(N) * train_fraction));
    if (n_train == 0 || n_train >= N) {
        throw SizingError("chrono_split: fraction " + std::to_string(train_fraction) + " of " + std::to_string(N) +
                          " samples leaves an empty part");
    }
    return {slice(ds, 0, n_train), slice(ds, n_train, N)};
}

/// Fits min/max on the rows the training windows cover: every input row, plus
/// the target values for the target column.
inline ScalerState fit_window_scaler(const WindowedDataset& train) {
    if (train.size() == 0) throw SizingError("fit_window_scaler: empty training set");
    std::vector<double> rows;
    const auto& first = train.inputs.front();
    rows.insert(rows.end(), first.data().begin(), first.data().end());
    for (std::size_t i = 1; i < train.size(); ++i) {
        const auto last = train.inputs[i].row(train.n_in - 1);
        rows.insert(rows.end(), last.begin(), last.end());
    }
    std::size_t n_rows = rows.size() / train.n_features;
    if (n_rows < 2) {
        // A single one-step window still has its targets to widen the range.
        rows.insert(rows.end(), rows.begin(), rows.end());
        n_rows *= 2;
    }
    ScalerState s = minmax_fit(Matrix(n_rows, train.n_features, std::move(rows)), train.feature_names);
    for (double y : train.targets.data()) {
        s.min[train.target_column] = std::min(s.min[train.target_column], y);
        s.max[train.target_column] = std::max(s.max[train.target_column], y);
    }
    return s;
}

/// Returns a copy of `ds` with inputs and targets mapped through `scaler`.
inline WindowedDataset apply_scaler(const WindowedDataset& ds, const ScalerState& scaler) {
    if (!scaler.fitted()) throw StateError("apply_scaler: scaler has not been fitted");
    if (ds.scaled()) throw StateError("apply_scaler: dataset is already scaled");
    if (scaler.features() != ds.n_features) throw ShapeError("apply_scaler: feature count mismatch");
    WindowedDataset out = ds;
    for (auto& x : out.inputs) x = minmax_apply(scaler, x);
    for (double& y : out.targets.data()) y = scale_value(scaler, ds.target_column, y);
    out.scaler = scaler;
    return out;
}

/// Targets (or predictions) in original units.
inline Matrix invert_targets(const ScalerState& scaler, std::size_t target_column, const Matrix& scaled) {
    if (!scaler.fitted()) throw StateError("invert_targets: scaler has not been fitted");
    if (target_column >= scaler.features()) throw ShapeError("invert_targets: target column out of range");
    Matrix out = scaled;
    for (double& v : out.data()) v = invert_value(scaler, target_column, v);
    return out;
}

/// Flat sample-major dump: one row per sample with columns
/// `sample, x<t>_<feature>..., y<s>...`, where `sample` is the source row of
/// the window's first timestep.
inline void write_windows_csv(std::ostream& os, const WindowedDataset& ds, bool header = true) {
    if (header) {
        os << "sample";
        for (std::size_t t = 0; t < ds.n_in; ++t) {
            for (std::size_t j = 0; j < ds.n_features; ++j) {
                os << ",x" << t << '_' << (ds.feature_names.empty() ? "f" + std::to_string(j) : ds.feature_names[j]);
            }
        }
        for (std::size_t s = 0; s < ds.n_out; ++s) os << ",y" << s;
        os << '\n';
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
        os << ds.origins[i];
        for (double v : ds.inputs[i].data()) os << ',' << csv::number(v);
        for (double v : ds.targets.row(i)) os << ',' << csv::number(v);
        os << '\n';
    }
}

}  // namespace hybridcast::data
