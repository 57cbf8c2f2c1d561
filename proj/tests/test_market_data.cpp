#include <hybridcast/market_data.hpp>

#include <gtest/gtest.h>

#include <sstream>

#include "support/fixtures.hpp"

using namespace hybridcast;
using namespace hybridcast::data;

namespace {

const char* kHeader = "SNo,Name,Symbol,Date,High,Low,Open,Close,Volume,Marketcap\n";

PriceSeries parse(const std::string& text) {
    std::istringstream in(text);
    return parse_csv(in);
}

template <class E>
E capture(const std::string& text) {
    try {
        parse(text);
    } catch (const E& e) {
        return e;
    }
    ADD_FAILURE() << "no exception for:\n" << text;
    return E("none");
}

}  // namespace

TEST(ParseCsv, SingleRowMapsFields) {
    const auto s = parse(std::string(kHeader) + "1,Bitcoin,BTC,2017-01-01,1003.08,958.70,963.66,998.33,147775008,16050407460\n");
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s.symbol, "BTC");
    EXPECT_EQ(s.name, "Bitcoin");
    const auto& r = s.records[0];
    EXPECT_EQ(r.close, 998.33);
    EXPECT_EQ(r.high, 1003.08);
    EXPECT_EQ(r.low, 958.70);
    EXPECT_EQ(r.open, 963.66);
    EXPECT_EQ(r.volume, 147775008.0);
    EXPECT_EQ(r.marketcap, 16050407460.0);
    EXPECT_EQ(r.date_text, "2017-01-01");
}

TEST(ParseCsv, DuplicateDateReportsDate) {
    const auto e = capture<ValidationError>(std::string(kHeader) +
                                            "1,B,BTC,2017-01-01,2,1,1.5,1.5,1,1\n"
                                            "2,B,BTC,2017-01-01,2,1,1.5,1.5,1,1\n");
    EXPECT_NE(std::string(e.what()).find("2017-01-01"), std::string::npos) << e.what();
}

TEST(ParseCsv, LowAboveHighCitesLine) {
    const auto e = capture<ValidationError>(std::string(kHeader) +
                                            "1,B,BTC,2017-01-01,2,1,1.5,1.5,1,1\n"
                                            "2,B,BTC,2017-01-02,2,1,1.5,1.5,1,1\n"
                                            "3,B,BTC,2017-01-03,2,1,1.5,1.5,1,1\n"
                                            "4,B,BTC,2017-01-04,1,2,1.5,1.5,1,1\n");
    EXPECT_EQ(e.line(), std::optional<std::size_t>(5));
    EXPECT_NE(std::string(e.what()).find("line 5"), std::string::npos) << e.what();
}

TEST(ParseCsv, MissingColumnNamed) {
    const auto e = capture<SchemaError>("SNo,Name,Symbol,Date,High,Low,Open,Volume,Marketcap\n1,B,BTC,2017-01-01,2,1,1.5,1,1\n");
    EXPECT_NE(std::string(e.what()).find("Close"), std::string::npos) << e.what();
}

TEST(ParseCsv, UnparsableNumberCitesLineAndColumn) {
    const auto e = capture<ValidationError>(std::string(kHeader) + "1,B,BTC,2017-01-01,2,1,abc,1.5,1,1\n");
    EXPECT_EQ(e.line(), std::optional<std::size_t>(2));
    EXPECT_NE(std::string(e.what()).find("Open"), std::string::npos) << e.what();
}

TEST(ParseCsv, HeaderCaseAndOrderInsensitive) {
    const auto s = parse("close,DATE,symbol,name,sno,marketcap,volume,open,low,high\n"
                         "5,2017-01-02 00:00:00,X,Xc,1,10,3,4,3.5,6\n"
                         "4.5,2017-01-01T12:00:00Z,X,Xc,2,10,3,4,3.5,6\n");
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s.records[0].close, 4.5);  // sorted by date
    EXPECT_EQ(s.records[1].high, 6.0);
}

TEST(ParseCsv, QuotedFieldsAndBom) {
    const auto s = parse("\xEF\xBB\xBF" + std::string(kHeader) + "1,\"Bit, coin\",BTC,2017-01-01,2,1,1.5,1.5,1,1\r\n");
    EXPECT_EQ(s.name, "Bit, coin");
}

TEST(ParseCsv, EmptyInputRejected) {
    EXPECT_THROW(parse(""), SchemaError);
    EXPECT_THROW(parse(kHeader), ValidationError);
}

TEST(ParseCsv, InvariantViolations) {
    EXPECT_THROW(parse(std::string(kHeader) + "1,B,BTC,2017-01-01,2,1,3,1.5,1,1\n"), ValidationError);   // open > high
    EXPECT_THROW(parse(std::string(kHeader) + "1,B,BTC,2017-01-01,2,1,1.5,1.5,-1,1\n"), ValidationError);  // volume
    EXPECT_THROW(parse(std::string(kHeader) + "1,B,BTC,2017-01-01,2,1,1.5,1.5,1\n"), ValidationError);     // short row
    EXPECT_THROW(parse(std::string(kHeader) + "1,B,BTC,01/02/2017,2,1,1.5,1.5,1,1\n"), ValidationError);
    EXPECT_THROW(parse(std::string(kHeader) + "1,B,BTC,2017-01-01,2,1,1.5,1.5,1,1\n2,E,ETH,2017-01-02,2,1,1.5,1.5,1,1\n"),
                 ValidationError);
}

TEST(ParseCsv, RoundTripsFixtureWriter) {
    const auto original = fixtures::series_from_closes("SIN", fixtures::forecast_series(60));
    const auto parsed = parse(fixtures::to_csv(original));
    ASSERT_EQ(parsed.size(), original.size());
    for (std::size_t i = 0; i < parsed.size(); ++i) {
        EXPECT_EQ(parsed.records[i].close, original.records[i].close);
        EXPECT_EQ(parsed.records[i].date, original.records[i].date);
    }
}

TEST(AlignByDate, KeepsSharedDaysOnly) {
    auto a = fixtures::series_from_closes("A", fixtures::linear(10, 1, 10));
    auto b = fixtures::series_from_closes("B", fixtures::linear(10, 1, 20));
    b.records.erase(b.records.begin() + 3);
    a.records.erase(a.records.begin());
    const auto aligned = align_by_date({a, b});
    ASSERT_EQ(aligned.size(), 2u);
    EXPECT_EQ(aligned[0].size(), 8u);
    for (std::size_t i = 0; i < aligned[0].size(); ++i) {
        EXPECT_EQ(aligned[0].records[i].date_text, aligned[1].records[i].date_text);
    }
}

TEST(Rebase, Examples) {
    auto rb = [](Vector closes) { return rebase_to_100(fixtures::series_from_closes("X", closes)); };
    EXPECT_EQ(rb({50, 50, 50}), (Vector{100, 100, 100}));
    EXPECT_EQ(rb({50, 100}), (Vector{100, 200}));
    const auto r = rb({200, 150, 300});
    EXPECT_NEAR(r[1], 75.0, 1e-12);
    EXPECT_NEAR(r[2], 150.0, 1e-12);
    EXPECT_EQ(r[0], 100.0);
}

TEST(Rebase, ZeroFirstValueRejected) {
    PriceSeries s = fixtures::series_from_closes("X", {1, 2});
    s.records[0].close = 0.0;
    EXPECT_THROW(rebase_to_100(s), DomainError);
}

TEST(Rebase, InvariantUnderUniformScaling) {
    const Vector closes = fixtures::sine_trend(40, 50, 0.3, 5, 9);
    const auto base = rebase_to_100(fixtures::series_from_closes("X", closes));
    for (double c : {0.25, 2.0, 1000.0}) {
        Vector scaled = closes;
        for (auto& v : scaled) v *= c;
        const auto r = rebase_to_100(fixtures::series_from_closes("X", scaled));
        for (std::size_t t = 0; t < r.size(); ++t) EXPECT_NEAR(r[t], base[t], 1e-12 * base[t]);
    }
}

TEST(MinMax, LinearRamp) {
    const Matrix m{{2}, {4}, {6}};
    const auto s = minmax_fit(m);
    EXPECT_EQ(minmax_apply(s, m), (Matrix{{0}, {0.5}, {1}}));
}

TEST(MinMax, ConstantColumnMapsToHalf) {
    const Matrix m{{7}, {7}, {7}};
    EXPECT_EQ(minmax_apply(minmax_fit(m), m), (Matrix{{0.5}, {0.5}, {0.5}}));
}

TEST(MinMax, RoundTrip) {
    const Matrix m{{2, -3}, {4, 10}, {6, 1.5}};
    const auto s = minmax_fit(m);
    const Matrix back = minmax_invert(s, minmax_apply(s, m));
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) EXPECT_NEAR(back(i, j), m(i, j), 1e-12);
}

TEST(MinMax, RandomRoundTrip) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Matrix m = fixtures::random_matrix(seed, 20, 4);
        for (double& v : m.data()) v = 1000.0 * v + 5.0;
        const auto s = minmax_fit(m);
        const Matrix back = minmax_invert(s, minmax_apply(s, m));
        for (std::size_t k = 0; k < m.size(); ++k) EXPECT_NEAR(back.data()[k], m.data()[k], 1e-12 * 1000.0);
    }
}

TEST(MinMax, ApplyBeforeFitIsStateError) {
    EXPECT_THROW(minmax_apply(ScalerState{}, Matrix{{1}}), StateError);
    EXPECT_THROW(minmax_fit(Matrix{{1}}), SizingError);
}

namespace {
Matrix ramp(std::size_t T, std::size_t d) {
    Matrix m(T, d);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < d; ++j) m(t, j) = static_cast<double>(100 * t + j);
    return m;
}
}  // namespace

TEST(MakeWindows, CountFormulaByEnumeration) {
    for (std::size_t T = 2; T <= 12; ++T) {
        for (std::size_t n = 1; n <= 4; ++n) {
            for (std::size_t o = 1; o <= 3; ++o) {
                if (T < n + o) {
                    EXPECT_THROW(make_windows(ramp(T, 2), 0, n, o), SizingError);
                    continue;
                }
                std::size_t count = 0;
                for (std::size_t start = 0; start + n + o <= T; ++start) ++count;
                EXPECT_EQ(make_windows(ramp(T, 2), 0, n, o).size(), count);
            }
        }
    }
    EXPECT_EQ(make_windows(ramp(10, 2), 0, 3, 2).size(), 6u);
}

TEST(MakeWindows, MinimalCase) {
    const auto ds = make_windows(ramp(4, 1), 0, 3, 1);
    ASSERT_EQ(ds.size(), 1u);
    EXPECT_EQ(ds.inputs[0], (Matrix{{0}, {100}, {200}}));
    EXPECT_EQ(ds.targets(0, 0), 300.0);
}

TEST(MakeWindows, TooShortReportsMinimum) {
    try {
        make_windows(ramp(3, 1), 0, 3, 1);
        FAIL();
    } catch (const SizingError& e) {
        EXPECT_NE(std::string(e.what()).find("at least 4"), std::string::npos) << e.what();
    }
}

TEST(MakeWindows, OverlapConsistency) {
    const Matrix src = ramp(20, 3);
    const auto ds = make_windows(src, 1, 5, 2);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t t = 0; t < ds.n_in; ++t)
            for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(ds.inputs[i](t, j), src(i + t, j));
        for (std::size_t s = 0; s < ds.n_out; ++s) EXPECT_EQ(ds.targets(i, s), src(i + 5 + s, 1));
        if (i + 1 < ds.size()) {
            for (std::size_t t = 1; t < ds.n_in; ++t)
                for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(ds.inputs[i + 1](t - 1, j), ds.inputs[i](t, j));
        }
    }
}

TEST(ChronoSplit, Examples) {
    const auto ten = make_windows(ramp(11, 1), 0, 1, 1);
    ASSERT_EQ(ten.size(), 10u);
    auto [tr, te] = chrono_split(ten, 0.8);
    EXPECT_EQ(tr.size(), 8u);
    EXPECT_EQ(te.size(), 2u);
    EXPECT_LT(tr.origins.back(), te.origins.front());

    const auto two = make_windows(ramp(3, 1), 0, 1, 1);
    auto [a, b] = chrono_split(two, 0.5);
    EXPECT_EQ(a.size(), 1u);
    EXPECT_EQ(b.size(), 1u);

    const auto one = make_windows(ramp(2, 1), 0, 1, 1);
    for (double f : {0.1, 0.5, 0.9}) EXPECT_THROW(chrono_split(one, f), SizingError);
    EXPECT_THROW(chrono_split(ten, 0.0), DomainError);
    EXPECT_THROW(chrono_split(ten, 1.0), DomainError);
}

TEST(WindowScaler, FitsTrainingRowsOnly) {
    Matrix src = ramp(30, 2);
    const auto all = make_windows(src, 0, 4, 1, {"a", "b"});
    auto [train, test] = chrono_split(all, 0.5);
    const auto s = fit_window_scaler(train);
    EXPECT_EQ(s.min[0], 0.0);
    // last training target is source row origins.back() + n_in
    EXPECT_EQ(s.max[0], src(train.origins.back() + 4, 0));
    EXPECT_EQ(s.max[1], src(train.origins.back() + 3, 1));
    const auto scaled = apply_scaler(test, s);
    EXPECT_GT(scaled.targets(scaled.size() - 1, 0), 1.0);  // test data is not squeezed into [0,1]
    EXPECT_THROW(apply_scaler(scaled, s), StateError);
    const Matrix back = invert_targets(s, 0, scaled.targets);
    for (std::size_t i = 0; i < back.rows(); ++i) EXPECT_NEAR(back(i, 0), test.targets(i, 0), 1e-9);
}

TEST(WindowsCsv, FlatLayout) {
    const auto ds = make_windows(ramp(5, 2), 1, 2, 1, {"open", "close"});
    std::ostringstream os;
    write_windows_csv(os, ds);
    std::istringstream in(os.str());
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    EXPECT_EQ(header, "sample,x0_open,x0_close,x1_open,x1_close,y0");
    EXPECT_EQ(row, "0,0,1,100,101,201");
}
