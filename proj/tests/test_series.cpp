#include <gtest/gtest.h>

#include "textcast/series.hpp"

using namespace textcast;

namespace {

TimeSeries daily(const std::string& start, const std::vector<double>& values)
{
    std::vector<Date> dates;
    Date d = parse_date(start);
    for (std::size_t i = 0; i < values.size(); ++i, d += std::chrono::days{1})
        dates.push_back(d);
    return {dates, values, Unit::megawatt};
}

TimeSeries range_series(const std::string& first, const std::string& last)
{
    std::vector<Date> dates;
    std::vector<double> values;
    for (Date d = parse_date(first); d <= parse_date(last); d += std::chrono::days{1}) {
        dates.push_back(d);
        values.push_back(1.0);
    }
    return {dates, values};
}

} // namespace

TEST(LoadSeries, HalfHourlyRowsAverageToOneDay)
{
    std::string text = "time,load\n";
    for (int i = 0; i < 48; ++i) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "2015-03-01T%02d:%02d:00,100\n", i / 2, (i % 2) * 30);
        text += buf;
    }
    const auto s = parse_series(text, "time", "load", Unit::megawatt);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s.values()[0], 100.0);
    EXPECT_EQ(s.unit(), Unit::megawatt);
}

TEST(LoadSeries, GapIsReported)
{
    try {
        parse_series("date,value\n2015-01-01,1\n2015-01-03,2\n", "date", "value", Unit::unitless);
        FAIL() << "expected GapError";
    } catch (const GapError& e) {
        ASSERT_EQ(e.gaps().size(), 1u);
        EXPECT_EQ(format_date(e.gaps()[0]), "2015-01-02");
    }
}

TEST(LoadSeries, ThreeHourlyMean)
{
    std::string text = "date,t\n";
    std::vector<double> vals;
    for (int h = 0; h < 24; h += 3) {
        text += "2015-01-01 " + std::to_string(h) + ":00," + std::to_string(h) + "\n";
        vals.push_back(h);
    }
    const auto s = parse_series(text, "date", "t", Unit::celsius);
    EXPECT_DOUBLE_EQ(s.values()[0], mean(vals));
    EXPECT_DOUBLE_EQ(s.values()[0], 10.5);
}

TEST(LoadSeries, BadRowCarriesLineNumber)
{
    try {
        parse_series("date,value\n2015-01-01,1\n2015-01-02,abc\n", "date", "value", Unit::unitless);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    EXPECT_THROW(parse_series("date,other\n", "date", "value", Unit::unitless), ParseError);
}

TEST(LoadSeries, SerializeRoundTrip)
{
    const auto s = daily("2016-02-27", {1.5, -2.25, 1.0 / 3.0});
    EXPECT_EQ(parse_series(serialize_series(s), "date", "value", Unit::megawatt), s);
}

TEST(Trend, ConstantAndExactLine)
{
    const auto c = fit_linear_trend(daily("2015-01-01", {5, 5, 5, 5}));
    EXPECT_NEAR(c.slope, 0.0, 1e-15);
    EXPECT_NEAR(c.intercept, 5.0, 1e-15);
    std::vector<double> v;
    for (int t = 0; t < 20; ++t)
        v.push_back(2.0 * t + 1.0);
    const auto l = fit_linear_trend(daily("2015-01-01", v));
    EXPECT_NEAR(l.slope, 2.0, 1e-12);
    EXPECT_NEAR(l.intercept, 1.0, 1e-12);
    EXPECT_THROW(fit_linear_trend(daily("2015-01-01", {1})), DegenerateError);
}

TEST(Trend, NoisyLineMatchesNormalEquations)
{
    Rng rng(7);
    std::vector<double> v;
    const int n = 300;
    for (int t = 0; t < n; ++t)
        v.push_back(2.0 * t + 1.0 + rng.normal());
    // Oracle: solve the uncentered 2x2 system by Cramer's rule.
    long double st = 0, stt = 0, sy = 0, sty = 0;
    for (int t = 0; t < n; ++t) {
        st += t;
        stt += static_cast<long double>(t) * t;
        sy += v[t];
        sty += t * static_cast<long double>(v[t]);
    }
    const long double det = n * stt - st * st;
    const double a = static_cast<double>((n * sty - st * sy) / det);
    const double b = static_cast<double>((stt * sy - st * sty) / det);
    const auto s = daily("2012-01-01", v);
    const auto m = fit_linear_trend(s);
    EXPECT_NEAR(m.slope, a, 1e-10);
    EXPECT_NEAR(m.intercept, b, 1e-10);

    const auto r = detrend(s, m);
    double sum = 0, tsum = 0, scale = 0;
    for (int t = 0; t < n; ++t) {
        sum += r.values()[t];
        tsum += t * r.values()[t];
        scale += t * std::abs(v[t]);
    }
    EXPECT_NEAR(sum / n, 0.0, 1e-9);
    EXPECT_NEAR(tsum / scale, 0.0, 1e-8);
}

TEST(Trend, DetrendRetrendIsExact)
{
    std::vector<double> line;
    for (int t = 0; t < 10; ++t)
        line.push_back(2.0 * t + 1.0);
    const TrendModel m{2.0, 1.0, parse_date("2015-01-01")};
    const auto flat = detrend(daily("2015-01-01", line), m);
    for (double r : flat.values())
        EXPECT_EQ(r, 0.0);

    Rng rng(3);
    std::vector<double> v;
    for (int t = 0; t < 1000; ++t)
        v.push_back(50000.0 - 3.7 * t + 800.0 * rng.normal());
    const auto s = daily("2010-06-01", v);
    const auto fit = fit_linear_trend(s.slice(0, 600));
    EXPECT_EQ(retrend(detrend(s, fit), fit), s);
}

TEST(Scaling, MinMaxExamples)
{
    const auto [scaled, p] = scale_minmax(daily("2015-01-01", {10, 20, 30}));
    EXPECT_EQ(scaled.values(), (std::vector<double>{0.0, 0.5, 1.0}));
    EXPECT_EQ(p.min, 10.0);
    EXPECT_EQ(p.max, 30.0);
    const auto back = unscale(daily("2015-01-01", {0.0, 0.5, 1.0}), ScalingParams{10, 30});
    EXPECT_EQ(back.values(), (std::vector<double>{10, 20, 30}));
    EXPECT_DOUBLE_EQ((ScalingParams{10, 30}.scale(35)), 1.25);
    EXPECT_THROW(scale_minmax(daily("2015-01-01", {4, 4, 4})), DegenerateError);
}

TEST(Scaling, RoundTripWithinTolerance)
{
    Rng rng(1);
    std::vector<double> v;
    for (int i = 0; i < 200; ++i)
        v.push_back(rng.uniform(-500, 900));
    const auto s = daily("2015-01-01", v);
    const auto [scaled, p] = scale_minmax(s);
    const auto back = unscale(scaled, p);
    for (std::size_t i = 0; i < v.size(); ++i)
        EXPECT_NEAR(back.values()[i], v[i], 1e-12 * 900);
}

TEST(Split, FranceAndUkSegmentLengths)
{
    const SplitSpec spec{parse_date("2013-12-31"), parse_date("2015-12-31")};
    const auto fr = split(range_series("2007-01-01", "2018-08-31"), spec);
    EXPECT_EQ(fr.train.size(), 2557u);
    EXPECT_EQ(fr.validation.size(), 730u);
    EXPECT_EQ(fr.test.size(), 974u);
    const auto uk = split(range_series("2006-01-01", "2018-12-31"), spec);
    EXPECT_EQ(uk.train.size(), 2922u);
    EXPECT_EQ(uk.validation.size(), 730u);
    EXPECT_EQ(uk.test.size(), 1096u);
}

TEST(Split, PartitionsTheSeries)
{
    const auto s = daily("2015-01-01", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
    const auto parts = split(s, {parse_date("2015-01-05"), parse_date("2015-01-07")});
    EXPECT_EQ(parts.train.size(), 5u);
    EXPECT_EQ(parts.validation.size(), 2u);
    EXPECT_EQ(parts.test.size(), 3u);
    EXPECT_EQ(concat(concat(parts.train, parts.validation), parts.test), s);
    EXPECT_THROW(split(s, {parse_date("2015-01-05"), parse_date("2015-01-10")}), SpecError);
    EXPECT_THROW(split(s, {parse_date("2014-12-01"), parse_date("2015-01-07")}), SpecError);
    EXPECT_THROW(split(s, {parse_date("2015-01-07"), parse_date("2015-01-05")}), SpecError);
}

TEST(Calendar, TimeOfYearEndpoints)
{
    EXPECT_EQ(calendar_features(parse_date("2015-01-01")).time_of_year, 0.0);
    EXPECT_EQ(calendar_features(parse_date("2015-12-31")).time_of_year, 1.0);
    EXPECT_EQ(calendar_features(parse_date("2016-12-31")).time_of_year, 1.0);
    EXPECT_DOUBLE_EQ(calendar_features(parse_date("2015-07-02")).time_of_year, 182.0 / 364.0);
    EXPECT_EQ(calendar_features(parse_date("2024-01-01")).day_of_week, 0);
}

TEST(Calendar, MonotoneWithinYearAndResets)
{
    std::vector<Date> dates;
    for (Date d = parse_date("2015-01-01"); d <= parse_date("2017-12-31"); d += std::chrono::days{1})
        dates.push_back(d);
    const auto f = calendar_features(dates);
    for (std::size_t i = 1; i < f.size(); ++i) {
        if (year_of(dates[i]) == year_of(dates[i - 1]))
            EXPECT_GT(f[i].time_of_year, f[i - 1].time_of_year);
        else
            EXPECT_EQ(f[i].time_of_year, 0.0);
        EXPECT_EQ(f[i].day_of_week, (f[i - 1].day_of_week + 1) % 7);
    }
}
