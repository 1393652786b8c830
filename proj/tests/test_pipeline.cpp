#include <gtest/gtest.h>

#include "textcast/pipeline.hpp"

using namespace textcast;

namespace {

std::vector<double> randn(Rng& rng, std::size_t n, double m = 0.0, double s = 1.0)
{
    std::vector<double> v(n);
    for (auto& x : v)
        x = rng.normal(m, s);
    return v;
}

} // namespace

TEST(Metrics, HandExample)
{
    const std::vector<double> y{100, 200}, p{110, 180};
    const auto m = compute_metrics(y, p);
    EXPECT_DOUBLE_EQ(m.mape, 10.0);
    EXPECT_DOUBLE_EQ(m.mae, 15.0);
    EXPECT_DOUBLE_EQ(m.rmse, std::sqrt(250.0));
    EXPECT_DOUBLE_EQ(m.r2, 0.9);
}

TEST(Metrics, PerfectAndMeanPredictors)
{
    const std::vector<double> y{3, 5, 9, 1};
    const auto perfect = compute_metrics(y, y);
    EXPECT_EQ(perfect.mape, 0.0);
    EXPECT_EQ(perfect.rmse, 0.0);
    EXPECT_EQ(perfect.mae, 0.0);
    EXPECT_EQ(perfect.r2, 1.0);
    EXPECT_EQ(compute_metrics(y, std::vector<double>(4, mean(y))).r2, 0.0);
    EXPECT_LT(compute_metrics(y, std::vector<double>{9, 1, 3, 5}).r2, 0.0);
}

TEST(Metrics, MatchFormulaOracle)
{
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const auto y = randn(rng, 50, 100, 10), p = randn(rng, 50, 100, 10);
        double ape = 0, ae = 0, se = 0, st = 0;
        const double ym = mean(y);
        for (std::size_t t = 0; t < 50; ++t) {
            ape += std::abs((y[t] - p[t]) / y[t]);
            ae += std::abs(y[t] - p[t]);
            se += (y[t] - p[t]) * (y[t] - p[t]);
            st += (y[t] - ym) * (y[t] - ym);
        }
        const auto m = compute_metrics(y, p);
        EXPECT_NEAR(m.mape, 100.0 * ape / 50, 1e-12);
        EXPECT_NEAR(m.mae, ae / 50, 1e-12);
        EXPECT_NEAR(m.rmse, std::sqrt(se / 50), 1e-12);
        EXPECT_NEAR(m.r2, 1.0 - se / st, 1e-12);
    }
}

TEST(Metrics, Errors)
{
    EXPECT_THROW(compute_metrics(std::vector<double>{1, 2}, std::vector<double>{1}), ShapeError);
    EXPECT_THROW(compute_metrics(std::vector<double>{0, 2}, std::vector<double>{1, 2}), ZeroDivisionError);
}

TEST(GuardedMape, ExcludesLowActuals)
{
    std::vector<double> y(40), p(40);
    for (std::size_t i = 1; i < 40; ++i) {
        y[i] = 10.0 + static_cast<double>(i);
        p[i] = 1.1 * y[i];
    }
    // Nearest-rank 5% of 40 points is the 2nd smallest value, 11: both 0 and 11 are dropped.
    EXPECT_NEAR(compute_mape_guarded(y, p), 10.0, 1e-12);
    std::vector<double> tied(40, 10.0), pt(40, 11.0);
    tied[0] = 0.0;
    EXPECT_THROW(compute_mape_guarded(tied, pt), EmptySelectionError);
    const std::vector<double> flat(10, 4.0), pf(10, 5.0);
    EXPECT_DOUBLE_EQ(compute_mape_guarded(flat, pf), 25.0);
}

TEST(GuardedMape, MatchesFilterThenMapeOracle)
{
    Rng rng(2);
    const auto y = randn(rng, 100, 8, 6), p = randn(rng, 100, 8, 6);
    std::vector<double> sorted = y;
    std::ranges::sort(sorted);
    const double q = sorted[4]; // ceil(0.05 * 100) = 5th smallest
    double s = 0;
    int n = 0;
    for (std::size_t t = 0; t < 100; ++t)
        if (y[t] > q) {
            s += std::abs((y[t] - p[t]) / y[t]);
            ++n;
        }
    EXPECT_EQ(n, 95);
    EXPECT_DOUBLE_EQ(compute_mape_guarded(y, p), 100.0 * s / n);
    const auto m = evaluate(y, p, {0.05});
    EXPECT_DOUBLE_EQ(m.mape, 100.0 * s / n);
    EXPECT_DOUBLE_EQ(m.rmse, compute_metrics(y, p).rmse);
}

TEST(MultiRun, DeterministicModelHasZeroStd)
{
    const std::vector<double> y{1, 2, 3, 4};
    const auto s = multi_run(5, 100, y, [](std::uint64_t) { return std::vector<double>{1.5, 2, 2.5, 4}; });
    EXPECT_EQ(s.B(), 5u);
    EXPECT_EQ(s.std.rmse, 0.0);
    EXPECT_EQ(s.std.mape, 0.0);
    const auto one = multi_run(1, 7, y, [](std::uint64_t seed) {
        return std::vector<double>(4, static_cast<double>(seed));
    });
    EXPECT_EQ(one.std.mae, 0.0);
    EXPECT_EQ(one.predictions[0][0], 7.0);
}

TEST(MultiRun, SummaryMatchesDirectFormulas)
{
    const std::vector<double> y{10, 20, 30, 40, 50};
    const auto s = multi_run(4, 3, y, [&](std::uint64_t seed) {
        Rng rng(seed);
        auto p = y;
        for (auto& v : p)
            v += rng.normal();
        return p;
    });
    std::vector<double> r;
    for (std::uint64_t seed = 3; seed < 7; ++seed) {
        Rng rng(seed);
        auto p = y;
        for (auto& v : p)
            v += rng.normal();
        r.push_back(compute_metrics(y, p).rmse);
    }
    const double m = (r[0] + r[1] + r[2] + r[3]) / 4;
    double ss = 0;
    for (double v : r)
        ss += (v - m) * (v - m);
    EXPECT_NEAR(s.mean.rmse, m, 1e-12);
    EXPECT_NEAR(s.std.rmse, std::sqrt(ss / 3), 1e-12);
}

TEST(Aggregate, Examples)
{
    const std::vector<double> a{0, 2}, b{2, 0};
    EXPECT_EQ(aggregate(a, b), (std::vector<double>{1, 1}));
    EXPECT_EQ(aggregate(a, a), a);
    EXPECT_THROW(aggregate(a, std::vector<double>{1}), ShapeError);
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const auto y = randn(rng, 20), p = randn(rng, 20), q = randn(rng, 20);
        EXPECT_LE(rmse(y, aggregate(p, q)), std::max(rmse(y, p), rmse(y, q)) + 1e-12);
    }
}

TEST(GridSearch, PicksLowestAndBreaksTiesEarly)
{
    const std::vector<int> cells{5, 3, 3, 8};
    auto label = [](int c) { return std::to_string(c); };
    const auto g = grid_search(std::span<const int>(cells), [](int c) { return static_cast<double>(c); }, label);
    EXPECT_EQ(g.best, 1u);
    const std::vector<int> single{42};
    EXPECT_EQ(grid_search(std::span<const int>(single), [](int) { return 1.0; }, label).best, 0u);
}

TEST(GridSearch, FailedCellsAreSkipped)
{
    const std::vector<int> cells{1, 2, 3};
    auto eval = [](int c) -> double {
        if (c == 1)
            throw DivergenceError(4);
        return 10.0 - c;
    };
    const auto g = grid_search(std::span<const int>(cells), eval, [](int c) { return std::to_string(c); });
    EXPECT_EQ(g.best, 2u);
    EXPECT_TRUE(g.leaderboard[0].failed);
    EXPECT_EQ(g.warnings.size(), 1u);
    const auto text = serialize_leaderboard(g);
    EXPECT_NE(text.find("0,\"1\",,failed,0"), std::string::npos);
    EXPECT_NE(text.find("2,\"3\",7,ok,1"), std::string::npos);
    EXPECT_THROW(grid_search(std::span<const int>(cells), [](int) -> double { throw Error("x"); },
                             [](int c) { return std::to_string(c); }),
                 Error);
}

TEST(GridSearch, ExtraCapacityOnNoiseLoses)
{
    // Deterministic target; the second cell adds a pure-noise feature to a
    // tree that then overfits it.
    Rng rng(4);
    Matrix X(200, 2), V(100, 2);
    std::vector<double> y(200), yv(100);
    for (std::size_t i = 0; i < 200; ++i) {
        X(i, 0) = rng.uniform();
        X(i, 1) = rng.uniform();
        y[i] = X(i, 0) > 0.5 ? 1.0 : 0.0;
    }
    for (std::size_t i = 0; i < 100; ++i) {
        V(i, 0) = rng.uniform();
        V(i, 1) = rng.uniform();
        yv[i] = V(i, 0) > 0.5 ? 1.0 : 0.0;
    }
    const std::vector<std::vector<std::size_t>> cells{{0}, {0, 1}};
    auto eval = [&](const std::vector<std::size_t>& cols) {
        const auto f = fit_forest(X.select_cols(cols), y, {1, -1, 1, 0, false}, 1);
        return rmse(yv, predict_forest(f, V.select_cols(cols)));
    };
    auto label = [](const std::vector<std::size_t>& c) { return std::to_string(c.size()); };
    const auto a = grid_search(std::span<const std::vector<std::size_t>>(cells), eval, label);
    const auto b = grid_search(std::span<const std::vector<std::size_t>>(cells), eval, label);
    EXPECT_EQ(a.best, 0u);
    EXPECT_EQ(serialize_leaderboard(a), serialize_leaderboard(b));
}

TEST(GridSearch, CartesianProduct)
{
    const auto p = cartesian_product<int>({{1, 2}, {3}, {4, 5}});
    ASSERT_EQ(p.size(), 4u);
    EXPECT_EQ(p[0], (std::vector<int>{1, 3, 4}));
    EXPECT_EQ(p[1], (std::vector<int>{1, 3, 5}));
    EXPECT_EQ(p[3], (std::vector<int>{2, 3, 5}));
}

namespace {

struct Planted {
    Matrix X;
    std::vector<double> y;
};

Planted planted_words(std::uint64_t seed, std::size_t n = 300, std::size_t p = 20)
{
    Rng rng(seed);
    Planted d{Matrix(n, p), std::vector<double>(n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j)
            d.X(i, j) = rng.uniform() < 0.3 ? rng.uniform(0.05, 0.2) : 0.0;
        for (std::size_t j = 0; j < 3; ++j)
            d.y[i] += d.X(i, j) > 0 ? 5.0 : 0.0;
        d.y[i] += 0.3 * rng.normal();
    }
    return d;
}

} // namespace

TEST(FeatureSelection, RecoversPlantedColumns)
{
    const auto d = planted_words(5);
    SelectionOptions opt;
    opt.B = 2;
    opt.max_k = 8;
    opt.forest = {40, -1, 5, 0, true};
    opt.seed = 9;
    const auto r = select_features(d.X, d.y, opt);
    std::vector<std::size_t> top(r.ranked.begin(), r.ranked.begin() + 3);
    std::ranges::sort(top);
    EXPECT_EQ(top, (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_GE(r.v_star, 3u);
    EXPECT_EQ(r.median_r2.size(), 8u);
    EXPECT_EQ(r.r2_curve[0].size(), 2u);
    EXPECT_GT(r.median_r2[2], 0.8);
    EXPECT_EQ(r.selected().size(), r.v_star);
    const auto csv = serialize_selection_curve(r);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "k,median_oob_r2,run0,run1");
}

TEST(FeatureSelection, SingleColumn)
{
    Rng rng(6);
    Matrix X(60, 1);
    std::vector<double> y(60);
    for (std::size_t i = 0; i < 60; ++i) {
        X(i, 0) = rng.uniform();
        y[i] = X(i, 0);
    }
    SelectionOptions opt;
    opt.B = 2;
    opt.forest = {20, -1, 3, 0, true};
    EXPECT_EQ(select_features(X, y, opt).v_star, 1u);
}

TEST(FeatureSelection, PermutationEquivariant)
{
    const auto d = planted_words(7, 150, 8);
    std::vector<std::uint64_t> keys;
    for (std::size_t j = 0; j < 8; ++j)
        keys.push_back(fnv1a("word" + std::to_string(j)));
    const std::vector<std::size_t> perm{5, 2, 7, 0, 1, 6, 3, 4};
    std::vector<std::uint64_t> pkeys;
    for (auto j : perm)
        pkeys.push_back(keys[j]);
    SelectionOptions opt;
    opt.B = 2;
    opt.max_k = 4;
    opt.forest = {20, -1, 5, 0, true};
    opt.seed = 3;
    const auto a = select_features(d.X, d.y, opt, keys);
    const auto b = select_features(d.X.select_cols(perm), d.y, opt, pkeys);
    for (std::size_t k = 0; k < 8; ++k)
        EXPECT_EQ(perm[b.ranked[k]], a.ranked[k]);
    EXPECT_EQ(a.median_r2, b.median_r2);
    EXPECT_EQ(a.v_star, b.v_star);
}

TEST(Benchmark, DeterministicFunctionOfCovariates)
{
    Rng rng(8);
    std::vector<Date> dates;
    std::vector<double> temp, wind, y;
    for (Date d = parse_date("2012-01-01"); d < parse_date("2015-01-01"); d += std::chrono::days{1}) {
        dates.push_back(d);
        temp.push_back(rng.uniform(-5, 25));
        wind.push_back(rng.uniform(0, 10));
        const auto c = calendar_features(d);
        y.push_back(50 - 1.5 * temp.back() + 0.5 * wind.back() + (c.day_of_week >= 5 ? -8.0 : 0.0));
    }
    const auto X = benchmark_features(dates, temp, wind);
    EXPECT_EQ(X.cols, 4u);
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < dates.size(); ++i)
        (i < 800 ? tr : te).push_back(i);
    std::vector<double> ytr, yte;
    for (auto i : tr)
        ytr.push_back(y[i]);
    for (auto i : te)
        yte.push_back(y[i]);
    const auto r = benchmark_numeric(X.select_rows(tr), ytr, X.select_rows(te), yte, {100, -1, 1, 2, true}, 1);
    EXPECT_GE(r.metrics.r2, 0.95);

    const std::vector<double> flat(te.size(), 7.0);
    const auto c = benchmark_numeric(X.select_rows(tr), std::vector<double>(tr.size(), 7.0), X.select_rows(te), flat,
                                     {10, -1, 1, 2, true}, 1);
    EXPECT_EQ(c.metrics.r2, 0.0);
    EXPECT_THROW(benchmark_features(dates, temp, std::vector<double>(3)), SpecError);
}

TEST(Benchmark, MissingCovariateDate)
{
    const std::vector<Date> dates{parse_date("2015-01-01"), parse_date("2015-01-02")};
    const TimeSeries t({parse_date("2015-01-01"), parse_date("2015-01-02")}, {1, 2});
    const TimeSeries w({parse_date("2015-01-01")}, {1});
    EXPECT_THROW(benchmark_features(dates, t, w), SpecError);
    EXPECT_EQ(benchmark_features(dates, t, t)(1, 2), 2.0);
}

TEST(Diagnostics, NormalResidualsPassKs)
{
    int pass = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        const std::vector<double> zero(1000, 0.0);
        const auto e = randn(rng, 1000, 2.0, 3.0);
        const auto d = residual_diagnostics(e, zero);
        pass += d.ks_statistic < 1.36 / std::sqrt(1000.0);
        EXPECT_EQ(d.qq.size(), 1000u);
    }
    EXPECT_GE(pass, 9);
}

TEST(Diagnostics, KsStatisticMatchesOracle)
{
    Rng rng(10);
    const auto e = randn(rng, 30);
    const auto d = residual_diagnostics(e, std::vector<double>(30, 0.0));
    auto sorted = e;
    std::ranges::sort(sorted);
    const double m = mean(e), s = sample_std(e);
    double D = 0;
    for (std::size_t i = 0; i < 30; ++i) {
        const double F = 0.5 * std::erfc(-(sorted[i] - m) / (s * std::sqrt(2.0)));
        D = std::max({D, (i + 1) / 30.0 - F, F - i / 30.0});
    }
    EXPECT_NEAR(d.ks_statistic, D, 1e-12);
    EXPECT_NEAR(kolmogorov_p_value(1.36 / std::sqrt(1e6), 1000000), 0.05, 2e-3);
}

TEST(Diagnostics, ConstantAndAlternatingResiduals)
{
    const std::vector<double> zero(10, 0.0);
    const auto c = residual_diagnostics(std::vector<double>(10, 3.0), zero);
    EXPECT_TRUE(c.degenerate);
    EXPECT_FALSE(c.ks_normal_at_5pct);
    std::vector<double> alt(12);
    for (std::size_t t = 0; t < alt.size(); ++t)
        alt[t] = t % 2 ? -1.0 : 1.0;
    EXPECT_NEAR(residual_diagnostics(alt, std::vector<double>(12, 0.0)).lag1_autocorr, -1.0, 1e-12);
    EXPECT_THROW(residual_diagnostics(std::vector<double>(5), std::vector<double>(5)), SpecError);
}
