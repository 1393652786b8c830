#pragma once

#include <functional>
#include <numeric>
#include <optional>

#include <boost/math/distributions/normal.hpp>

#include "textcast/forest.hpp"
#include "textcast/series.hpp"

namespace textcast {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct Metrics {
    double mape = 0.0; // percent
    double rmse = 0.0;
    double mae = 0.0;
    double r2 = 0.0;
};

namespace detail {

inline void check_aligned(std::span<const double> y, std::span<const double> yhat, const char* who)
{
    if (y.size() != yhat.size())
        throw ShapeError(std::string(who) + ": actuals and predictions differ in length");
    if (y.empty())
        throw ShapeError(std::string(who) + ": empty input");
}

inline double plain_mape(std::span<const double> y, std::span<const double> yhat)
{
    double s = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t) {
        if (y[t] == 0.0)
            throw ZeroDivisionError("MAPE undefined: actual value is zero at index " + std::to_string(t) +
                                    "; use compute_mape_guarded");
        s += std::abs((y[t] - yhat[t]) / y[t]);
    }
    return 100.0 * s / static_cast<double>(y.size());
}

} // namespace detail

inline double rmse(std::span<const double> y, std::span<const double> yhat)
{
    detail::check_aligned(y, yhat, "rmse");
    double s = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t)
        s += (y[t] - yhat[t]) * (y[t] - yhat[t]);
    return std::sqrt(s / static_cast<double>(y.size()));
}

/// R^2 against the sample mean of y; 0 when y is constant.
inline double r_squared(std::span<const double> y, std::span<const double> yhat)
{
    detail::check_aligned(y, yhat, "r_squared");
    const double ybar = mean(y);
    double sse = 0.0, sst = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t) {
        sse += (y[t] - yhat[t]) * (y[t] - yhat[t]);
        sst += (y[t] - ybar) * (y[t] - ybar);
    }
    return sst > 0.0 ? 1.0 - sse / sst : 0.0;
}

inline Metrics compute_metrics(std::span<const double> y, std::span<const double> yhat)
{
    detail::check_aligned(y, yhat, "compute_metrics");
    Metrics m;
    m.mape = detail::plain_mape(y, yhat);
    double abs_sum = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t)
        abs_sum += std::abs(y[t] - yhat[t]);
    m.mae = abs_sum / static_cast<double>(y.size());
    m.rmse = rmse(y, yhat);
    m.r2 = r_squared(y, yhat);
    return m;
}

/// Empirical q-quantile by the nearest-rank method.
inline double nearest_rank_quantile(std::span<const double> y, double q)
{
    std::vector<double> sorted(y.begin(), y.end());
    std::sort(sorted.begin(), sorted.end());
    auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

/// MAPE restricted to y_t strictly above the empirical q-quantile of y. When
/// every value ties the guard keeps all points.
inline double compute_mape_guarded(std::span<const double> y, std::span<const double> yhat, double quantile = 0.05)
{
    detail::check_aligned(y, yhat, "compute_mape_guarded");
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    if (*lo == *hi)
        return detail::plain_mape(y, yhat);
    const double threshold = nearest_rank_quantile(y, quantile);
    std::vector<double> ys, ps;
    for (std::size_t t = 0; t < y.size(); ++t)
        if (y[t] > threshold) {
            ys.push_back(y[t]);
            ps.push_back(yhat[t]);
        }
    if (ys.empty())
        throw EmptySelectionError("guarded MAPE: no actual value lies above the " + format_double(quantile) +
                                  " quantile");
    return detail::plain_mape(ys, ps);
}

struct MetricOptions {
    std::optional<double> mape_guard_quantile; // e.g. 0.05 for temperature
};

inline Metrics evaluate(std::span<const double> y, std::span<const double> yhat, const MetricOptions& opt = {})
{
    if (!opt.mape_guard_quantile)
        return compute_metrics(y, yhat);
    detail::check_aligned(y, yhat, "evaluate");
    Metrics m;
    m.mape = compute_mape_guarded(y, yhat, *opt.mape_guard_quantile);
    double abs_sum = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t)
        abs_sum += std::abs(y[t] - yhat[t]);
    m.mae = abs_sum / static_cast<double>(y.size());
    m.rmse = rmse(y, yhat);
    m.r2 = r_squared(y, yhat);
    return m;
}

// ---------------------------------------------------------------------------
// Multi-run summaries and aggregation
// ---------------------------------------------------------------------------

struct RunSummary {
    std::vector<Metrics> runs;
    Metrics mean;
    Metrics std; // sample standard deviation; 0 when B = 1
    std::vector<std::vector<double>> predictions;

    std::size_t B() const noexcept { return runs.size(); }
};

inline RunSummary summarize_runs(std::vector<Metrics> runs, std::vector<std::vector<double>> predictions = {})
{
    RunSummary s;
    auto field = [&](double Metrics::*f, double& mean_out, double& std_out) {
        std::vector<double> v;
        for (const auto& r : runs)
            v.push_back(r.*f);
        mean_out = mean(v);
        std_out = sample_std(v);
    };
    field(&Metrics::mape, s.mean.mape, s.std.mape);
    field(&Metrics::rmse, s.mean.rmse, s.std.rmse);
    field(&Metrics::mae, s.mean.mae, s.std.mae);
    field(&Metrics::r2, s.mean.r2, s.std.r2);
    s.runs = std::move(runs);
    s.predictions = std::move(predictions);
    return s;
}

/// B independent fits; run b receives seed base_seed + b.
template <class PredictFn>
RunSummary multi_run(std::size_t B, std::uint64_t base_seed, std::span<const double> actual, PredictFn&& predict,
                     const MetricOptions& opt = {})
{
    if (B < 1)
        throw SpecError("multi_run: B must be at least 1");
    std::vector<std::vector<double>> preds(B);
    parallel_for(B, [&](std::size_t b) { preds[b] = predict(base_seed + b); });
    std::vector<Metrics> runs;
    for (const auto& p : preds)
        runs.push_back(evaluate(actual, p, opt));
    return summarize_runs(std::move(runs), std::move(preds));
}

inline std::vector<double> aggregate(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw ShapeError("aggregate: prediction vectors differ in length");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        out[i] = 0.5 * (a[i] + b[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

template <class T>
std::vector<std::vector<T>> cartesian_product(const std::vector<std::vector<T>>& axes)
{
    std::vector<std::vector<T>> out{{}};
    for (const auto& axis : axes) {
        std::vector<std::vector<T>> next;
        for (const auto& prefix : out)
            for (const auto& v : axis) {
                next.push_back(prefix);
                next.back().push_back(v);
            }
        out = std::move(next);
    }
    return out;
}

struct LeaderboardEntry {
    std::size_t cell = 0;
    std::string label;
    double validation_rmse = std::numeric_limits<double>::quiet_NaN();
    bool failed = false;
    std::string message;
};

struct GridSearchResult {
    std::size_t best = 0;
    std::vector<LeaderboardEntry> leaderboard; // in grid order
    std::vector<std::string> warnings;
};

/// Exhaustive search; `evaluate(cell)` returns the validation RMSE. A cell
/// that throws is recorded as failed and excluded. Ties go to the earlier cell.
template <class Cell, class Eval, class Label>
GridSearchResult grid_search(std::span<const Cell> cells, Eval&& evaluate_cell, Label&& label)
{
    if (cells.empty())
        throw SpecError("grid_search: empty grid");
    GridSearchResult res;
    res.leaderboard.resize(cells.size());
    parallel_for(cells.size(), [&](std::size_t i) {
        auto& e = res.leaderboard[i];
        e.cell = i;
        e.label = label(cells[i]);
        try {
            e.validation_rmse = evaluate_cell(cells[i]);
            if (!std::isfinite(e.validation_rmse))
                throw Error("non-finite validation RMSE");
        } catch (const std::exception& ex) {
            e.failed = true;
            e.message = ex.what();
        }
    });
    std::optional<std::size_t> best;
    for (const auto& e : res.leaderboard) {
        if (e.failed) {
            res.warnings.push_back("grid cell " + std::to_string(e.cell) + " (" + e.label + ") failed: " + e.message);
            continue;
        }
        if (!best || e.validation_rmse < res.leaderboard[*best].validation_rmse)
            best = e.cell;
    }
    if (!best)
        throw Error("grid_search: every cell failed");
    res.best = *best;
    return res;
}

inline std::string serialize_leaderboard(const GridSearchResult& g)
{
    std::string out = "cell,label,validation_rmse,status,best\n";
    for (const auto& e : g.leaderboard)
        out += std::to_string(e.cell) + ",\"" + e.label + "\"," +
               (e.failed ? std::string() : format_double(e.validation_rmse)) + "," + (e.failed ? "failed" : "ok") + "," +
               (e.cell == g.best ? "1" : "0") + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Random-forest OOB feature selection
// ---------------------------------------------------------------------------

struct SelectionOptions {
    std::size_t B = 10;
    std::size_t max_k = 300;
    ForestParams forest{100, -1, 5, 0, true}; // mtry is set from mtry_rule for each subset size
    MtryRule mtry_rule = MtryRule::third;
    std::uint64_t seed = 0;
};

struct FeatureSelectionResult {
    std::vector<std::size_t> ranked;              // feature indices by mean normalized importance
    std::vector<double> importance_mean;          // per feature
    std::vector<double> importance_std;           // per feature, across B repetitions
    std::vector<std::vector<std::size_t>> run_rankings;
    std::vector<std::vector<double>> r2_curve;    // r2_curve[k - 1][b]
    std::vector<double> median_r2;                // per k
    std::size_t v_star = 0;

    std::vector<std::size_t> selected() const { return {ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(v_star)}; }
};

/// Repeated B times with independent seeds: fit a forest on every feature and
/// rank by OOB permutation importance, then refit on the top-k features for
/// k = 1..min(V, max_k) recording the OOB R^2. v_star maximizes the median
/// curve (smallest k on ties).
inline FeatureSelectionResult select_features(const Matrix& X, std::span<const double> y, const SelectionOptions& opt,
                                              std::span<const std::uint64_t> keys = {})
{
    if (opt.B < 1)
        throw SpecError("select_features: B must be at least 1");
    const std::size_t p = X.cols;
    std::vector<std::uint64_t> key(p);
    if (keys.empty())
        std::iota(key.begin(), key.end(), std::uint64_t{0});
    else if (keys.size() != p)
        throw ShapeError("select_features: one key per feature required");
    else
        key.assign(keys.begin(), keys.end());
    const std::size_t K = std::min(p, opt.max_k);

    FeatureSelectionResult res;
    res.run_rankings.resize(opt.B);
    res.r2_curve.assign(K, std::vector<double>(opt.B, 0.0));
    std::vector<std::vector<double>> importances(opt.B);

    for (std::size_t b = 0; b < opt.B; ++b) {
        const auto seed_b = derive_seed(opt.seed, b);
        ForestParams full = opt.forest;
        full.mtry = resolve_mtry(opt.mtry_rule, p);
        const auto forest = fit_forest(X, y, full, seed_b, key);
        importances[b] = oob_importance(forest, X, y, derive_seed(seed_b, 1)).normalized;
        res.run_rankings[b] = rank_by_score(importances[b], key);

        std::vector<std::size_t> cols;
        std::vector<std::uint64_t> sub_keys;
        for (std::size_t k = 1; k <= K; ++k) {
            cols.push_back(res.run_rankings[b][k - 1]);
            sub_keys.push_back(key[cols.back()]);
            ForestParams sub = opt.forest;
            sub.mtry = resolve_mtry(opt.mtry_rule, k);
            const auto Xk = X.select_cols(cols);
            const auto f = fit_forest(Xk, y, sub, derive_seed(seed_b, 2, k), sub_keys);
            res.r2_curve[k - 1][b] = oob_r2(f, Xk, y).r2;
        }
    }

    res.importance_mean.assign(p, 0.0);
    res.importance_std.assign(p, 0.0);
    for (std::size_t f = 0; f < p; ++f) {
        std::vector<double> v;
        for (const auto& imp : importances)
            v.push_back(imp[f]);
        res.importance_mean[f] = mean(v);
        res.importance_std[f] = sample_std(v);
    }
    res.ranked = rank_by_score(res.importance_mean, key);
    res.median_r2.resize(K);
    for (std::size_t k = 0; k < K; ++k)
        res.median_r2[k] = median(res.r2_curve[k]);
    res.v_star = static_cast<std::size_t>(std::max_element(res.median_r2.begin(), res.median_r2.end()) -
                                          res.median_r2.begin()) + 1;
    return res;
}

inline std::string serialize_selection_curve(const FeatureSelectionResult& r)
{
    std::string out = "k,median_oob_r2";
    for (std::size_t b = 0; b < r.run_rankings.size(); ++b)
        out += ",run" + std::to_string(b);
    out += '\n';
    for (std::size_t k = 0; k < r.median_r2.size(); ++k) {
        out += std::to_string(k + 1) + "," + format_double(r.median_r2[k]);
        for (double v : r.r2_curve[k])
            out += "," + format_double(v);
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Numeric benchmark
// ---------------------------------------------------------------------------

/// Four columns: time of year, day of week, temperature, wind speed.
inline Matrix benchmark_features(std::span<const Date> dates, std::span<const double> temperature,
                                 std::span<const double> wind)
{
    if (temperature.size() != dates.size() || wind.size() != dates.size())
        throw SpecError("benchmark_features: every date needs a temperature and a wind value");
    Matrix X(dates.size(), 4);
    for (std::size_t i = 0; i < dates.size(); ++i) {
        const auto c = calendar_features(dates[i]);
        X(i, 0) = c.time_of_year;
        X(i, 1) = c.day_of_week;
        X(i, 2) = temperature[i];
        X(i, 3) = wind[i];
    }
    return X;
}

/// Looks up covariates for `dates`; a missing date raises SpecError.
inline Matrix benchmark_features(std::span<const Date> dates, const TimeSeries& temperature, const TimeSeries& wind)
{
    std::vector<double> t(dates.size()), w(dates.size());
    for (std::size_t i = 0; i < dates.size(); ++i) {
        const auto ti = temperature.index_of(dates[i]);
        const auto wi = wind.index_of(dates[i]);
        if (!ti || !wi)
            throw SpecError("benchmark: missing covariate on " + format_date(dates[i]));
        t[i] = temperature.values()[*ti];
        w[i] = wind.values()[*wi];
    }
    return benchmark_features(dates, t, w);
}

struct BenchmarkResult {
    ForestModel model;
    std::vector<double> predictions;
    Metrics metrics;
};

inline BenchmarkResult benchmark_numeric(const Matrix& X_train, std::span<const double> y_train, const Matrix& X_test,
                                         std::span<const double> y_test, const ForestParams& params,
                                         std::uint64_t seed, const MetricOptions& opt = {})
{
    if (X_train.cols != 4 || X_test.cols != 4)
        throw SpecError("benchmark_numeric: expected the four numeric covariates");
    BenchmarkResult r{fit_forest(X_train, y_train, params, seed), {}, {}};
    r.predictions = predict_forest(r.model, X_test);
    r.metrics = evaluate(y_test, r.predictions, opt);
    return r;
}

// ---------------------------------------------------------------------------
// Residual diagnostics
// ---------------------------------------------------------------------------

struct ResidualDiagnostics {
    double mean = 0.0;
    double std = 0.0;
    double ks_statistic = 0.0;
    double ks_p_value = 1.0;    // asymptotic Kolmogorov distribution
    bool ks_normal_at_5pct = true;
    double lag1_autocorr = 0.0;
    bool degenerate = false;    // constant residuals: normal fit is degenerate
    std::vector<std::pair<double, double>> qq; // (theoretical, empirical)
};

/// Asymptotic Kolmogorov survival function with the usual small-sample
/// correction of the argument.
inline double kolmogorov_p_value(double d, std::size_t n)
{
    const double sn = std::sqrt(static_cast<double>(n));
    const double lambda = (sn + 0.12 + 0.11 / sn) * d;
    if (lambda < 0.2)
        return 1.0;
    double sum = 0.0, sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
        sum += term;
        if (std::abs(term) < 1e-12)
            break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

inline ResidualDiagnostics residual_diagnostics(std::span<const double> y, std::span<const double> yhat)
{
    detail::check_aligned(y, yhat, "residual_diagnostics");
    if (y.size() < 8)
        throw SpecError("residual_diagnostics: need at least 8 points");
    const std::size_t n = y.size();
    std::vector<double> e(n);
    for (std::size_t t = 0; t < n; ++t)
        e[t] = y[t] - yhat[t];
    ResidualDiagnostics d;
    d.mean = mean(e);
    d.std = sample_std(e);

    // Lag-1: Pearson correlation between (e_1..e_{n-1}) and (e_2..e_n).
    {
        const std::span<const double> a(e.data(), n - 1), b(e.data() + 1, n - 1);
        const double ma = mean(a), mb = mean(b);
        double sab = 0.0, saa = 0.0, sbb = 0.0;
        for (std::size_t t = 0; t + 1 < n; ++t) {
            sab += (a[t] - ma) * (b[t] - mb);
            saa += (a[t] - ma) * (a[t] - ma);
            sbb += (b[t] - mb) * (b[t] - mb);
        }
        d.lag1_autocorr = saa > 0.0 && sbb > 0.0 ? sab / std::sqrt(saa * sbb) : 0.0;
    }

    std::vector<double> sorted = e;
    std::sort(sorted.begin(), sorted.end());
    const double nn = static_cast<double>(n);
    if (!(d.std > 0.0)) {
        // Degenerate fit: step CDF at the constant; the empirical CDF matches it.
        d.degenerate = true;
        d.ks_statistic = 0.0;
        d.ks_p_value = 1.0;
        d.ks_normal_at_5pct = false;
        for (std::size_t i = 0; i < n; ++i)
            d.qq.emplace_back(d.mean, sorted[i]);
        return d;
    }
    const boost::math::normal_distribution<double> fitted(d.mean, d.std);
    const boost::math::normal_distribution<double> standard(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double F = boost::math::cdf(fitted, sorted[i]);
        d.ks_statistic = std::max({d.ks_statistic, static_cast<double>(i + 1) / nn - F, F - static_cast<double>(i) / nn});
        d.qq.emplace_back(boost::math::quantile(standard, (static_cast<double>(i) + 0.5) / nn), sorted[i]);
    }
    d.ks_p_value = kolmogorov_p_value(d.ks_statistic, n);
    d.ks_normal_at_5pct = d.ks_p_value >= 0.05;
    return d;
}

} // namespace textcast
