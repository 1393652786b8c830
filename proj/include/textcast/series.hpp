#pragma once

#include <map>
#include <optional>

#include "textcast/core.hpp"

namespace textcast {

enum class Unit { megawatt, celsius, metre_per_second, unitless };

inline std::string to_string(Unit u)
{
    switch (u) {
    case Unit::megawatt: return "MW";
    case Unit::celsius: return "degC";
    case Unit::metre_per_second: return "m/s";
    case Unit::unitless: return "unitless";
    }
    return "unitless";
}

inline Unit parse_unit(std::string_view s)
{
    if (s == "MW" || s == "mw" || s == "megawatt")
        return Unit::megawatt;
    if (s == "degC" || s == "C" || s == "celsius")
        return Unit::celsius;
    if (s == "m/s" || s == "mps" || s == "metre_per_second")
        return Unit::metre_per_second;
    if (s == "unitless" || s.empty())
        return Unit::unitless;
    throw ConfigError("unknown unit '" + std::string(s) + "'");
}

/// Daily series. Dates are strictly increasing; loaders additionally reject gaps.
class TimeSeries {
public:
    TimeSeries() = default;

    TimeSeries(std::vector<Date> dates, std::vector<double> values, Unit unit = Unit::unitless)
        : dates_(std::move(dates)), values_(std::move(values)), unit_(unit)
    {
        if (dates_.size() != values_.size())
            throw ShapeError("TimeSeries: dates and values differ in length");
        for (std::size_t i = 1; i < dates_.size(); ++i)
            if (dates_[i] <= dates_[i - 1])
                throw SpecError("TimeSeries: dates must be strictly increasing (at " + format_date(dates_[i]) + ")");
    }

    const std::vector<Date>& dates() const noexcept { return dates_; }
    const std::vector<double>& values() const noexcept { return values_; }
    Unit unit() const noexcept { return unit_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    TimeSeries slice(std::size_t begin, std::size_t end) const
    {
        return {{dates_.begin() + static_cast<std::ptrdiff_t>(begin), dates_.begin() + static_cast<std::ptrdiff_t>(end)},
                {values_.begin() + static_cast<std::ptrdiff_t>(begin), values_.begin() + static_cast<std::ptrdiff_t>(end)},
                unit_};
    }

    TimeSeries with_values(std::vector<double> values) const { return {dates_, std::move(values), unit_}; }

    std::optional<std::size_t> index_of(Date d) const
    {
        auto it = std::lower_bound(dates_.begin(), dates_.end(), d);
        if (it == dates_.end() || *it != d)
            return std::nullopt;
        return static_cast<std::size_t>(it - dates_.begin());
    }

    friend bool operator==(const TimeSeries&, const TimeSeries&) = default;

private:
    std::vector<Date> dates_;
    std::vector<double> values_;
    Unit unit_ = Unit::unitless;
};

inline TimeSeries concat(const TimeSeries& a, const TimeSeries& b)
{
    auto dates = concat<Date>(a.dates(), b.dates());
    auto values = concat<double>(a.values(), b.values());
    return {std::move(dates), std::move(values), a.unit()};
}

class GapError : public Error {
public:
    explicit GapError(std::vector<Date> gaps) : Error(describe(gaps)), gaps_(std::move(gaps)) {}
    const std::vector<Date>& gaps() const noexcept { return gaps_; }

private:
    static std::string describe(const std::vector<Date>& gaps)
    {
        std::string s = "series has " + std::to_string(gaps.size()) + " missing day(s):";
        for (std::size_t i = 0; i < gaps.size() && i < 10; ++i)
            s += " " + format_date(gaps[i]);
        if (gaps.size() > 10)
            s += " ...";
        return s;
    }
    std::vector<Date> gaps_;
};

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

/// Reads comma-separated text with a header row. Sub-daily rows are averaged
/// into one value per calendar day.
inline TimeSeries parse_series(std::string_view text, std::string_view date_field, std::string_view value_field,
                               Unit unit)
{
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line))
        throw ParseError("series file is empty", 1);
    ++line_no;
    const auto header = split(trim(line), ',');
    std::optional<std::size_t> date_col, value_col;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const auto name = trim(header[i]);
        if (name == date_field)
            date_col = i;
        if (name == value_field)
            value_col = i;
    }
    if (!date_col || !value_col)
        throw ParseError("header lacks column '" + std::string(date_col ? value_field : date_field) + "'", 1);

    std::map<Date, std::pair<double, std::size_t>> daily;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        const auto fields = split(trim(line), ',');
        if (fields.size() <= std::max(*date_col, *value_col))
            throw ParseError("too few fields", line_no);
        try {
            const Date d = parse_date(trim(fields[*date_col]));
            const double v = parse_double(fields[*value_col]);
            if (!std::isfinite(v))
                throw ParseError("non-finite value", 0);
            auto& [sum, count] = daily[d];
            sum += v;
            ++count;
        } catch (const ParseError& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    if (daily.empty())
        throw ParseError("series file has no data rows", line_no);

    std::vector<Date> dates;
    std::vector<double> values;
    std::vector<Date> gaps;
    for (const auto& [d, acc] : daily) {
        if (!dates.empty())
            for (Date g = dates.back() + std::chrono::days{1}; g < d; g += std::chrono::days{1})
                gaps.push_back(g);
        dates.push_back(d);
        values.push_back(acc.first / static_cast<double>(acc.second));
    }
    if (!gaps.empty())
        throw GapError(std::move(gaps));
    return {std::move(dates), std::move(values), unit};
}

inline TimeSeries load_series(const std::string& path, std::string_view date_field = "date",
                              std::string_view value_field = "value", Unit unit = Unit::unitless)
{
    return parse_series(read_file(path), date_field, value_field, unit);
}

inline std::string serialize_series(const TimeSeries& s, std::string_view date_field = "date",
                                    std::string_view value_field = "value")
{
    std::string out;
    out += date_field;
    out += ',';
    out += value_field;
    out += '\n';
    for (std::size_t i = 0; i < s.size(); ++i) {
        out += format_date(s.dates()[i]);
        out += ',';
        out += format_double(s.values()[i]);
        out += '\n';
    }
    return out;
}

inline void save_series(const std::string& path, const TimeSeries& s, std::string_view date_field = "date",
                        std::string_view value_field = "value")
{
    write_file(path, serialize_series(s, date_field, value_field));
}

// ---------------------------------------------------------------------------
// Linear trend
// ---------------------------------------------------------------------------

/// value(t) = slope * t + intercept, with t the day count since `origin`.
struct TrendModel {
    double slope = 0.0;
    double intercept = 0.0;
    Date origin{};

    double at(Date d) const { return slope * static_cast<double>(days_between(origin, d)) + intercept; }
};

inline TrendModel fit_linear_trend(const TimeSeries& series)
{
    const std::size_t n = series.size();
    if (n < 2)
        throw DegenerateError("fit_linear_trend: need at least two distinct dates");
    const Date origin = series.dates().front();
    // Centered normal equations.
    double t_mean = 0.0, y_mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        t_mean += static_cast<double>(days_between(origin, series.dates()[i]));
        y_mean += series.values()[i];
    }
    t_mean /= static_cast<double>(n);
    y_mean /= static_cast<double>(n);
    double stt = 0.0, sty = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dt = static_cast<double>(days_between(origin, series.dates()[i])) - t_mean;
        stt += dt * dt;
        sty += dt * (series.values()[i] - y_mean);
    }
    if (stt == 0.0)
        throw DegenerateError("fit_linear_trend: all dates identical");
    const double slope = sty / stt;
    return {slope, y_mean - slope * t_mean, origin};
}

/// Subtracts the trend. Each residual is nudged by at most a few ulps so that
/// retrend() reproduces the input bit-for-bit whenever such a residual exists
/// (always the case when |trend| and |value| are of comparable magnitude).
inline TimeSeries detrend(const TimeSeries& series, const TrendModel& trend)
{
    std::vector<double> out(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double y = series.values()[i];
        const double m = trend.at(series.dates()[i]);
        double d = y - m;
        for (int step = 0; step < 4 && d + m != y; ++step)
            d = std::nextafter(d, d + m < y ? INFINITY : -INFINITY);
        out[i] = d;
    }
    return series.with_values(std::move(out));
}

inline TimeSeries retrend(const TimeSeries& series, const TrendModel& trend)
{
    std::vector<double> out(series.size());
    for (std::size_t i = 0; i < series.size(); ++i)
        out[i] = series.values()[i] + trend.at(series.dates()[i]);
    return series.with_values(std::move(out));
}

// ---------------------------------------------------------------------------
// Min-max scaling
// ---------------------------------------------------------------------------

struct ScalingParams {
    double min = 0.0;
    double max = 1.0;

    double scale(double v) const { return (v - min) / (max - min); }
    double unscale(double v) const { return v * (max - min) + min; }
};

inline ScalingParams fit_scaling(std::span<const double> values)
{
    if (values.empty())
        throw DegenerateError("scale_minmax: empty series");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (!(*hi > *lo))
        throw DegenerateError("scale_minmax: constant series cannot be scaled");
    return {*lo, *hi};
}

inline TimeSeries apply_scaling(const TimeSeries& s, const ScalingParams& p)
{
    std::vector<double> out(s.size());
    std::transform(s.values().begin(), s.values().end(), out.begin(), [&](double v) { return p.scale(v); });
    return s.with_values(std::move(out));
}

inline std::pair<TimeSeries, ScalingParams> scale_minmax(const TimeSeries& s)
{
    const auto p = fit_scaling(s.values());
    return {apply_scaling(s, p), p};
}

inline TimeSeries unscale(const TimeSeries& s, const ScalingParams& p)
{
    std::vector<double> out(s.size());
    std::transform(s.values().begin(), s.values().end(), out.begin(), [&](double v) { return p.unscale(v); });
    return s.with_values(std::move(out));
}

// ---------------------------------------------------------------------------
// Train / validation / test split
// ---------------------------------------------------------------------------

struct SplitSpec {
    Date train_end;
    Date validation_end;
};

struct SplitSegments {
    TimeSeries train;
    TimeSeries validation;
    TimeSeries test;
};

/// Segment boundaries as indices: train = [0, train_count),
/// validation = [train_count, train_count + validation_count), test = rest.
struct SplitIndices {
    std::size_t train_count = 0;
    std::size_t validation_count = 0;
    std::size_t test_count = 0;
};

inline SplitIndices split_indices(std::span<const Date> dates, const SplitSpec& spec)
{
    if (dates.empty())
        throw SpecError("split: empty series");
    if (!(spec.train_end < spec.validation_end))
        throw SpecError("split: train_end must precede validation_end");
    if (spec.train_end < dates.front() || !(spec.validation_end < dates.back()))
        throw SpecError("split: boundaries " + format_date(spec.train_end) + " / " + format_date(spec.validation_end) +
                        " fall outside " + format_date(dates.front()) + " .. " + format_date(dates.back()));
    SplitIndices out;
    out.train_count = static_cast<std::size_t>(std::upper_bound(dates.begin(), dates.end(), spec.train_end) - dates.begin());
    const auto val_end =
        static_cast<std::size_t>(std::upper_bound(dates.begin(), dates.end(), spec.validation_end) - dates.begin());
    out.validation_count = val_end - out.train_count;
    out.test_count = dates.size() - val_end;
    return out;
}

inline SplitSegments split(const TimeSeries& s, const SplitSpec& spec)
{
    const auto idx = split_indices(s.dates(), spec);
    const auto v_end = idx.train_count + idx.validation_count;
    return {s.slice(0, idx.train_count), s.slice(idx.train_count, v_end), s.slice(v_end, s.size())};
}

// ---------------------------------------------------------------------------
// Calendar features
// ---------------------------------------------------------------------------

struct CalendarFeatures {
    double time_of_year = 0.0; // 0 on Jan 1, 1 on Dec 31
    int day_of_week = 0;       // Monday = 0
};

inline CalendarFeatures calendar_features(Date d)
{
    const int y = year_of(d);
    return {static_cast<double>(day_of_year(d) - 1) / static_cast<double>(days_in_year(y) - 1), weekday_index(d)};
}

inline std::vector<CalendarFeatures> calendar_features(std::span<const Date> dates)
{
    std::vector<CalendarFeatures> out;
    out.reserve(dates.size());
    for (Date d : dates)
        out.push_back(calendar_features(d));
    return out;
}

} // namespace textcast
