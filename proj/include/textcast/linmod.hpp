#pragma once

#include "textcast/core.hpp"

namespace textcast {

/// LASSO fitted by cyclic coordinate descent on internally standardized
/// features. Objective (standardized space):
///     (1 / 2n) * ||y - b - Z beta||^2 + lambda * ||beta||_1
/// Coefficients are reported on the original feature scale.
struct LassoModel {
    std::vector<double> beta;
    double intercept = 0.0;
    double lambda = 0.0;
    std::vector<double> feature_means;
    std::vector<double> feature_scales; // population std; 0 marks a constant column
    std::string penalty_scaling = "1/(2n) squared loss + lambda * L1 on standardized coefficients";

    std::size_t nonzeros() const
    {
        return static_cast<std::size_t>(std::count_if(beta.begin(), beta.end(), [](double b) { return b != 0.0; }));
    }
};

struct LassoOptions {
    double tol = 1e-7;
    int max_iter = 10'000;
    bool record_objective = false;
};

struct LassoFit {
    LassoModel model;
    bool converged = false; // false signals a convergence warning; the model is still usable
    int sweeps = 0;
    double final_change = 0.0;
    std::vector<double> objective_trace; // after each sweep, when requested
};

namespace detail {

/// Column-major standardized design with its centering parameters.
struct StandardizedDesign {
    std::size_t n = 0, p = 0;
    std::vector<double> z; // p columns of length n
    std::vector<double> means, scales;
    std::vector<double> y_centered;
    double y_mean = 0.0;

    StandardizedDesign(const Matrix& X, std::span<const double> y) : n(X.rows), p(X.cols)
    {
        if (y.size() != n)
            throw ShapeError("lasso: X has " + std::to_string(n) + " rows but y has " + std::to_string(y.size()));
        if (n == 0)
            throw ShapeError("lasso: empty design");
        z.assign(n * p, 0.0);
        means.assign(p, 0.0);
        scales.assign(p, 0.0);
        const double nn = static_cast<double>(n);
        for (std::size_t j = 0; j < p; ++j) {
            double m = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                m += X(i, j);
            m /= nn;
            double ss = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                ss += (X(i, j) - m) * (X(i, j) - m);
            const double sd = std::sqrt(ss / nn);
            means[j] = m;
            if (!(sd > 0.0) || !std::isfinite(sd))
                continue;
            scales[j] = sd;
            for (std::size_t i = 0; i < n; ++i)
                z[j * n + i] = (X(i, j) - m) / sd;
        }
        y_mean = mean(y);
        y_centered.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            y_centered[i] = y[i] - y_mean;
    }

    std::span<const double> col(std::size_t j) const { return {z.data() + j * n, n}; }
};

inline double soft_threshold(double x, double t)
{
    if (x > t)
        return x - t;
    if (x < -t)
        return x + t;
    return 0.0;
}

} // namespace detail

inline double soft_threshold(double x, double t) { return detail::soft_threshold(x, t); }

/// Smallest lambda for which every coefficient is zero.
inline double lasso_lambda_max(const Matrix& X, std::span<const double> y)
{
    const detail::StandardizedDesign d(X, y);
    double lmax = 0.0;
    for (std::size_t j = 0; j < d.p; ++j) {
        if (d.scales[j] == 0.0)
            continue;
        double g = 0.0;
        const auto c = d.col(j);
        for (std::size_t i = 0; i < d.n; ++i)
            g += c[i] * d.y_centered[i];
        lmax = std::max(lmax, std::abs(g / static_cast<double>(d.n)));
    }
    return lmax;
}

/// Logarithmic grid from lambda_max down to ratio * lambda_max.
inline std::vector<double> lasso_lambda_grid(double lambda_max, std::size_t count = 50, double ratio = 1e-4)
{
    std::vector<double> grid(count);
    if (count == 1) {
        grid[0] = lambda_max;
        return grid;
    }
    for (std::size_t k = 0; k < count; ++k)
        grid[k] = lambda_max * std::pow(ratio, static_cast<double>(k) / static_cast<double>(count - 1));
    return grid;
}

namespace detail {

inline LassoFit lasso_descent(const StandardizedDesign& d, double lambda, std::vector<double> beta_std,
                              const LassoOptions& opt)
{
    if (!(lambda >= 0.0))
        throw SpecError("fit_lasso: lambda must be non-negative");
    const std::size_t n = d.n, p = d.p;
    const double nn = static_cast<double>(n);
    beta_std.resize(p, 0.0);
    std::vector<double> r = d.y_centered;
    for (std::size_t j = 0; j < p; ++j)
        if (beta_std[j] != 0.0) {
            const auto c = d.col(j);
            for (std::size_t i = 0; i < n; ++i)
                r[i] -= c[i] * beta_std[j];
        }

    auto objective = [&] {
        double rss = 0.0, l1 = 0.0;
        for (double v : r)
            rss += v * v;
        for (double b : beta_std)
            l1 += std::abs(b);
        return rss / (2.0 * nn) + lambda * l1;
    };

    LassoFit fit;
    for (fit.sweeps = 0; fit.sweeps < opt.max_iter;) {
        double max_change = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            if (d.scales[j] == 0.0)
                continue;
            const auto c = d.col(j);
            double g = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                g += c[i] * r[i];
            const double old = beta_std[j];
            const double updated = soft_threshold(g / nn + old, lambda);
            const double delta = updated - old;
            if (delta != 0.0) {
                for (std::size_t i = 0; i < n; ++i)
                    r[i] -= c[i] * delta;
                beta_std[j] = updated;
                max_change = std::max(max_change, std::abs(delta));
            }
        }
        ++fit.sweeps;
        if (opt.record_objective)
            fit.objective_trace.push_back(objective());
        fit.final_change = max_change;
        if (max_change < opt.tol) {
            fit.converged = true;
            break;
        }
    }

    auto& m = fit.model;
    m.lambda = lambda;
    m.feature_means = d.means;
    m.feature_scales = d.scales;
    m.beta.assign(p, 0.0);
    m.intercept = d.y_mean;
    for (std::size_t j = 0; j < p; ++j) {
        if (d.scales[j] == 0.0 || beta_std[j] == 0.0)
            continue;
        m.beta[j] = beta_std[j] / d.scales[j];
        m.intercept -= m.beta[j] * d.means[j];
    }
    return fit;
}

inline std::vector<double> standardized_beta(const LassoModel& m)
{
    std::vector<double> b(m.beta.size());
    for (std::size_t j = 0; j < b.size(); ++j)
        b[j] = m.beta[j] * m.feature_scales[j];
    return b;
}

} // namespace detail

inline LassoFit fit_lasso(const Matrix& X, std::span<const double> y, double lambda, LassoOptions opt = {})
{
    const detail::StandardizedDesign d(X, y);
    return detail::lasso_descent(d, lambda, {}, opt);
}

/// Fits every lambda in order, warm-starting each from the previous solution.
inline std::vector<LassoFit> fit_lasso_path(const Matrix& X, std::span<const double> y,
                                            std::span<const double> lambdas, LassoOptions opt = {})
{
    const detail::StandardizedDesign d(X, y);
    std::vector<LassoFit> path;
    std::vector<double> warm;
    for (double lambda : lambdas) {
        path.push_back(detail::lasso_descent(d, lambda, warm, opt));
        warm = detail::standardized_beta(path.back().model);
    }
    return path;
}

inline double predict_lasso(const LassoModel& model, std::span<const double> x)
{
    if (x.size() != model.beta.size())
        throw ShapeError("predict_lasso: expected " + std::to_string(model.beta.size()) + " features, got " +
                         std::to_string(x.size()));
    double s = model.intercept;
    for (std::size_t j = 0; j < x.size(); ++j)
        s += model.beta[j] * x[j];
    return s;
}

inline std::vector<double> predict_lasso(const LassoModel& model, const Matrix& X)
{
    std::vector<double> out(X.rows);
    for (std::size_t r = 0; r < X.rows; ++r)
        out[r] = predict_lasso(model, X.row(r));
    return out;
}

/// (word, beta) sorted by |beta| descending, ties by word.
inline std::string serialize_lasso_coefficients(const LassoModel& model, std::span<const std::string> words)
{
    if (words.size() != model.beta.size())
        throw ShapeError("serialize_lasso_coefficients: word list does not match the model");
    std::vector<std::size_t> order(words.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double fa = std::abs(model.beta[a]), fb = std::abs(model.beta[b]);
        return fa != fb ? fa > fb : words[a] < words[b];
    });
    std::string out = "word,beta\n";
    for (auto i : order)
        out += words[i] + "," + format_double(model.beta[i]) + "\n";
    return out;
}

} // namespace textcast
