#include <gtest/gtest.h>

#include "textcast/linmod.hpp"

using namespace textcast;

namespace {

// Solves A x = b by Gaussian elimination with partial pivoting.
std::vector<double> solve(std::vector<std::vector<double>> A, std::vector<double> b)
{
    const std::size_t n = b.size();
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(A[i][k]) > std::abs(A[piv][k]))
                piv = i;
        std::swap(A[k], A[piv]);
        std::swap(b[k], b[piv]);
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = A[i][k] / A[k][k];
            for (std::size_t j = k; j < n; ++j)
                A[i][j] -= f * A[k][j];
            b[i] -= f * b[k];
        }
    }
    std::vector<double> x(n);
    for (std::size_t k = n; k-- > 0;) {
        double s = b[k];
        for (std::size_t j = k + 1; j < n; ++j)
            s -= A[k][j] * x[j];
        x[k] = s / A[k][k];
    }
    return x;
}

Matrix random_design(Rng& rng, std::size_t n, std::size_t p)
{
    Matrix X(n, p);
    for (auto& v : X.data)
        v = rng.normal();
    return X;
}

} // namespace

TEST(Lasso, LambdaMaxKillsEverything)
{
    Rng rng(1);
    const auto X = random_design(rng, 40, 6);
    std::vector<double> y(40);
    for (std::size_t i = 0; i < 40; ++i)
        y[i] = 3.0 * X(i, 0) - X(i, 2) + rng.normal() + 10.0;
    const double lmax = lasso_lambda_max(X, y);
    const auto fit = fit_lasso(X, y, lmax);
    EXPECT_EQ(fit.model.nonzeros(), 0u);
    EXPECT_NEAR(fit.model.intercept, mean(y), 1e-12);
    EXPECT_GT(fit_lasso(X, y, 0.9 * lmax).model.nonzeros(), 0u);
}

TEST(Lasso, OrthonormalDesignIsSoftThresholdedOls)
{
    // Walsh columns: zero mean, unit population variance, mutually orthogonal.
    const std::size_t n = 8, p = 3;
    Matrix X(n, p);
    for (std::size_t i = 0; i < n; ++i) {
        X(i, 0) = (i & 1) ? 1.0 : -1.0;
        X(i, 1) = (i & 2) ? 1.0 : -1.0;
        X(i, 2) = (i & 4) ? 1.0 : -1.0;
    }
    Rng rng(2);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i)
        y[i] = 2.0 * X(i, 0) - 0.5 * X(i, 1) + 0.1 * X(i, 2) + 0.3 * rng.normal();
    const double lambda = 0.3;
    const auto fit = fit_lasso(X, y, lambda, {1e-12, 100000, false});
    for (std::size_t j = 0; j < p; ++j) {
        double ols = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            ols += X(i, j) * y[i] / static_cast<double>(n);
        EXPECT_NEAR(fit.model.beta[j], soft_threshold(ols, lambda), 1e-6);
    }
}

TEST(Lasso, UnpenalizedMatchesOls)
{
    Rng rng(3);
    const std::size_t n = 30, p = 4;
    const auto X = random_design(rng, n, p);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i)
        y[i] = 1.0 + X(i, 0) - 2.0 * X(i, 1) + 0.5 * X(i, 3) + 0.2 * rng.normal();
    std::vector<std::vector<double>> A(p + 1, std::vector<double>(p + 1, 0.0));
    std::vector<double> b(p + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row{1.0};
        for (std::size_t j = 0; j < p; ++j)
            row.push_back(X(i, j));
        for (std::size_t a = 0; a <= p; ++a) {
            b[a] += row[a] * y[i];
            for (std::size_t c = 0; c <= p; ++c)
                A[a][c] += row[a] * row[c];
        }
    }
    const auto ols = solve(A, b);
    const auto fit = fit_lasso(X, y, 0.0, {1e-13, 100000, false});
    EXPECT_TRUE(fit.converged);
    EXPECT_NEAR(fit.model.intercept, ols[0], 1e-6);
    for (std::size_t j = 0; j < p; ++j)
        EXPECT_NEAR(fit.model.beta[j], ols[j + 1], 1e-6);
}

TEST(Lasso, PredictExamples)
{
    LassoModel m;
    m.beta = {2.0, 0.0};
    m.intercept = 1.0;
    EXPECT_EQ(predict_lasso(m, std::vector<double>{0.0, 0.0}), 1.0);
    EXPECT_EQ(predict_lasso(m, std::vector<double>{3.0, 0.0}), 7.0);
    EXPECT_THROW(predict_lasso(m, std::vector<double>{1.0}), ShapeError);

    Rng rng(5);
    m.beta = {rng.normal(), rng.normal(), rng.normal()};
    const auto X = random_design(rng, 5, 3);
    const auto yhat = predict_lasso(m, X);
    for (std::size_t r = 0; r < 5; ++r) {
        double s = m.intercept;
        for (std::size_t j = 0; j < 3; ++j)
            s += m.beta[j] * X(r, j);
        EXPECT_EQ(yhat[r], s);
    }
}

TEST(Lasso, SparsityMonotoneAlongGrid)
{
    Rng rng(6);
    const auto X = random_design(rng, 80, 20);
    std::vector<double> y(80);
    for (std::size_t i = 0; i < 80; ++i)
        for (std::size_t j = 0; j < 20; ++j)
            y[i] += (j < 5 ? 1.0 / (1.0 + j) : 0.0) * X(i, j) + 0.05 * rng.normal();
    const auto grid = lasso_lambda_grid(lasso_lambda_max(X, y), 30, 1e-3);
    ASSERT_EQ(grid.size(), 30u);
    for (std::size_t k = 1; k < grid.size(); ++k)
        EXPECT_LT(grid[k], grid[k - 1]);
    const auto path = fit_lasso_path(X, y, grid);
    for (std::size_t k = 1; k < path.size(); ++k)
        EXPECT_GE(path[k].model.nonzeros(), path[k - 1].model.nonzeros());
}

TEST(Lasso, ObjectiveDecreasesAndFitIsDeterministic)
{
    Rng rng(8);
    const auto X = random_design(rng, 50, 10);
    std::vector<double> y(50);
    for (std::size_t i = 0; i < 50; ++i)
        y[i] = X(i, 0) + X(i, 1) * X(i, 2) + rng.normal();
    const auto a = fit_lasso(X, y, 0.05, {1e-10, 10000, true});
    for (std::size_t s = 1; s < a.objective_trace.size(); ++s)
        EXPECT_LE(a.objective_trace[s], a.objective_trace[s - 1] + 1e-15);
    const auto b = fit_lasso(X, y, 0.05, {1e-10, 10000, true});
    EXPECT_EQ(a.model.beta, b.model.beta);
    EXPECT_EQ(a.model.intercept, b.model.intercept);
}

TEST(Lasso, ConstantColumnStaysZero)
{
    Rng rng(9);
    auto X = random_design(rng, 20, 3);
    for (std::size_t i = 0; i < 20; ++i)
        X(i, 1) = 4.0;
    std::vector<double> y(20);
    for (std::size_t i = 0; i < 20; ++i)
        y[i] = X(i, 0);
    const auto fit = fit_lasso(X, y, 0.01);
    EXPECT_EQ(fit.model.beta[1], 0.0);
    EXPECT_THROW(fit_lasso(X, std::vector<double>(3), 0.1), ShapeError);
    EXPECT_THROW(fit_lasso(X, y, -1.0), SpecError);
}

TEST(Lasso, CoefficientListingOrder)
{
    LassoModel m;
    m.beta = {0.5, -2.0, 0.5};
    const std::vector<std::string> words{"b", "a", "c"};
    EXPECT_EQ(serialize_lasso_coefficients(m, words), "word,beta\na,-2\nb,0.5\nc,0.5\n");
}
