#pragma once

#include <limits>
#include <numeric>

#include "textcast/core.hpp"

namespace textcast {

struct ForestParams {
    std::size_t n_trees = 100;
    int max_depth = -1;      ///< -1 = unbounded; 0 = a single leaf
    std::size_t min_leaf = 1;
    std::size_t mtry = 0;    ///< features considered per split; 0 = all
    bool bootstrap = true;

    friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

enum class MtryRule { sqrt, third, all };

inline std::size_t resolve_mtry(MtryRule rule, std::size_t n_features)
{
    switch (rule) {
    case MtryRule::sqrt: return std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(n_features))));
    case MtryRule::third: return std::max<std::size_t>(1, n_features / 3);
    case MtryRule::all: return n_features;
    }
    return n_features;
}

/// Flat CART regression tree. Internal nodes send x[feature] <= threshold left.
struct Tree {
    struct Node {
        int feature = -1; // -1 marks a leaf
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        double value = 0.0; // leaf: mean training target
    };
    std::vector<Node> nodes;

    template <class Feature>
    double predict_with(Feature&& feature) const
    {
        int k = 0;
        while (nodes[static_cast<std::size_t>(k)].feature >= 0) {
            const auto& n = nodes[static_cast<std::size_t>(k)];
            k = feature(static_cast<std::size_t>(n.feature)) <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(k)].value;
    }

    double predict(std::span<const double> x) const
    {
        return predict_with([&](std::size_t j) { return x[j]; });
    }

    std::vector<bool> used_features(std::size_t n_features) const
    {
        std::vector<bool> used(n_features, false);
        for (const auto& n : nodes)
            if (n.feature >= 0)
                used[static_cast<std::size_t>(n.feature)] = true;
        return used;
    }
};

struct ForestModel {
    std::vector<Tree> trees;
    std::vector<std::vector<std::uint16_t>> in_bag; // per tree, per sample: bootstrap multiplicity
    ForestParams params;
    std::uint64_t seed = 0;
    std::size_t n_features = 0;
    std::size_t n_samples = 0;
    std::vector<std::uint64_t> feature_keys; // identity of each column for seeding

    bool is_oob(std::size_t tree, std::size_t sample) const { return in_bag[tree][sample] == 0; }
};

namespace detail {

class TreeBuilder {
public:
    TreeBuilder(const std::vector<double>& cols, std::span<const double> y, std::size_t n, std::size_t p,
                const ForestParams& params, std::span<const std::uint64_t> keys, Rng& rng)
        : cols_(cols), y_(y), n_(n), p_(p), params_(params), keys_(keys), rng_(rng)
    {
        order_.resize(p_);
        priority_.resize(p_);
    }

    Tree build(std::vector<std::uint32_t> samples)
    {
        samples_ = std::move(samples);
        tree_.nodes.clear();
        grow(0, samples_.size(), 0);
        return std::move(tree_);
    }

private:
    double x(std::size_t feature, std::uint32_t sample) const { return cols_[feature * n_ + sample]; }

    struct Split {
        int feature = -1;
        double threshold = 0.0;
        double gain = 0.0;
    };

    int grow(std::size_t begin, std::size_t end, int depth)
    {
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t i = begin; i < end; ++i) {
            const double v = y_[samples_[i]];
            sum += v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const std::size_t count = end - begin;
        const double node_mean = sum / static_cast<double>(count);
        tree_.nodes[static_cast<std::size_t>(id)].value = node_mean;

        const bool depth_ok = params_.max_depth < 0 || depth < params_.max_depth;
        if (!depth_ok || count < 2 * params_.min_leaf || !(hi > lo))
            return id;

        double sse = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            const double d = y_[samples_[i]] - node_mean;
            sse += d * d;
        }
        const Split best = find_split(begin, end, sum, sse);
        if (best.feature < 0)
            return id;

        const auto f = static_cast<std::size_t>(best.feature);
        const auto mid_it = std::partition(samples_.begin() + static_cast<std::ptrdiff_t>(begin),
                                           samples_.begin() + static_cast<std::ptrdiff_t>(end),
                                           [&](std::uint32_t s) { return x(f, s) <= best.threshold; });
        const auto mid = static_cast<std::size_t>(mid_it - samples_.begin());
        const int left = grow(begin, mid, depth + 1);
        const int right = grow(mid, end, depth + 1);
        auto& node = tree_.nodes[static_cast<std::size_t>(id)];
        node.feature = best.feature;
        node.threshold = best.threshold;
        node.left = left;
        node.right = right;
        return id;
    }

    /// Visits features in a per-node random order keyed by feature identity and
    /// evaluates the first `mtry` that are not constant at this node.
    Split find_split(std::size_t begin, std::size_t end, double sum, double sse)
    {
        const std::size_t mtry = params_.mtry == 0 ? p_ : std::min(params_.mtry, p_);
        const std::uint64_t node_seed = rng_.next();
        for (std::size_t j = 0; j < p_; ++j) {
            order_[j] = j;
            priority_[j] = splitmix64(node_seed ^ keys_[j]);
        }
        if (mtry < p_)
            std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
                return priority_[a] != priority_[b] ? priority_[a] < priority_[b] : keys_[a] < keys_[b];
            });

        Split best;
        const double parent_score = sum * sum / static_cast<double>(end - begin);
        const double min_gain = 1e-12 * sse;
        std::size_t evaluated = 0;
        for (std::size_t k = 0; k < p_ && evaluated < mtry; ++k) {
            const std::size_t f = order_[k];
            Split s;
            if (!evaluate_feature(f, begin, end, sum, parent_score, s))
                continue;
            ++evaluated;
            if (s.gain <= min_gain)
                continue;
            if (best.feature < 0 || s.gain > best.gain ||
                (s.gain == best.gain && keys_[f] < keys_[static_cast<std::size_t>(best.feature)]))
                best = s;
        }
        return best;
    }

    /// Returns false when the feature is constant over the node.
    bool evaluate_feature(std::size_t f, std::size_t begin, std::size_t end, double sum, double parent_score,
                          Split& out)
    {
        // Sparse columns: zeros are aggregated into one block, only nonzeros are sorted.
        pairs_.clear();
        std::size_t zero_count = 0;
        double zero_sum = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            const auto s = samples_[i];
            const double v = x(f, s);
            if (v == 0.0) {
                ++zero_count;
                zero_sum += y_[s];
            } else {
                pairs_.emplace_back(v, y_[s]);
            }
        }
        std::sort(pairs_.begin(), pairs_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        const bool constant =
            pairs_.empty() || (zero_count == 0 && pairs_.front().first == pairs_.back().first);
        if (constant)
            return false;

        const std::size_t total = end - begin;
        const std::size_t neg = static_cast<std::size_t>(
            std::lower_bound(pairs_.begin(), pairs_.end(), 0.0, [](const auto& a, double v) { return a.first < v; }) -
            pairs_.begin());

        std::size_t n_left = 0;
        double s_left = 0.0;
        double prev_value = 0.0;
        bool have_prev = false;
        auto consider = [&](double next_value) {
            // Boundary between prev_value (inclusive, left) and next_value.
            const std::size_t n_right = total - n_left;
            if (n_left < params_.min_leaf || n_right < params_.min_leaf)
                return;
            const double s_right = sum - s_left;
            const double score = s_left * s_left / static_cast<double>(n_left) +
                                 s_right * s_right / static_cast<double>(n_right);
            const double gain = score - parent_score;
            if (out.feature < 0 || gain > out.gain) {
                double thr = 0.5 * (prev_value + next_value);
                if (!(thr < next_value))
                    thr = prev_value;
                out = {static_cast<int>(f), thr, gain};
            }
        };
        auto push = [&](double value, std::size_t count, double ysum) {
            if (have_prev && value != prev_value)
                consider(value);
            n_left += count;
            s_left += ysum;
            prev_value = value;
            have_prev = true;
        };
        for (std::size_t i = 0; i < neg; ++i)
            push(pairs_[i].first, 1, pairs_[i].second);
        if (zero_count)
            push(0.0, zero_count, zero_sum);
        for (std::size_t i = neg; i < pairs_.size(); ++i)
            push(pairs_[i].first, 1, pairs_[i].second);
        return true;
    }

    const std::vector<double>& cols_;
    std::span<const double> y_;
    std::size_t n_, p_;
    const ForestParams& params_;
    std::span<const std::uint64_t> keys_;
    Rng& rng_;
    std::vector<std::uint32_t> samples_;
    std::vector<std::size_t> order_;
    std::vector<std::uint64_t> priority_;
    std::vector<std::pair<double, double>> pairs_;
    Tree tree_;
};

inline std::vector<double> column_major(const Matrix& X)
{
    std::vector<double> cols(X.rows * X.cols);
    for (std::size_t i = 0; i < X.rows; ++i)
        for (std::size_t j = 0; j < X.cols; ++j)
            cols[j * X.rows + i] = X(i, j);
    return cols;
}

} // namespace detail

/// Bagged CART regression forest. Tree t is grown from the generator seeded with
/// derive_seed(seed, t); `feature_keys` (default: column indices) identify the
/// columns for all per-feature randomness, so reordering columns together with
/// their keys yields the same forest up to the relabeling.
inline ForestModel fit_forest(const Matrix& X, std::span<const double> y, const ForestParams& params,
                              std::uint64_t seed, std::span<const std::uint64_t> feature_keys = {})
{
    if (params.n_trees < 1)
        throw SpecError("fit_forest: n_trees must be at least 1");
    if (X.rows == 0 || X.cols == 0)
        throw ShapeError("fit_forest: empty design");
    if (y.size() != X.rows)
        throw ShapeError("fit_forest: X and y differ in length");
    if (params.min_leaf < 1)
        throw SpecError("fit_forest: min_leaf must be at least 1");
    if (X.rows > std::numeric_limits<std::uint32_t>::max())
        throw ShapeError("fit_forest: too many samples");

    ForestModel model;
    model.params = params;
    model.seed = seed;
    model.n_features = X.cols;
    model.n_samples = X.rows;
    if (feature_keys.empty()) {
        model.feature_keys.resize(X.cols);
        std::iota(model.feature_keys.begin(), model.feature_keys.end(), std::uint64_t{0});
    } else {
        if (feature_keys.size() != X.cols)
            throw ShapeError("fit_forest: one key per feature required");
        model.feature_keys.assign(feature_keys.begin(), feature_keys.end());
    }
    model.trees.resize(params.n_trees);
    model.in_bag.resize(params.n_trees);
    const auto cols = detail::column_major(X);
    const std::size_t n = X.rows;

    parallel_for(params.n_trees, [&](std::size_t t) {
        Rng rng(derive_seed(seed, t));
        std::vector<std::uint32_t> samples(n);
        auto& bag = model.in_bag[t];
        bag.assign(n, 0);
        if (params.bootstrap) {
            for (auto& s : samples) {
                s = static_cast<std::uint32_t>(rng.below(n));
                ++bag[s];
            }
        } else {
            std::iota(samples.begin(), samples.end(), 0u);
            std::fill(bag.begin(), bag.end(), 1);
        }
        detail::TreeBuilder builder(cols, y, n, X.cols, model.params, model.feature_keys, rng);
        model.trees[t] = builder.build(std::move(samples));
    });
    return model;
}

inline double predict_forest(const ForestModel& model, std::span<const double> x)
{
    if (x.size() != model.n_features)
        throw ShapeError("predict_forest: expected " + std::to_string(model.n_features) + " features, got " +
                         std::to_string(x.size()));
    double s = 0.0;
    for (const auto& t : model.trees)
        s += t.predict(x);
    return s / static_cast<double>(model.trees.size());
}

inline std::vector<double> predict_forest(const ForestModel& model, const Matrix& X)
{
    std::vector<double> out(X.rows);
    for (std::size_t r = 0; r < X.rows; ++r)
        out[r] = predict_forest(model, X.row(r));
    return out;
}

// ---------------------------------------------------------------------------
// Out-of-bag evaluation
// ---------------------------------------------------------------------------

struct OobPredictions {
    std::vector<double> value;       // mean over trees for which the sample is OOB
    std::vector<std::size_t> trees;  // number of such trees (0 = not covered)
};

inline OobPredictions oob_predictions(const ForestModel& model, const Matrix& X)
{
    if (X.rows != model.n_samples || X.cols != model.n_features)
        throw ShapeError("oob_predictions: data does not match the training set");
    OobPredictions out{std::vector<double>(X.rows, 0.0), std::vector<std::size_t>(X.rows, 0)};
    for (std::size_t t = 0; t < model.trees.size(); ++t)
        for (std::size_t i = 0; i < X.rows; ++i)
            if (model.is_oob(t, i)) {
                out.value[i] += model.trees[t].predict(X.row(i));
                ++out.trees[i];
            }
    for (std::size_t i = 0; i < X.rows; ++i)
        if (out.trees[i])
            out.value[i] /= static_cast<double>(out.trees[i]);
    return out;
}

struct OobScore {
    double r2 = 0.0;
    std::size_t covered = 0;
    std::size_t skipped = 0; // samples in-bag for every tree
};

/// R^2 of OOB predictions over covered samples.
inline OobScore oob_r2(const ForestModel& model, const Matrix& X, std::span<const double> y)
{
    if (y.size() != X.rows)
        throw ShapeError("oob_r2: X and y differ in length");
    const auto oob = oob_predictions(model, X);
    OobScore s;
    double ym = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (oob.trees[i]) {
            ym += y[i];
            ++s.covered;
        }
    s.skipped = y.size() - s.covered;
    if (s.covered == 0)
        throw CoverageError("oob_r2: no sample is out-of-bag for any tree");
    ym /= static_cast<double>(s.covered);
    double sse = 0.0, sst = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (oob.trees[i]) {
            sse += (y[i] - oob.value[i]) * (y[i] - oob.value[i]);
            sst += (y[i] - ym) * (y[i] - ym);
        }
    s.r2 = sst > 0.0 ? 1.0 - sse / sst : 0.0;
    return s;
}

struct Importance {
    std::vector<double> raw;        // mean over trees of (permuted OOB MSE - OOB MSE)
    std::vector<double> normalized; // raw / sum(raw) when the sum is positive, else raw
};

/// OOB permutation importance. For every tree and every feature it splits on,
/// the feature's values are shuffled among that tree's OOB samples (generator
/// seeded from seed, tree and feature key) and the MSE increase is recorded.
/// Features a tree never splits on contribute exactly zero for that tree.
inline Importance oob_importance(const ForestModel& model, const Matrix& X, std::span<const double> y,
                                 std::uint64_t seed)
{
    if (X.rows != model.n_samples || X.cols != model.n_features || y.size() != X.rows)
        throw ShapeError("oob_importance: data does not match the training set");
    const std::size_t p = X.cols;
    std::vector<std::vector<double>> per_tree(model.trees.size());
    std::vector<char> has_oob(model.trees.size(), 0);

    parallel_for(model.trees.size(), [&](std::size_t t) {
        const auto& tree = model.trees[t];
        std::vector<std::size_t> oob;
        for (std::size_t i = 0; i < X.rows; ++i)
            if (model.is_oob(t, i))
                oob.push_back(i);
        auto& diff = per_tree[t];
        diff.assign(p, 0.0);
        if (oob.empty())
            return;
        has_oob[t] = 1;
        double base = 0.0;
        for (auto i : oob) {
            const double e = y[i] - tree.predict(X.row(i));
            base += e * e;
        }
        base /= static_cast<double>(oob.size());
        const auto used = tree.used_features(p);
        std::vector<std::size_t> perm(oob.size());
        for (std::size_t f = 0; f < p; ++f) {
            if (!used[f])
                continue;
            Rng rng(derive_seed(seed, t, model.feature_keys[f]));
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            rng.shuffle(perm);
            double mse = 0.0;
            for (std::size_t k = 0; k < oob.size(); ++k) {
                const auto i = oob[k];
                const double swapped = X(oob[perm[k]], f);
                const auto row = X.row(i);
                const double pred = tree.predict_with([&](std::size_t j) { return j == f ? swapped : row[j]; });
                mse += (y[i] - pred) * (y[i] - pred);
            }
            diff[f] = mse / static_cast<double>(oob.size()) - base;
        }
    });

    const auto covered = static_cast<std::size_t>(std::count(has_oob.begin(), has_oob.end(), 1));
    if (covered == 0)
        throw CoverageError("oob_importance: no tree has out-of-bag samples");
    Importance imp;
    imp.raw.assign(p, 0.0);
    for (std::size_t t = 0; t < per_tree.size(); ++t)
        if (has_oob[t])
            for (std::size_t f = 0; f < p; ++f)
                imp.raw[f] += per_tree[t][f];
    for (auto& v : imp.raw)
        v /= static_cast<double>(covered);
    double total = 0.0;
    for (double v : imp.raw)
        total += v;
    imp.normalized = imp.raw;
    if (total > 0.0)
        for (auto& v : imp.normalized)
            v /= total;
    return imp;
}

/// Feature indices by descending score; ties by ascending key.
inline std::vector<std::size_t> rank_by_score(std::span<const double> score, std::span<const std::uint64_t> keys = {})
{
    std::vector<std::size_t> order(score.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (score[a] != score[b])
            return score[a] > score[b];
        return keys.empty() ? a < b : keys[a] < keys[b];
    });
    return order;
}

} // namespace textcast
