#pragma once

#include <map>
#include <optional>

#include <nlohmann/json.hpp>

#include "textcast/corpus.hpp"

namespace textcast {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class Optimizer { sgd_momentum, adam };

inline std::string to_string(Optimizer o) { return o == Optimizer::adam ? "adam" : "sgd_momentum"; }

inline Optimizer parse_optimizer(std::string_view s)
{
    if (s == "adam")
        return Optimizer::adam;
    if (s == "sgd_momentum" || s == "sgd")
        return Optimizer::sgd_momentum;
    throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

struct TrainConfig {
    Optimizer optimizer = Optimizer::adam;
    double learning_rate = 1e-3;
    double momentum = 0.9; // sgd_momentum
    double beta1 = 0.9;    // adam
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t batch_size = 32;
    int epochs = 200;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (!(learning_rate >= 0.0))
            throw ConfigError("learning rate must be non-negative");
        if (batch_size == 0 || epochs < 1)
            throw ConfigError("batch size and epochs must be positive");
    }
};

enum class OutputActivation { sigmoid, identity };

struct MlpArchitecture {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden{64};
    double dropout = 0.25; // after each hidden layer
    OutputActivation output = OutputActivation::sigmoid;
};

struct GruArchitecture {
    std::size_t vocab_size = 0;
    std::size_t embedding_dim = 20;
    std::size_t hidden = 32;
    std::vector<std::size_t> dense{32};
    double dropout = 0.25; // after the GRU output and after each dense layer
};

enum class Mode { training, inference };

// ---------------------------------------------------------------------------
// Flat parameter storage
// ---------------------------------------------------------------------------

class ParamSet {
public:
    struct Tensor {
        std::string name;
        std::size_t rows = 0, cols = 0, offset = 0;
        std::size_t size() const { return rows * cols; }
    };

    std::size_t add(std::string name, std::size_t rows, std::size_t cols)
    {
        tensors_.push_back({std::move(name), rows, cols, values_.size()});
        values_.resize(values_.size() + rows * cols, 0.0);
        return tensors_.size() - 1;
    }

    std::span<double> view(std::size_t t) { return {values_.data() + tensors_[t].offset, tensors_[t].size()}; }
    std::span<const double> view(std::size_t t) const
    {
        return {values_.data() + tensors_[t].offset, tensors_[t].size()};
    }
    const double* ptr(std::size_t t) const { return values_.data() + tensors_[t].offset; }

    std::vector<double>& values() noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }
    const std::vector<Tensor>& tensors() const noexcept { return tensors_; }

    std::size_t find(std::string_view name) const
    {
        for (std::size_t t = 0; t < tensors_.size(); ++t)
            if (tensors_[t].name == name)
                return t;
        throw LookupError("no parameter tensor named '" + std::string(name) + "'");
    }

    /// Name of the tensor holding flat parameter i.
    const std::string& owner(std::size_t i) const
    {
        for (const auto& t : tensors_)
            if (i >= t.offset && i < t.offset + t.size())
                return t.name;
        throw IndexError("parameter index out of range");
    }

private:
    std::vector<Tensor> tensors_;
    std::vector<double> values_;
};

namespace detail {

inline double sigmoid(double a)
{
    if (a >= 0.0)
        return 1.0 / (1.0 + std::exp(-a));
    const double e = std::exp(a);
    return e / (1.0 + e);
}

/// out[j] += sum_i x[i] * W[i, j] for row-major W (n x m).
inline void add_xw(std::span<const double> x, const double* W, std::span<double> out)
{
    const std::size_t m = out.size();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        if (xi == 0.0)
            continue;
        const double* w = W + i * m;
        for (std::size_t j = 0; j < m; ++j)
            out[j] += xi * w[j];
    }
}

/// dx[i] += sum_j W[i, j] * d[j]; dW[i, j] += x[i] * d[j].
inline void back_xw(std::span<const double> x, const double* W, std::span<const double> d, double* dW,
                    std::span<double> dx)
{
    const std::size_t m = d.size();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double* w = W + i * m;
        double* dw = dW + i * m;
        double acc = 0.0;
        const double xi = x[i];
        for (std::size_t j = 0; j < m; ++j) {
            acc += w[j] * d[j];
            dw[j] += xi * d[j];
        }
        if (!dx.empty())
            dx[i] += acc;
    }
}

inline void glorot(std::span<double> w, std::size_t fan_in, std::size_t fan_out, Rng& rng)
{
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : w)
        v = rng.uniform(-limit, limit);
}

/// Dense ReLU stack with inverted dropout followed by a scalar output unit.
/// Shared by both model kinds.
struct DenseHead {
    std::vector<std::size_t> weight, bias; // tensor ids per hidden layer
    std::size_t out_w = 0, out_b = 0;
    std::vector<std::size_t> widths; // input width followed by hidden widths

    void declare(ParamSet& ps, std::size_t input, std::span<const std::size_t> hidden)
    {
        widths = {input};
        for (std::size_t k = 0; k < hidden.size(); ++k) {
            weight.push_back(ps.add("dense" + std::to_string(k) + "_W", widths.back(), hidden[k]));
            bias.push_back(ps.add("dense" + std::to_string(k) + "_b", 1, hidden[k]));
            widths.push_back(hidden[k]);
        }
        out_w = ps.add("out_W", widths.back(), 1);
        out_b = ps.add("out_b", 1, 1);
    }

    void init(ParamSet& ps, Rng& rng) const
    {
        for (std::size_t k = 0; k < weight.size(); ++k)
            glorot(ps.view(weight[k]), widths[k], widths[k + 1], rng);
        glorot(ps.view(out_w), widths.back(), 1, rng);
    }

    struct Cache {
        std::vector<std::vector<double>> inputs; // input to each layer (post-dropout), last = input of output unit
        std::vector<std::vector<double>> pre;    // pre-activation per hidden layer
        std::vector<std::vector<double>> masks;  // dropout multipliers per hidden layer (empty = none)
        double out_pre = 0.0;
        double yhat = 0.0;
    };

    /// `input` has already been through the preceding dropout.
    double forward(const ParamSet& ps, std::vector<double> input, double dropout, Rng* rng, OutputActivation act,
                   Cache* cache) const
    {
        std::vector<double> cur = std::move(input);
        if (cache) {
            cache->inputs.clear();
            cache->pre.clear();
            cache->masks.clear();
        }
        for (std::size_t k = 0; k < weight.size(); ++k) {
            const auto b = ps.view(bias[k]);
            std::vector<double> a(b.begin(), b.end());
            add_xw(cur, ps.ptr(weight[k]), a);
            if (cache) {
                cache->inputs.push_back(std::move(cur));
                cache->pre.push_back(a);
            }
            std::vector<double> mask;
            for (auto& v : a)
                v = v > 0.0 ? v : 0.0;
            if (rng && dropout > 0.0) {
                mask.resize(a.size());
                const double keep = 1.0 / (1.0 - dropout);
                for (std::size_t j = 0; j < a.size(); ++j) {
                    mask[j] = rng->uniform() < dropout ? 0.0 : keep;
                    a[j] *= mask[j];
                }
            }
            if (cache)
                cache->masks.push_back(std::move(mask));
            cur = std::move(a);
        }
        double o = ps.view(out_b)[0];
        const double* w = ps.ptr(out_w);
        for (std::size_t j = 0; j < cur.size(); ++j)
            o += cur[j] * w[j];
        const double yhat = act == OutputActivation::sigmoid ? sigmoid(o) : o;
        if (cache) {
            cache->inputs.push_back(std::move(cur));
            cache->out_pre = o;
            cache->yhat = yhat;
        }
        return yhat;
    }

    /// Returns d(loss)/d(input of the head).
    std::vector<double> backward(const ParamSet& ps, const Cache& cache, double dyhat, OutputActivation act,
                                 std::vector<double>& grad) const
    {
        const auto& tensors = ps.tensors();
        const double dout = act == OutputActivation::sigmoid ? dyhat * cache.yhat * (1.0 - cache.yhat) : dyhat;
        grad[tensors[out_b].offset] += dout;
        const auto& last = cache.inputs.back();
        std::vector<double> d(last.size(), 0.0);
        {
            const double* w = ps.ptr(out_w);
            double* dw = grad.data() + tensors[out_w].offset;
            for (std::size_t j = 0; j < last.size(); ++j) {
                dw[j] += last[j] * dout;
                d[j] = w[j] * dout;
            }
        }
        for (std::size_t k = weight.size(); k-- > 0;) {
            const auto& mask = cache.masks[k];
            const auto& pre = cache.pre[k];
            for (std::size_t j = 0; j < d.size(); ++j) {
                if (!mask.empty())
                    d[j] *= mask[j];
                if (!(pre[j] > 0.0))
                    d[j] = 0.0;
            }
            double* db = grad.data() + tensors[bias[k]].offset;
            for (std::size_t j = 0; j < d.size(); ++j)
                db[j] += d[j];
            std::vector<double> dx(cache.inputs[k].size(), 0.0);
            back_xw(cache.inputs[k], ps.ptr(weight[k]), d, grad.data() + tensors[weight[k]].offset, dx);
            d = std::move(dx);
        }
        return d;
    }
};

inline std::vector<double> apply_dropout(std::vector<double> v, double p, Rng* rng, std::vector<double>* mask)
{
    if (mask)
        mask->clear();
    if (!rng || p <= 0.0)
        return v;
    const double keep = 1.0 / (1.0 - p);
    if (mask)
        mask->resize(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) {
        const double m = rng->uniform() < p ? 0.0 : keep;
        v[j] *= m;
        if (mask)
            (*mask)[j] = m;
    }
    return v;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Data sets
// ---------------------------------------------------------------------------

struct TabularSet {
    Matrix X;
    std::vector<double> y;
    std::size_t size() const { return y.size(); }
};

struct SequenceSet {
    PaddedBatch ids;
    std::vector<double> y;
    std::size_t size() const { return y.size(); }
};

// ---------------------------------------------------------------------------
// MLP on TF-IDF vectors
// ---------------------------------------------------------------------------

class MlpModel {
public:
    using Data = TabularSet;

    MlpModel() = default;

    MlpModel(MlpArchitecture arch, std::uint64_t seed) : arch_(std::move(arch))
    {
        if (arch_.input_dim == 0)
            throw ShapeError("MLP input dimension must be positive");
        if (!(arch_.dropout >= 0.0 && arch_.dropout < 1.0))
            throw ConfigError("dropout probability must lie in [0, 1)");
        head_.declare(params_, arch_.input_dim, arch_.hidden);
        Rng rng(seed);
        head_.init(params_, rng);
    }

    const MlpArchitecture& architecture() const noexcept { return arch_; }
    ParamSet& params() noexcept { return params_; }
    const ParamSet& params() const noexcept { return params_; }

    double forward(std::span<const double> x, Mode mode, Rng* dropout_rng = nullptr) const
    {
        check_input(x);
        return head_.forward(params_, {x.begin(), x.end()}, arch_.dropout, mode == Mode::training ? dropout_rng : nullptr,
                             arch_.output, nullptr);
    }

    /// Mean squared error over `batch`; fills `grad` (resized) when given.
    double loss_and_gradient(const TabularSet& data, std::span<const std::size_t> batch, Mode mode, Rng* dropout_rng,
                             std::vector<double>* grad, bool = false)
    {
        if (grad)
            grad->assign(params_.values().size(), 0.0);
        const double scale = 1.0 / static_cast<double>(batch.size());
        double loss = 0.0;
        detail::DenseHead::Cache cache;
        for (auto i : batch) {
            const auto x = data.X.row(i);
            check_input(x);
            const double yhat = head_.forward(params_, {x.begin(), x.end()}, arch_.dropout,
                                              mode == Mode::training ? dropout_rng : nullptr, arch_.output,
                                              grad ? &cache : nullptr);
            const double e = yhat - data.y[i];
            loss += e * e;
            if (grad)
                head_.backward(params_, cache, 2.0 * e * scale, arch_.output, *grad);
        }
        return loss * scale;
    }

    std::vector<double> predict(const TabularSet& data) const { return predict(data.X); }

    std::vector<double> predict(const Matrix& X) const
    {
        std::vector<double> out(X.rows);
        for (std::size_t r = 0; r < X.rows; ++r)
            out[r] = forward(X.row(r), Mode::inference);
        return out;
    }

    void after_update() {}

    nlohmann::json to_json() const;
    static MlpModel from_json(const nlohmann::json& j);

private:
    void check_input(std::span<const double> x) const
    {
        if (x.size() != arch_.input_dim)
            throw ShapeError("MLP expects " + std::to_string(arch_.input_dim) + " inputs, got " +
                             std::to_string(x.size()));
    }

    MlpArchitecture arch_;
    ParamSet params_;
    detail::DenseHead head_;
};

// ---------------------------------------------------------------------------
// Embedding -> batch norm -> GRU -> dense -> sigmoid
// ---------------------------------------------------------------------------

struct GruStep {
    std::vector<double> z, r, c, h;
};

class GruModel {
public:
    using Data = SequenceSet;
    static constexpr double bn_epsilon = 1e-5;
    static constexpr double bn_momentum = 0.1;

    GruModel() = default;

    GruModel(GruArchitecture arch, std::uint64_t seed) : arch_(std::move(arch))
    {
        if (arch_.vocab_size == 0 || arch_.embedding_dim == 0 || arch_.hidden == 0)
            throw ShapeError("GRU dimensions must be positive");
        if (!(arch_.dropout >= 0.0 && arch_.dropout < 1.0))
            throw ConfigError("dropout probability must lie in [0, 1)");
        const auto q = arch_.embedding_dim, h = arch_.hidden;
        embedding_ = params_.add("embedding", arch_.vocab_size + 1, q);
        gamma_ = params_.add("bn_gamma", 1, q);
        beta_ = params_.add("bn_beta", 1, q);
        for (int g = 0; g < 3; ++g) {
            const std::string suffix = g == 0 ? "z" : g == 1 ? "r" : "h";
            W_[g] = params_.add("W_" + suffix, q, h);
            U_[g] = params_.add("U_" + suffix, h, h);
            b_[g] = params_.add("b_" + suffix, 1, h);
        }
        head_.declare(params_, h, arch_.dense);

        Rng rng(seed);
        auto E = params_.view(embedding_);
        for (std::size_t k = q; k < E.size(); ++k)
            E[k] = rng.uniform(-0.05, 0.05);
        for (auto& g : params_.view(gamma_))
            g = 1.0;
        for (int g = 0; g < 3; ++g) {
            detail::glorot(params_.view(W_[g]), q, h, rng);
            detail::glorot(params_.view(U_[g]), h, h, rng);
        }
        head_.init(params_, rng);
        running_mean_.assign(q, 0.0);
        running_var_.assign(q, 1.0);
    }

    const GruArchitecture& architecture() const noexcept { return arch_; }
    ParamSet& params() noexcept { return params_; }
    const ParamSet& params() const noexcept { return params_; }
    bool stats_ready() const noexcept { return stats_ready_; }
    const std::vector<double>& running_mean() const noexcept { return running_mean_; }
    const std::vector<double>& running_var() const noexcept { return running_var_; }

    /// (V + 1) x q embedding; row 0 is the padding/unknown vector.
    Matrix embedding_matrix() const
    {
        Matrix E(arch_.vocab_size + 1, arch_.embedding_dim);
        const auto v = params_.view(embedding_);
        std::copy(v.begin(), v.end(), E.data.begin());
        return E;
    }

    /// Embedding lookup of one padded row (S x q); id 0 yields zeros.
    Matrix embed(std::span<const int> ids) const
    {
        Matrix out(ids.size(), arch_.embedding_dim);
        const auto E = params_.view(embedding_);
        for (std::size_t t = 0; t < ids.size(); ++t) {
            check_id(ids[t]);
            std::copy_n(E.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(ids[t]) * arch_.embedding_dim),
                        arch_.embedding_dim, out.row(t).begin());
        }
        return out;
    }

    /// One GRU update: z = s(xWz + hUz + bz), r = s(xWr + hUr + br),
    /// c = tanh(xWh + (r*h)Uh + bh), h' = (1 - z) * h + z * c.
    GruStep gru_cell(std::span<const double> x, std::span<const double> h_prev) const
    {
        const auto h = arch_.hidden;
        GruStep s;
        auto gate = [&](int g, std::span<const double> hin) {
            const auto b = params_.view(b_[static_cast<std::size_t>(g)]);
            std::vector<double> a(b.begin(), b.end());
            detail::add_xw(x, params_.ptr(W_[static_cast<std::size_t>(g)]), a);
            detail::add_xw(hin, params_.ptr(U_[static_cast<std::size_t>(g)]), a);
            return a;
        };
        s.z = gate(0, h_prev);
        s.r = gate(1, h_prev);
        for (std::size_t j = 0; j < h; ++j) {
            s.z[j] = detail::sigmoid(s.z[j]);
            s.r[j] = detail::sigmoid(s.r[j]);
        }
        std::vector<double> rh(h);
        for (std::size_t j = 0; j < h; ++j)
            rh[j] = s.r[j] * h_prev[j];
        s.c = gate(2, rh);
        s.h.resize(h);
        for (std::size_t j = 0; j < h; ++j) {
            s.c[j] = std::tanh(s.c[j]);
            s.h[j] = (1.0 - s.z[j]) * h_prev[j] + s.z[j] * s.c[j];
        }
        return s;
    }

    /// Batch normalization over the given embedded vectors (rows). Training mode
    /// normalizes with the statistics of these rows (population variance);
    /// inference uses the running averages.
    Matrix batch_norm(const Matrix& x, Mode mode) const
    {
        std::vector<double> mu, inv;
        if (mode == Mode::training) {
            std::vector<double> var;
            batch_stats(x, mu, var);
            inv = inverse_std(var);
        } else {
            require_stats();
            mu = running_mean_;
            inv = inverse_std(running_var_);
        }
        Matrix out(x.rows, x.cols);
        const auto g = params_.view(gamma_), b = params_.view(beta_);
        for (std::size_t i = 0; i < x.rows; ++i)
            for (std::size_t f = 0; f < x.cols; ++f)
                out(i, f) = (x(i, f) - mu[f]) * inv[f] * g[f] + b[f];
        return out;
    }

    /// Predictions for every row of `ids` (inference mode).
    std::vector<double> predict(const PaddedBatch& ids) const
    {
        std::vector<std::size_t> all(ids.rows());
        for (std::size_t i = 0; i < all.size(); ++i)
            all[i] = i;
        return run(ids, {}, all, Mode::inference, nullptr, nullptr).predictions;
    }

    std::vector<double> predict(const SequenceSet& data) const { return predict(data.ids); }

    double loss_and_gradient(const SequenceSet& data, std::span<const std::size_t> batch, Mode mode, Rng* dropout_rng,
                             std::vector<double>* grad, bool update_stats = false)
    {
        auto r = run(data.ids, data.y, batch, mode, dropout_rng, grad);
        if (mode == Mode::training && update_stats && r.active_positions > 0) {
            if (!stats_ready_) {
                running_mean_ = r.batch_mean;
                running_var_ = r.batch_var;
                stats_ready_ = true;
            } else {
                for (std::size_t f = 0; f < arch_.embedding_dim; ++f) {
                    running_mean_[f] = (1.0 - bn_momentum) * running_mean_[f] + bn_momentum * r.batch_mean[f];
                    running_var_[f] = (1.0 - bn_momentum) * running_var_[f] + bn_momentum * r.batch_var[f];
                }
            }
        }
        return r.loss;
    }

    /// Embedding row 0 stays zero.
    void after_update()
    {
        auto E = params_.view(embedding_);
        std::fill_n(E.begin(), arch_.embedding_dim, 0.0);
    }

    nlohmann::json to_json() const;
    static GruModel from_json(const nlohmann::json& j);

private:
    struct Position {
        std::size_t sample; // index within the batch
        int id;
    };

    struct RunResult {
        double loss = 0.0;
        std::vector<double> predictions;
        std::vector<double> batch_mean, batch_var;
        std::size_t active_positions = 0;
    };

    void check_id(int id) const
    {
        if (id < 0 || static_cast<std::size_t>(id) > arch_.vocab_size)
            throw IndexError("token id " + std::to_string(id) + " exceeds vocabulary size " +
                             std::to_string(arch_.vocab_size));
    }

    void require_stats() const
    {
        if (!stats_ready_)
            throw StatsError("batch normalization used in inference mode before any training step");
    }

    std::vector<double> inverse_std(const std::vector<double>& var) const
    {
        std::vector<double> inv(var.size());
        for (std::size_t f = 0; f < var.size(); ++f)
            inv[f] = 1.0 / std::sqrt(var[f] + bn_epsilon);
        return inv;
    }

    static void batch_stats(const Matrix& x, std::vector<double>& mu, std::vector<double>& var)
    {
        mu.assign(x.cols, 0.0);
        var.assign(x.cols, 0.0);
        if (x.rows == 0)
            return;
        for (std::size_t i = 0; i < x.rows; ++i)
            for (std::size_t f = 0; f < x.cols; ++f)
                mu[f] += x(i, f);
        for (auto& m : mu)
            m /= static_cast<double>(x.rows);
        for (std::size_t i = 0; i < x.rows; ++i)
            for (std::size_t f = 0; f < x.cols; ++f)
                var[f] += (x(i, f) - mu[f]) * (x(i, f) - mu[f]);
        for (auto& v : var)
            v /= static_cast<double>(x.rows);
    }

    /// Full forward (and optionally backward) pass. Padding positions (id 0)
    /// are excluded from the batch statistics and do not update the hidden state.
    RunResult run(const PaddedBatch& ids, std::span<const double> y, std::span<const std::size_t> batch, Mode mode,
                  Rng* dropout_rng, std::vector<double>* grad) const
    {
        const auto q = arch_.embedding_dim, h = arch_.hidden, S = ids.S;
        const bool train = mode == Mode::training;
        Rng* drop = train ? dropout_rng : nullptr;

        // Active positions, in (sample, time) order.
        std::vector<Position> pos;
        std::vector<std::size_t> first(batch.size() + 1, 0);
        for (std::size_t b = 0; b < batch.size(); ++b) {
            first[b] = pos.size();
            const auto row = ids.row(batch[b]);
            for (std::size_t t = 0; t < S; ++t) {
                check_id(row[t]);
                if (row[t] != 0)
                    pos.push_back({b, row[t]});
            }
        }
        first[batch.size()] = pos.size();

        Matrix embedded(pos.size(), q);
        {
            const auto E = params_.view(embedding_);
            for (std::size_t k = 0; k < pos.size(); ++k)
                std::copy_n(E.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(pos[k].id) * q), q,
                            embedded.row(k).begin());
        }

        RunResult result;
        result.active_positions = pos.size();
        std::vector<double> mu, var;
        if (train) {
            batch_stats(embedded, mu, var);
            result.batch_mean = mu;
            result.batch_var = var;
        } else {
            if (!pos.empty())
                require_stats();
            mu = running_mean_;
            var = running_var_;
        }
        const auto inv = inverse_std(var);
        Matrix xhat(pos.size(), q), u(pos.size(), q);
        const auto gamma = params_.view(gamma_), beta = params_.view(beta_);
        for (std::size_t k = 0; k < pos.size(); ++k)
            for (std::size_t f = 0; f < q; ++f) {
                xhat(k, f) = (embedded(k, f) - mu[f]) * inv[f];
                u(k, f) = xhat(k, f) * gamma[f] + beta[f];
            }

        result.predictions.resize(batch.size());
        const double scale = batch.empty() ? 0.0 : 1.0 / static_cast<double>(batch.size());
        if (grad)
            grad->assign(params_.values().size(), 0.0);
        Matrix du(grad ? pos.size() : 0, q);
        const auto& tensors = params_.tensors();

        std::vector<GruStep> steps;
        std::vector<std::vector<double>> h_prev;
        detail::DenseHead::Cache head_cache;
        std::vector<double> gru_mask;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            steps.clear();
            h_prev.clear();
            std::vector<double> hcur(h, 0.0);
            for (std::size_t k = first[b]; k < first[b + 1]; ++k) {
                h_prev.push_back(hcur);
                steps.push_back(gru_cell(u.row(k), hcur));
                hcur = steps.back().h;
            }
            auto head_in = detail::apply_dropout(hcur, arch_.dropout, drop, &gru_mask);
            const double yhat = head_.forward(params_, std::move(head_in), arch_.dropout, drop,
                                              OutputActivation::sigmoid, grad ? &head_cache : nullptr);
            result.predictions[b] = yhat;
            if (y.empty())
                continue;
            const double e = yhat - y[batch[b]];
            result.loss += e * e * scale;
            if (!grad)
                continue;

            auto dh = head_.backward(params_, head_cache, 2.0 * e * scale, OutputActivation::sigmoid, *grad);
            if (!gru_mask.empty())
                for (std::size_t j = 0; j < h; ++j)
                    dh[j] *= gru_mask[j];
            // Backpropagation through time over the active steps.
            for (std::size_t s = steps.size(); s-- > 0;) {
                const auto& st = steps[s];
                const auto& hp = h_prev[s];
                const auto x = u.row(first[b] + s);
                std::vector<double> dhp(h), dc(h), dz(h), da_h(h), da_r(h), da_z(h), drh(h, 0.0), rh(h);
                for (std::size_t j = 0; j < h; ++j) {
                    dc[j] = dh[j] * st.z[j];
                    dz[j] = dh[j] * (st.c[j] - hp[j]);
                    dhp[j] = dh[j] * (1.0 - st.z[j]);
                    da_h[j] = dc[j] * (1.0 - st.c[j] * st.c[j]);
                    da_z[j] = dz[j] * st.z[j] * (1.0 - st.z[j]);
                    rh[j] = st.r[j] * hp[j];
                }
                auto dx = du.row(first[b] + s);
                auto accumulate_gate = [&](int g, std::span<const double> hin, std::span<const double> da,
                                           std::span<double> dhin) {
                    const auto gi = static_cast<std::size_t>(g);
                    double* db = grad->data() + tensors[b_[gi]].offset;
                    for (std::size_t j = 0; j < h; ++j)
                        db[j] += da[j];
                    detail::back_xw(x, params_.ptr(W_[gi]), da, grad->data() + tensors[W_[gi]].offset, dx);
                    detail::back_xw(hin, params_.ptr(U_[gi]), da, grad->data() + tensors[U_[gi]].offset, dhin);
                };
                accumulate_gate(2, rh, da_h, drh);
                for (std::size_t j = 0; j < h; ++j) {
                    da_r[j] = drh[j] * hp[j] * st.r[j] * (1.0 - st.r[j]);
                    dhp[j] += drh[j] * st.r[j];
                }
                accumulate_gate(1, hp, da_r, dhp);
                accumulate_gate(0, hp, da_z, dhp);
                dh = std::move(dhp);
            }
        }

        if (grad && !pos.empty()) {
            double* dgamma = grad->data() + tensors[gamma_].offset;
            double* dbeta = grad->data() + tensors[beta_].offset;
            double* dE = grad->data() + tensors[embedding_].offset;
            const double m = static_cast<double>(pos.size());
            std::vector<double> sum_dxhat(q, 0.0), sum_dxhat_xhat(q, 0.0);
            for (std::size_t k = 0; k < pos.size(); ++k)
                for (std::size_t f = 0; f < q; ++f) {
                    dgamma[f] += du(k, f) * xhat(k, f);
                    dbeta[f] += du(k, f);
                    const double dxh = du(k, f) * gamma[f];
                    sum_dxhat[f] += dxh;
                    sum_dxhat_xhat[f] += dxh * xhat(k, f);
                }
            for (std::size_t k = 0; k < pos.size(); ++k) {
                double* row = dE + static_cast<std::size_t>(pos[k].id) * q;
                for (std::size_t f = 0; f < q; ++f) {
                    const double dxh = du(k, f) * gamma[f];
                    row[f] += train ? inv[f] / m * (m * dxh - sum_dxhat[f] - xhat(k, f) * sum_dxhat_xhat[f])
                                    : dxh * inv[f];
                }
            }
        }
        return result;
    }

    GruArchitecture arch_;
    ParamSet params_;
    std::size_t embedding_ = 0, gamma_ = 0, beta_ = 0;
    std::size_t W_[3]{}, U_[3]{}, b_[3]{};
    detail::DenseHead head_;
    std::vector<double> running_mean_, running_var_;
    bool stats_ready_ = false;

};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct LossPoint {
    int epoch = 0;
    double train_mse = 0.0;
    double validation_mse = std::numeric_limits<double>::quiet_NaN();
};

template <class Model>
struct TrainResult {
    Model model;          ///< parameters at the best validation epoch (last epoch without validation)
    std::vector<LossPoint> curve;
    int best_epoch = 0;
};

template <class Model>
double evaluate_mse(const Model& model, const typename Model::Data& data)
{
    const auto pred = model.predict(data);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        s += (pred[i] - data.y[i]) * (pred[i] - data.y[i]);
    return pred.empty() ? 0.0 : s / static_cast<double>(pred.size());
}

/// Mini-batch training on the quadratic loss. The generator seeded with
/// config.seed drives shuffling and dropout.
template <class Model>
TrainResult<Model> train(Model model, const typename Model::Data& data, const typename Model::Data* validation,
                         const TrainConfig& config)
{
    config.validate();
    if (data.size() == 0)
        throw ShapeError("train: empty training set");
    Rng rng(derive_seed(config.seed, 0x7a11));
    auto& theta = model.params().values();
    std::vector<double> grad, m1(theta.size(), 0.0), m2(theta.size(), 0.0);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    long step = 0;

    TrainResult<Model> result{model, {}, 0};
    double best = std::numeric_limits<double>::infinity();
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::span<const std::size_t> batch(order.data() + start,
                                                     std::min(config.batch_size, order.size() - start));
            const double loss = model.loss_and_gradient(data, batch, Mode::training, &rng, &grad, true);
            if (!std::isfinite(loss))
                throw DivergenceError(epoch);
            ++step;
            if (config.optimizer == Optimizer::sgd_momentum) {
                for (std::size_t i = 0; i < theta.size(); ++i) {
                    m1[i] = config.momentum * m1[i] - config.learning_rate * grad[i];
                    theta[i] += m1[i];
                }
            } else {
                const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
                const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
                for (std::size_t i = 0; i < theta.size(); ++i) {
                    m1[i] = config.beta1 * m1[i] + (1.0 - config.beta1) * grad[i];
                    m2[i] = config.beta2 * m2[i] + (1.0 - config.beta2) * grad[i] * grad[i];
                    theta[i] -= config.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + config.epsilon);
                }
            }
            model.after_update();
        }
        LossPoint point{epoch, evaluate_mse(model, data)};
        if (!std::isfinite(point.train_mse))
            throw DivergenceError(epoch);
        if (validation) {
            point.validation_mse = evaluate_mse(model, *validation);
            if (!std::isfinite(point.validation_mse))
                throw DivergenceError(epoch);
            if (point.validation_mse < best) {
                best = point.validation_mse;
                result.model = model;
                result.best_epoch = epoch;
            }
        }
        result.curve.push_back(point);
    }
    if (!validation) {
        result.model = std::move(model);
        result.best_epoch = config.epochs;
    }
    return result;
}

inline std::string serialize_loss_curve(std::span<const LossPoint> curve)
{
    std::string out = "epoch,train_mse,validation_mse\n";
    for (const auto& p : curve)
        out += std::to_string(p.epoch) + "," + format_double(p.train_mse) + "," +
               (std::isnan(p.validation_mse) ? std::string() : format_double(p.validation_mse)) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

struct GradientCheckReport {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    std::string worst_tensor;
    std::vector<double> analytic;
    std::vector<double> numeric;
};

/// Central finite differences against backpropagation on a fixed batch, with
/// dropout disabled and batch normalization in training mode. Relative error
/// per parameter is |ga - gn| / (|ga| + |gn| + 1e-12).
template <class Model>
GradientCheckReport gradient_check(Model model, const typename Model::Data& data, double epsilon = 1e-5)
{
    std::vector<std::size_t> batch(data.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
        batch[i] = i;
    GradientCheckReport rep;
    model.loss_and_gradient(data, batch, Mode::training, nullptr, &rep.analytic, false);
    auto& theta = model.params().values();
    rep.numeric.resize(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double saved = theta[i];
        theta[i] = saved + epsilon;
        const double up = model.loss_and_gradient(data, batch, Mode::training, nullptr, nullptr, false);
        theta[i] = saved - epsilon;
        const double down = model.loss_and_gradient(data, batch, Mode::training, nullptr, nullptr, false);
        theta[i] = saved;
        rep.numeric[i] = (up - down) / (2.0 * epsilon);
        const double ga = rep.analytic[i], gn = rep.numeric[i];
        const double rel = std::abs(ga - gn) / (std::abs(ga) + std::abs(gn) + 1e-12);
        if (rel > rep.max_relative_error) {
            rep.max_relative_error = rel;
            rep.worst_index = i;
        }
    }
    rep.worst_tensor = theta.empty() ? "" : model.params().owner(rep.worst_index);
    return rep;
}

// ---------------------------------------------------------------------------
// Checkpoints (structured text; doubles round-trip exactly)
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json params_to_json(const ParamSet& ps)
{
    auto arr = nlohmann::json::array();
    for (std::size_t t = 0; t < ps.tensors().size(); ++t) {
        const auto& tensor = ps.tensors()[t];
        const auto v = ps.view(t);
        arr.push_back({{"name", tensor.name},
                       {"rows", tensor.rows},
                       {"cols", tensor.cols},
                       {"values", std::vector<double>(v.begin(), v.end())}});
    }
    return arr;
}

inline void params_from_json(ParamSet& ps, const nlohmann::json& arr)
{
    if (arr.size() != ps.tensors().size())
        throw ParseError("checkpoint: tensor count mismatch", 0);
    for (std::size_t t = 0; t < ps.tensors().size(); ++t) {
        const auto& tensor = ps.tensors()[t];
        const auto& j = arr.at(t);
        if (j.at("name").get<std::string>() != tensor.name || j.at("rows").get<std::size_t>() != tensor.rows ||
            j.at("cols").get<std::size_t>() != tensor.cols)
            throw ParseError("checkpoint: tensor '" + tensor.name + "' has unexpected shape", 0);
        const auto values = j.at("values").get<std::vector<double>>();
        if (values.size() != tensor.size())
            throw ParseError("checkpoint: tensor '" + tensor.name + "' has the wrong number of values", 0);
        std::copy(values.begin(), values.end(), ps.view(t).begin());
    }
}

} // namespace detail

inline nlohmann::json MlpModel::to_json() const
{
    return {{"kind", "mlp"},
            {"format_version", 1},
            {"architecture",
             {{"input_dim", arch_.input_dim},
              {"hidden", arch_.hidden},
              {"dropout", arch_.dropout},
              {"output", arch_.output == OutputActivation::sigmoid ? "sigmoid" : "identity"}}},
            {"tensors", detail::params_to_json(params_)}};
}

inline MlpModel MlpModel::from_json(const nlohmann::json& j)
{
    try {
        if (j.at("kind").get<std::string>() != "mlp")
            throw ParseError("checkpoint is not an MLP", 0);
        const auto& a = j.at("architecture");
        MlpArchitecture arch{a.at("input_dim").get<std::size_t>(), a.at("hidden").get<std::vector<std::size_t>>(),
                             a.at("dropout").get<double>(),
                             a.at("output").get<std::string>() == "sigmoid" ? OutputActivation::sigmoid
                                                                            : OutputActivation::identity};
        MlpModel m(arch, 0);
        detail::params_from_json(m.params_, j.at("tensors"));
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what(), 0);
    }
}

inline nlohmann::json GruModel::to_json() const
{
    return {{"kind", "gru"},
            {"format_version", 1},
            {"architecture",
             {{"vocab_size", arch_.vocab_size},
              {"embedding_dim", arch_.embedding_dim},
              {"hidden", arch_.hidden},
              {"dense", arch_.dense},
              {"dropout", arch_.dropout}}},
            {"batch_norm",
             {{"ready", stats_ready_}, {"running_mean", running_mean_}, {"running_var", running_var_}}},
            {"tensors", detail::params_to_json(params_)}};
}

inline GruModel GruModel::from_json(const nlohmann::json& j)
{
    try {
        if (j.at("kind").get<std::string>() != "gru")
            throw ParseError("checkpoint is not a GRU model", 0);
        const auto& a = j.at("architecture");
        GruArchitecture arch{a.at("vocab_size").get<std::size_t>(), a.at("embedding_dim").get<std::size_t>(),
                             a.at("hidden").get<std::size_t>(), a.at("dense").get<std::vector<std::size_t>>(),
                             a.at("dropout").get<double>()};
        GruModel m(arch, 0);
        detail::params_from_json(m.params_, j.at("tensors"));
        const auto& bn = j.at("batch_norm");
        m.stats_ready_ = bn.at("ready").get<bool>();
        m.running_mean_ = bn.at("running_mean").get<std::vector<double>>();
        m.running_var_ = bn.at("running_var").get<std::vector<double>>();
        if (m.running_mean_.size() != arch.embedding_dim || m.running_var_.size() != arch.embedding_dim)
            throw ParseError("checkpoint: batch-norm statistics have the wrong size", 0);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what(), 0);
    }
}

inline nlohmann::json train_config_to_json(const TrainConfig& c)
{
    return {{"optimizer", to_string(c.optimizer)}, {"learning_rate", c.learning_rate}, {"momentum", c.momentum},
            {"beta1", c.beta1},                    {"beta2", c.beta2},                 {"epsilon", c.epsilon},
            {"batch_size", c.batch_size},          {"epochs", c.epochs},               {"seed", c.seed}};
}

} // namespace textcast
