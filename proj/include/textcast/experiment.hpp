#pragma once

#include <chrono>
#include <filesystem>
#include <functional>

#include "textcast/config.hpp"
#include "textcast/encode.hpp"
#include "textcast/interpret.hpp"
#include "textcast/linmod.hpp"
#include "textcast/pipeline.hpp"

namespace textcast {

inline constexpr const char* version_string = "textcast 1.0.0";

/// Aligned inputs of one experiment: the days present in both the series and
/// the documents.
struct Dataset {
    std::vector<Date> dates;
    std::vector<double> y;
    std::vector<TokenList> tokens;
    std::optional<Matrix> covariates; // benchmark features, one row per date
    Unit unit = Unit::unitless;
    std::size_t dropped = 0;          // series days without a document
};

struct Segment {
    std::size_t begin = 0, end = 0;
    std::size_t size() const { return end - begin; }
};

/// Maps the raw target to the space a model is fitted in: optional linear
/// detrending, then optional min-max scaling, both fitted on one segment.
struct TargetMap {
    std::optional<TrendModel> trend;
    std::optional<ScalingParams> scaling;

    double forward(double y, Date d) const
    {
        if (trend)
            y -= trend->at(d);
        return scaling ? scaling->scale(y) : y;
    }
    double inverse(double v, Date d) const
    {
        if (scaling)
            v = scaling->unscale(v);
        return trend ? v + trend->at(d) : v;
    }
};

struct FamilyResult {
    std::string family;
    std::optional<GridSearchResult> grid;
    std::string best_label;
    double validation_rmse = std::numeric_limits<double>::quiet_NaN();
    RunSummary test;
};

struct ExperimentResult {
    std::vector<FamilyResult> families;
    std::map<std::string, std::string> files; // relative path -> content
    std::vector<std::string> warnings;
    std::string config_hash;
};

using Logger = std::function<void(const std::string&)>;

namespace detail {

inline Dataset load_dataset(const ExperimentConfig& cfg, Logger& log)
{
    const auto series = load_series(cfg.series_path.string(), cfg.date_field, cfg.value_field, cfg.unit);
    const auto docs = load_documents(cfg.docs_path.string());
    StopWords stop;
    if (!cfg.stopwords_path.empty())
        stop = load_stopwords(cfg.stopwords_path.string());
    std::optional<TimeSeries> temperature, wind;
    if (cfg.wants("benchmark")) {
        temperature = load_series(cfg.temperature_path.string(), cfg.date_field, cfg.covariate_field, Unit::celsius);
        wind = load_series(cfg.wind_path.string(), cfg.date_field, cfg.covariate_field, Unit::metre_per_second);
    }
    Dataset ds;
    ds.unit = series.unit();
    std::size_t d = 0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const Date day = series.dates()[i];
        while (d < docs.size() && docs[d].date < day)
            ++d;
        if (d == docs.size() || docs[d].date != day) {
            ++ds.dropped;
            continue;
        }
        ds.dates.push_back(day);
        ds.y.push_back(series.values()[i]);
        ds.tokens.push_back(preprocess(docs[d].text, stop));
    }
    if (ds.dates.empty())
        throw SpecError("no day has both a series value and a document");
    if (ds.dropped)
        log("warning: " + std::to_string(ds.dropped) + " series days have no document and were dropped");
    if (temperature)
        ds.covariates = benchmark_features(ds.dates, *temperature, *wind);
    return ds;
}

inline TargetMap fit_target_map(const Dataset& ds, Segment fit, bool detrend, bool scale)
{
    TargetMap m;
    if (detrend) {
        const TimeSeries s({ds.dates.begin() + static_cast<std::ptrdiff_t>(fit.begin),
                            ds.dates.begin() + static_cast<std::ptrdiff_t>(fit.end)},
                           {ds.y.begin() + static_cast<std::ptrdiff_t>(fit.begin),
                            ds.y.begin() + static_cast<std::ptrdiff_t>(fit.end)});
        m.trend = fit_linear_trend(s);
    }
    if (scale) {
        std::vector<double> v;
        for (std::size_t i = fit.begin; i < fit.end; ++i)
            v.push_back(m.trend ? ds.y[i] - m.trend->at(ds.dates[i]) : ds.y[i]);
        m.scaling = fit_scaling(v);
    }
    return m;
}

inline std::vector<double> mapped_target(const Dataset& ds, const TargetMap& m, Segment s)
{
    std::vector<double> out;
    for (std::size_t i = s.begin; i < s.end; ++i)
        out.push_back(m.forward(ds.y[i], ds.dates[i]));
    return out;
}

inline std::vector<double> unmap(const Dataset& ds, const TargetMap& m, Segment s, std::span<const double> v)
{
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(m.inverse(v[i], ds.dates[s.begin + i]));
    return out;
}

inline std::vector<double> actual(const Dataset& ds, Segment s)
{
    return {ds.y.begin() + static_cast<std::ptrdiff_t>(s.begin), ds.y.begin() + static_cast<std::ptrdiff_t>(s.end)};
}

inline Matrix rows_of(const Matrix& X, Segment s)
{
    std::vector<std::size_t> r(s.size());
    std::iota(r.begin(), r.end(), s.begin);
    return X.select_rows(r);
}

inline std::string join_layers(std::span<const std::size_t> layers)
{
    if (layers.empty())
        return "none";
    std::string s;
    for (auto l : layers)
        s += (s.empty() ? "" : "x") + std::to_string(l);
    return s;
}

inline std::string predictions_csv(const Dataset& ds, Segment s, const RunSummary& r)
{
    std::string out = "date,actual,predicted";
    for (std::size_t b = 0; b < r.predictions.size(); ++b)
        out += ",run" + std::to_string(b);
    out += '\n';
    for (std::size_t i = 0; i < s.size(); ++i) {
        double m = 0.0;
        for (const auto& p : r.predictions)
            m += p[i];
        m /= static_cast<double>(r.predictions.size());
        out += format_date(ds.dates[s.begin + i]) + "," + format_double(ds.y[s.begin + i]) + "," + format_double(m);
        for (const auto& p : r.predictions)
            out += "," + format_double(p[i]);
        out += '\n';
    }
    return out;
}

inline std::vector<double> mean_prediction(const RunSummary& r)
{
    std::vector<double> m(r.predictions.front().size(), 0.0);
    for (const auto& p : r.predictions)
        for (std::size_t i = 0; i < m.size(); ++i)
            m[i] += p[i];
    for (auto& v : m)
        v /= static_cast<double>(r.predictions.size());
    return m;
}

inline std::string ranked_words_csv(std::span<const std::string> words)
{
    std::string out = "rank,word\n";
    for (std::size_t i = 0; i < words.size(); ++i)
        out += std::to_string(i + 1) + "," + words[i] + "\n";
    return out;
}

/// Word keys shared by every forest so rankings do not depend on column order.
inline std::vector<std::uint64_t> word_keys(std::span<const std::string> words)
{
    std::vector<std::uint64_t> k;
    for (const auto& w : words)
        k.push_back(fnv1a(w));
    return k;
}

struct NeuralCell {
    std::string label;
    TrainConfig train;
    MlpArchitecture mlp;
    GruArchitecture gru;
};

inline TrainConfig base_train_config(const ExperimentConfig& cfg, double lr, const std::string& optimizer)
{
    TrainConfig t;
    t.optimizer = parse_optimizer(optimizer);
    t.learning_rate = lr;
    t.momentum = cfg.momentum;
    t.batch_size = cfg.batch_size;
    t.epochs = cfg.epochs;
    return t;
}

inline std::vector<NeuralCell> mlp_cells(const ExperimentConfig& cfg, std::size_t input_dim)
{
    std::vector<NeuralCell> cells;
    for (const auto& h : cfg.mlp.hidden)
        for (double drop : cfg.mlp.dropout)
            for (double lr : cfg.mlp.learning_rate)
                for (const auto& opt : cfg.mlp.optimizer) {
                    NeuralCell c;
                    c.train = base_train_config(cfg, lr, opt);
                    c.mlp = {input_dim, h, drop, OutputActivation::sigmoid};
                    c.label = "hidden=" + join_layers(h) + " dropout=" + format_double(drop) +
                              " lr=" + format_double(lr) + " optimizer=" + opt;
                    cells.push_back(std::move(c));
                }
    return cells;
}

inline std::vector<NeuralCell> gru_cells(const ExperimentConfig& cfg, std::size_t vocab_size)
{
    std::vector<NeuralCell> cells;
    for (auto q : cfg.gru.embedding_dim)
        for (auto h : cfg.gru.hidden)
            for (const auto& dense : cfg.gru.dense)
                for (double drop : cfg.gru.dropout)
                    for (double lr : cfg.gru.learning_rate)
                        for (const auto& opt : cfg.gru.optimizer) {
                            NeuralCell c;
                            c.train = base_train_config(cfg, lr, opt);
                            c.gru = {vocab_size, q, h, dense, drop};
                            c.label = "embedding=" + std::to_string(q) + " hidden=" + std::to_string(h) +
                                      " dense=" + join_layers(dense) + " dropout=" + format_double(drop) +
                                      " lr=" + format_double(lr) + " optimizer=" + opt;
                            cells.push_back(std::move(c));
                        }
    return cells;
}

} // namespace detail

/// Runs the configured experiment and returns every output file in memory;
/// write_outputs() stores them. Identical configs and inputs give identical
/// bytes regardless of the number of workers.
class Experiment {
public:
    Experiment(ExperimentConfig cfg, Logger log = {}) : cfg_(std::move(cfg)), log_(std::move(log))
    {
        if (!log_)
            log_ = [](const std::string&) {};
    }

    ExperimentResult run()
    {
        stage_ = "loading inputs";
        ds_ = detail::load_dataset(cfg_, log_);
        res_.config_hash = input_hash();
        if (cfg_.preset == "embedding-analysis")
            run_embedding_analysis();
        else
            run_standard();
        if (!res_.warnings.empty()) {
            std::string w;
            for (const auto& s : res_.warnings)
                w += s + "\n";
            res_.files["warnings.txt"] = w;
        }
        return std::move(res_);
    }

    const std::string& stage() const noexcept { return stage_; }

private:
    // -- shared pieces ------------------------------------------------------

    std::string input_hash() const
    {
        std::uint64_t h = fnv1a(version_string);
        h = fnv1a(cfg_.source, h);
        for (const auto& p : {cfg_.series_path, cfg_.docs_path, cfg_.stopwords_path, cfg_.temperature_path,
                              cfg_.wind_path})
            if (!p.empty())
                h = fnv1a(read_file(p.string()), h);
        return hex64(h);
    }

    void warn(const std::string& w)
    {
        std::lock_guard lock(warn_mutex_);
        res_.warnings.push_back(w);
        log_("warning: " + w);
    }

    std::uint64_t family_seed(std::string_view family) const { return derive_seed(cfg_.seed, fnv1a(family)); }

    MetricOptions metric_options() const { return {cfg_.mape_guard}; }

    void build_vocabulary_and_tfidf(Segment fit)
    {
        stage_ = "encoding";
        const std::span<const TokenList> fit_docs(ds_.tokens.data() + fit.begin, fit.size());
        vocab_ = build_vocabulary(fit_docs, cfg_.vocab);
        words_ = vocab_.words();
        const auto tf = fit_tfidf(fit_docs, vocab_);
        X_ = transform_tfidf(ds_.tokens, vocab_, tf.model);
        const auto stats = corpus_stats(fit_docs, vocab_);
        std::string v = "index,word,total_count,doc_count\n";
        for (std::size_t k = 0; k < vocab_.size(); ++k) {
            const auto& e = vocab_.entries()[k];
            v += std::to_string(k + 1) + "," + e.word + "," + std::to_string(e.total_count) + "," +
                 std::to_string(e.doc_count) + "\n";
        }
        res_.files["vocabulary.csv"] = v;
        res_.files["corpus_stats.csv"] =
            "documents,vocabulary_before_filter,vocabulary_after_filter,max_length,mean_length\n" +
            std::to_string(stats.documents) + "," + std::to_string(stats.vocabulary_before_filter) + "," +
            std::to_string(stats.vocabulary_after_filter) + "," + std::to_string(stats.max_length) + "," +
            format_fixed(stats.mean_length, 6) + "\n";
        log_("vocabulary: " + std::to_string(vocab_.size()) + " words kept of " +
             std::to_string(stats.vocabulary_before_filter));
    }

    /// Ranks words by RF-OOB importance on the fit segment and picks V*.
    void select_words(Segment fit)
    {
        stage_ = "feature selection";
        if (cfg_.selection_B == 0) {
            selected_ = words_;
            return;
        }
        const auto tmap = detail::fit_target_map(ds_, fit, cfg_.detrend, false);
        SelectionOptions opt;
        opt.B = cfg_.selection_B;
        opt.max_k = cfg_.selection_max_k;
        opt.forest = cfg_.selection_forest;
        opt.seed = family_seed("selection");
        const auto keys = detail::word_keys(words_);
        const auto sel = select_features(detail::rows_of(X_, fit), detail::mapped_target(ds_, tmap, fit), opt, keys);
        ranking_.clear();
        for (auto j : sel.ranked)
            ranking_.push_back(words_[j]);
        selected_.assign(ranking_.begin(), ranking_.begin() + static_cast<std::ptrdiff_t>(sel.v_star));
        res_.files["feature_selection.csv"] = serialize_selection_curve(sel);
        std::string s = "rank,word,importance,std,selected\n";
        for (std::size_t r = 0; r < sel.ranked.size(); ++r) {
            const auto j = sel.ranked[r];
            s += std::to_string(r + 1) + "," + words_[j] + "," + format_double(sel.importance_mean[j]) + "," +
                 format_double(sel.importance_std[j]) + "," + (r < sel.v_star ? "1" : "0") + "\n";
        }
        res_.files["selected_words.csv"] = s;
        log_("feature selection: V* = " + std::to_string(sel.v_star));
    }

    std::vector<std::size_t> columns_of(std::span<const std::string> words) const
    {
        std::vector<std::size_t> cols;
        for (const auto& w : words)
            cols.push_back(static_cast<std::size_t>(vocab_.index(w) - 1));
        return cols;
    }

    SequenceSet sequences(const Vocabulary& sub, Segment s, std::span<const double> y, std::size_t S) const
    {
        std::vector<TokenSequence> seqs;
        for (std::size_t i = s.begin; i < s.end; ++i)
            seqs.push_back(to_ids(ds_.tokens[i], sub, IdMode::training, ds_.dates[i]));
        return {pad_batch(seqs, S), {y.begin(), y.end()}};
    }

    std::size_t sequence_length(const Vocabulary& sub, Segment fit) const
    {
        if (cfg_.max_length)
            return cfg_.max_length;
        std::size_t S = 1;
        for (std::size_t i = fit.begin; i < fit.end; ++i)
            S = std::max(S, to_ids(ds_.tokens[i], sub, IdMode::training).length());
        return S;
    }

    // -- standard protocol --------------------------------------------------

    void run_standard()
    {
        const auto idx = split_indices(ds_.dates, cfg_.split);
        if (idx.train_count < 2 || idx.validation_count < 1 || idx.test_count < 1)
            throw SpecError("split: every segment needs data (train " + std::to_string(idx.train_count) +
                            ", validation " + std::to_string(idx.validation_count) + ", test " +
                            std::to_string(idx.test_count) + ")");
        train_ = {0, idx.train_count};
        val_ = {idx.train_count, idx.train_count + idx.validation_count};
        full_ = {0, val_.end};
        test_ = {val_.end, ds_.y.size()};
        log_("split: train " + std::to_string(train_.size()) + ", validation " + std::to_string(val_.size()) +
             ", test " + std::to_string(test_.size()));

        build_vocabulary_and_tfidf(full_);
        const bool needs_selection = cfg_.wants("rf_sel") || cfg_.wants("mlp") || cfg_.wants("gru");
        if (needs_selection)
            select_words(full_);

        for (const auto& family : cfg_.models) {
            stage_ = "model " + family;
            log_("fitting " + family);
            if (family == "lasso")
                add(run_lasso());
            else if (family == "rf")
                add(run_forest("rf", words_));
            else if (family == "rf_sel")
                add(run_forest("rf_sel", selected_));
            else if (family == "mlp")
                add(run_mlp());
            else if (family == "gru")
                add(run_gru());
            else if (family == "benchmark")
                add(run_benchmark());
        }
        stage_ = "reporting";
        if (cfg_.aggregate)
            add_aggregate();
        write_reports();
        write_overlap();
    }

    void add(FamilyResult r)
    {
        res_.files["predictions_" + r.family + ".csv"] = detail::predictions_csv(ds_, test_, r.test);
        if (r.grid)
            res_.files["leaderboard_" + r.family + ".csv"] = serialize_leaderboard(*r.grid);
        if (r.grid)
            for (const auto& w : r.grid->warnings)
                warn(r.family + ": " + w);
        log_(r.family + ": test RMSE " + format_fixed(r.test.mean.rmse, 4) + ", MAPE " +
             format_fixed(r.test.mean.mape, 3) + "%");
        res_.families.push_back(std::move(r));
    }

    template <class Predict>
    RunSummary test_runs(std::string_view family, Predict&& predict)
    {
        return multi_run(cfg_.runs, derive_seed(family_seed(family), 1), detail::actual(ds_, test_),
                         std::forward<Predict>(predict), metric_options());
    }

    FamilyResult run_lasso()
    {
        FamilyResult r{"lasso", {}, {}, {}, {}};
        const auto tmap_tune = detail::fit_target_map(ds_, train_, cfg_.detrend, false);
        const auto Xtr = detail::rows_of(X_, train_);
        const auto ytr = detail::mapped_target(ds_, tmap_tune, train_);
        const auto Xval = detail::rows_of(X_, val_);
        const auto lambdas = lasso_lambda_grid(lasso_lambda_max(Xtr, ytr), cfg_.lasso_lambdas, cfg_.lasso_ratio);
        const auto path = fit_lasso_path(Xtr, ytr, lambdas);
        std::vector<std::size_t> cells(lambdas.size());
        std::iota(cells.begin(), cells.end(), std::size_t{0});
        const auto yval = detail::actual(ds_, val_);
        r.grid = grid_search<std::size_t>(
            cells,
            [&](std::size_t k) {
                if (!path[k].converged)
                    warn("lasso: no convergence at lambda " + format_double(lambdas[k]));
                return rmse(yval, detail::unmap(ds_, tmap_tune, val_, predict_lasso(path[k].model, Xval)));
            },
            [&](std::size_t k) { return "lambda=" + format_double(lambdas[k]); });
        const double lambda = lambdas[r.grid->best];
        r.best_label = r.grid->leaderboard[r.grid->best].label;
        r.validation_rmse = r.grid->leaderboard[r.grid->best].validation_rmse;

        const auto tmap = detail::fit_target_map(ds_, full_, cfg_.detrend, false);
        const auto fit = fit_lasso(detail::rows_of(X_, full_), detail::mapped_target(ds_, tmap, full_), lambda);
        if (!fit.converged)
            warn("lasso: final fit did not converge");
        const auto pred = detail::unmap(ds_, tmap, test_, predict_lasso(fit.model, detail::rows_of(X_, test_)));
        r.test = test_runs("lasso", [&](std::uint64_t) { return pred; });
        lasso_ = fit.model;

        res_.files["lasso_coefficients.csv"] = serialize_lasso_coefficients(fit.model, words_);
        const auto fx = lasso_word_effects(fit.model, words_, cfg_.top_k);
        if (fx.empty)
            warn("lasso: every coefficient is zero; the effects report is empty");
        std::string effects = "sign,rank,word,beta\n";
        for (const auto& w : fx.positive)
            effects += "positive," + std::to_string(w.rank) + "," + w.word + "," + format_double(w.score) + "\n";
        for (const auto& w : fx.negative)
            effects += "negative," + std::to_string(w.rank) + "," + w.word + "," + format_double(w.score) + "\n";
        res_.files["lasso_effects.csv"] = effects;
        return r;
    }

    static std::vector<ForestParams> forest_cells(const RfGrid& g, std::size_t p)
    {
        std::vector<ForestParams> cells;
        for (auto t : g.n_trees)
            for (const auto& m : g.mtry)
                for (auto leaf : g.min_leaf)
                    for (auto depth : g.max_depth)
                        cells.push_back({t, static_cast<int>(depth), leaf, resolve_mtry(parse_mtry_rule(m), p), true});
        return cells;
    }

    static std::string forest_label(const ForestParams& f)
    {
        return "trees=" + std::to_string(f.n_trees) + " mtry=" + std::to_string(f.mtry) +
               " min_leaf=" + std::to_string(f.min_leaf) + " max_depth=" + std::to_string(f.max_depth);
    }

    FamilyResult run_forest(const std::string& family, const std::vector<std::string>& feature_words)
    {
        FamilyResult r{family, {}, {}, {}, {}};
        const auto cols = columns_of(feature_words);
        const auto keys = detail::word_keys(feature_words);
        const auto Xs = X_.select_cols(cols);
        const auto tmap_tune = detail::fit_target_map(ds_, train_, cfg_.detrend, false);
        const auto Xtr = detail::rows_of(Xs, train_), Xval = detail::rows_of(Xs, val_);
        const auto ytr = detail::mapped_target(ds_, tmap_tune, train_);
        const auto yval = detail::actual(ds_, val_);
        const auto cells = forest_cells(cfg_.rf, cols.size());
        const auto seed = family_seed(family);
        r.grid = grid_search<ForestParams>(
            cells,
            [&](const ForestParams& p) {
                const auto f = fit_forest(Xtr, ytr, p, derive_seed(seed, 0), keys);
                return rmse(yval, detail::unmap(ds_, tmap_tune, val_, predict_forest(f, Xval)));
            },
            forest_label);
        const auto best = cells[r.grid->best];
        r.best_label = forest_label(best);
        r.validation_rmse = r.grid->leaderboard[r.grid->best].validation_rmse;

        const auto tmap = detail::fit_target_map(ds_, full_, cfg_.detrend, false);
        const auto Xfull = detail::rows_of(Xs, full_), Xtest = detail::rows_of(Xs, test_);
        const auto yfull = detail::mapped_target(ds_, tmap, full_);
        std::vector<ImportanceRun> imps(cfg_.runs);
        const auto base = derive_seed(seed, 1);
        r.test = test_runs(family, [&](std::uint64_t s) {
            const auto f = fit_forest(Xfull, yfull, best, s, keys);
            imps[s - base] = {feature_words, oob_importance(f, Xfull, yfull, derive_seed(s, 7)).normalized};
            return detail::unmap(ds_, tmap, test_, predict_forest(f, Xtest));
        });
        const auto report = rf_word_importance(imps, feature_words.size());
        res_.files["importance_" + family + ".csv"] = serialize_word_reports(report, "importance");
        if (family == "rf")
            for (const auto& w : report)
                rf_ranking_.push_back(w.word);
        return r;
    }

    template <class Model, class MakeData>
    FamilyResult run_neural(const std::string& family, const std::vector<detail::NeuralCell>& cells,
                            MakeData&& make_data, std::function<Model(const detail::NeuralCell&, std::uint64_t)> make)
    {
        FamilyResult r{family, {}, {}, {}, {}};
        const auto seed = family_seed(family);
        const auto tmap_tune = detail::fit_target_map(ds_, train_, cfg_.detrend, true);
        const auto train_set = make_data(train_, detail::mapped_target(ds_, tmap_tune, train_));
        const auto val_set = make_data(val_, detail::mapped_target(ds_, tmap_tune, val_));
        const auto yval = detail::actual(ds_, val_);
        std::vector<int> best_epoch(cells.size(), cfg_.epochs);
        std::vector<std::vector<LossPoint>> curves(cells.size());
        r.grid = grid_search<detail::NeuralCell>(
            cells,
            [&](const detail::NeuralCell& c) {
                const auto k = static_cast<std::size_t>(&c - cells.data());
                auto tc = c.train;
                tc.seed = derive_seed(seed, 0, k);
                auto tr = train(make(c, derive_seed(seed, 2, k)), train_set, &val_set, tc);
                best_epoch[k] = std::max(1, tr.best_epoch);
                curves[k] = tr.curve;
                return rmse(yval, detail::unmap(ds_, tmap_tune, val_, tr.model.predict(val_set)));
            },
            [](const detail::NeuralCell& c) { return c.label; });
        const auto& best = cells[r.grid->best];
        r.best_label = best.label + " epochs=" + std::to_string(best_epoch[r.grid->best]);
        r.validation_rmse = r.grid->leaderboard[r.grid->best].validation_rmse;
        res_.files["loss_curve_" + family + ".csv"] = serialize_loss_curve(curves[r.grid->best]);

        // Retrain on train + validation for the epoch count chosen on validation.
        const auto tmap = detail::fit_target_map(ds_, full_, cfg_.detrend, true);
        const auto full_set = make_data(full_, detail::mapped_target(ds_, tmap, full_));
        const auto test_set = make_data(test_, std::vector<double>(test_.size(), 0.0));
        std::vector<Model> models(cfg_.runs);
        const auto base = derive_seed(seed, 1);
        r.test = test_runs(family, [&](std::uint64_t s) {
            auto tc = best.train;
            tc.seed = s;
            tc.epochs = best_epoch[r.grid->best];
            auto tr = train(make(best, derive_seed(s, 2)), full_set, nullptr, tc);
            models[s - base] = tr.model;
            return detail::unmap(ds_, tmap, test_, tr.model.predict(test_set));
        });
        auto checkpoint = models.front().to_json();
        checkpoint["train_config"] = train_config_to_json(best.train);
        res_.files["checkpoint_" + family + ".json"] = checkpoint.dump(1) + "\n";
        if constexpr (std::is_same_v<Model, GruModel>)
            gru_models_ = std::move(models);
        return r;
    }

    FamilyResult run_mlp()
    {
        const auto cols = columns_of(selected_);
        const auto Xs = X_.select_cols(cols);
        auto make_data = [&](Segment s, std::vector<double> y) { return TabularSet{detail::rows_of(Xs, s), std::move(y)}; };
        return run_neural<MlpModel>("mlp", detail::mlp_cells(cfg_, cols.size()), make_data,
                                    [](const detail::NeuralCell& c, std::uint64_t s) { return MlpModel(c.mlp, s); });
    }

    FamilyResult run_gru()
    {
        sub_vocab_ = vocab_.restrict_to(selected_);
        const auto S = sequence_length(sub_vocab_, full_);
        auto make_data = [&](Segment s, std::vector<double> y) { return sequences(sub_vocab_, s, y, S); };
        auto r = run_neural<GruModel>("gru", detail::gru_cells(cfg_, sub_vocab_.size()), make_data,
                                      [](const detail::NeuralCell& c, std::uint64_t s) { return GruModel(c.gru, s); });
        write_embedding_reports(sub_vocab_.words(), "");
        return r;
    }

    FamilyResult run_benchmark()
    {
        FamilyResult r{"benchmark", {}, "four numeric covariates", std::numeric_limits<double>::quiet_NaN(), {}};
        const auto& C = *ds_.covariates;
        const auto tmap = detail::fit_target_map(ds_, full_, cfg_.detrend, false);
        const auto Xfull = detail::rows_of(C, full_), Xtest = detail::rows_of(C, test_);
        const auto yfull = detail::mapped_target(ds_, tmap, full_);
        r.test = test_runs("benchmark", [&](std::uint64_t s) {
            return detail::unmap(ds_, tmap, test_, predict_forest(fit_forest(Xfull, yfull, cfg_.benchmark, s), Xtest));
        });
        return r;
    }

    /// Average of the two text-based families with the lowest validation RMSE.
    void add_aggregate()
    {
        std::vector<const FamilyResult*> ranked;
        for (const auto& f : res_.families)
            if (std::isfinite(f.validation_rmse))
                ranked.push_back(&f);
        if (ranked.size() < 2)
            return;
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const auto* a, const auto* b) { return a->validation_rmse < b->validation_rmse; });
        const auto& a = *ranked[0];
        const auto& b = *ranked[1];
        std::vector<std::vector<double>> preds(cfg_.runs);
        std::vector<Metrics> runs;
        const auto y = detail::actual(ds_, test_);
        for (std::size_t k = 0; k < cfg_.runs; ++k) {
            preds[k] = aggregate(a.test.predictions[k], b.test.predictions[k]);
            runs.push_back(evaluate(y, preds[k], metric_options()));
        }
        FamilyResult r{"agg", {}, a.family + "+" + b.family, std::numeric_limits<double>::quiet_NaN(), {}};
        r.test = summarize_runs(std::move(runs), std::move(preds));
        add(std::move(r));
    }

    void write_reports()
    {
        std::string m = "model,B,best_config,validation_rmse,mape,mape_std,rmse,rmse_std,mae,mae_std,r2,r2_std\n";
        std::string d = "model,mean,std,ks_statistic,ks_p_value,ks_normal_5pct,lag1_autocorr,degenerate\n";
        const auto y = detail::actual(ds_, test_);
        for (const auto& f : res_.families) {
            const auto& s = f.test;
            auto fx = [](double v) { return format_fixed(v, 6); };
            m += f.family + "," + std::to_string(s.B()) + ",\"" + f.best_label + "\"," +
                 (std::isfinite(f.validation_rmse) ? fx(f.validation_rmse) : std::string()) + "," + fx(s.mean.mape) +
                 "," + fx(s.std.mape) + "," + fx(s.mean.rmse) + "," + fx(s.std.rmse) + "," + fx(s.mean.mae) + "," +
                 fx(s.std.mae) + "," + fx(s.mean.r2) + "," + fx(s.std.r2) + "\n";
            if (y.size() < 8)
                continue;
            const auto diag = residual_diagnostics(y, detail::mean_prediction(s));
            if (diag.degenerate)
                warn(f.family + ": residuals are constant; the normal fit is degenerate");
            d += f.family + "," + fx(diag.mean) + "," + fx(diag.std) + "," + fx(diag.ks_statistic) + "," +
                 fx(diag.ks_p_value) + "," + (diag.ks_normal_at_5pct ? "1" : "0") + "," + fx(diag.lag1_autocorr) +
                 "," + (diag.degenerate ? "1" : "0") + "\n";
            std::string qq = "theoretical,empirical\n";
            for (const auto& [t, e] : diag.qq)
                qq += format_double(t) + "," + format_double(e) + "\n";
            res_.files["qq_" + f.family + ".csv"] = qq;
        }
        res_.files["metrics.csv"] = m;
        res_.files["diagnostics.csv"] = d;
    }

    void write_embedding_reports(const std::vector<std::string>& words, const std::string& prefix)
    {
        std::vector<Matrix> E;
        for (std::size_t b = 0; b < gru_models_.size(); ++b) {
            E.push_back(gru_models_[b].embedding_matrix());
            res_.files[prefix + "embedding_run" + std::to_string(b) + ".csv"] = serialize_embedding(words, E.back());
        }
        const auto norms = norm_ranking(words, E, words.size());
        res_.files[prefix + "norm_ranking.csv"] = serialize_norm_ranking(norms);
        for (const auto& w : norms)
            norm_list_.push_back(w.word);
        for (const auto& q : cfg_.queries) {
            if (vocab_lookup(words, q)) {
                const auto n = nearest_words(q, words, E, cfg_.top_k, probes_in(words));
                res_.files[prefix + "neighbors_" + q + ".csv"] = serialize_neighbors(n);
            } else {
                warn("interpret: query word '" + q + "' is not in the model vocabulary");
            }
        }
    }

    static bool vocab_lookup(const std::vector<std::string>& words, const std::string& w)
    {
        return std::find(words.begin(), words.end(), w) != words.end();
    }

    std::vector<std::string> probes_in(const std::vector<std::string>& words)
    {
        std::vector<std::string> out;
        for (const auto& p : cfg_.probes)
            if (vocab_lookup(words, p))
                out.push_back(p);
            else
                warn("interpret: probe word '" + p + "' is not in the model vocabulary");
        return out;
    }

    void write_overlap()
    {
        if (rf_ranking_.empty() || !lasso_ || norm_list_.empty())
            return;
        std::vector<std::string> lasso_list;
        {
            std::vector<std::size_t> order(words_.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                const double fa = std::abs(lasso_->beta[a]), fb = std::abs(lasso_->beta[b]);
                return fa != fb ? fa > fb : words_[a] < words_[b];
            });
            for (auto j : order)
                lasso_list.push_back(words_[j]);
        }
        const std::size_t k = std::min({std::size_t{50}, rf_ranking_.size(), lasso_list.size(), norm_list_.size()});
        const auto v = selection_overlap(rf_ranking_, lasso_list, norm_list_, k);
        res_.files["overlap.csv"] = serialize_venn(v, "rf", "lasso", "norm");
    }

    // -- enlarged-vocabulary embedding study ---------------------------------

    void run_embedding_analysis()
    {
        full_ = {0, ds_.y.size()};
        train_ = full_;
        test_ = full_;
        build_vocabulary_and_tfidf(full_);
        select_words(full_);
        const std::size_t V = std::min(cfg_.vocab_max_words, words_.size());
        const auto& order = cfg_.selection_B ? ranking_ : words_;
        const std::vector<std::string> keep(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(V));
        sub_vocab_ = vocab_.restrict_to(keep);
        const auto S = sequence_length(sub_vocab_, full_);
        const auto tmap = detail::fit_target_map(ds_, full_, cfg_.detrend, true);
        const auto data = sequences(sub_vocab_, full_, detail::mapped_target(ds_, tmap, full_), S);
        const auto cell = detail::gru_cells(cfg_, sub_vocab_.size()).front();
        stage_ = "embedding training";
        log_("training " + std::to_string(cfg_.runs) + " GRU models on " + std::to_string(V) + " words");
        gru_models_.assign(cfg_.runs, GruModel{});
        const auto seed = family_seed("embedding-analysis");
        parallel_for(cfg_.runs, [&](std::size_t b) {
            auto tc = cell.train;
            tc.seed = derive_seed(seed, b);
            gru_models_[b] = train(GruModel(cell.gru, derive_seed(seed, b, 2)), data, nullptr, tc).model;
        });
        stage_ = "reporting";
        write_embedding_reports(sub_vocab_.words(), "");
        res_.files["vocabulary_used.csv"] = detail::ranked_words_csv(sub_vocab_.words());
    }

    ExperimentConfig cfg_;
    Logger log_;
    std::string stage_;
    Dataset ds_;
    ExperimentResult res_;
    Segment train_, val_, full_, test_;
    Vocabulary vocab_, sub_vocab_;
    std::vector<std::string> words_, ranking_, selected_;
    Matrix X_;
    std::optional<LassoModel> lasso_;
    std::vector<std::string> rf_ranking_, norm_list_;
    std::vector<GruModel> gru_models_;
    std::mutex warn_mutex_;
};

/// Writes every output plus manifest.json listing each file with its hash.
inline void write_outputs(const std::filesystem::path& dir, const ExperimentResult& r, const ExperimentConfig& cfg,
                          double seconds)
{
    std::filesystem::create_directories(dir);
    nlohmann::json files = nlohmann::json::object();
    for (const auto& [name, content] : r.files) {
        write_file((dir / name).string(), content);
        files[name] = hex64(fnv1a(content));
    }
    nlohmann::json manifest{{"version", version_string},
                            {"name", cfg.name},
                            {"preset", cfg.preset},
                            {"config_hash", r.config_hash},
                            {"seed", cfg.seed},
                            {"runs", cfg.runs},
                            {"outputs", files},
                            {"warnings", r.warnings},
                            {"timing_seconds", seconds}};
    write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
}

} // namespace textcast
