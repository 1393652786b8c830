#pragma once

#include <filesystem>
#include <map>
#include <set>

#include "textcast/forest.hpp"
#include "textcast/neural.hpp"
#include "textcast/synth.hpp"

namespace textcast {

/// `key = value` lines; `#` starts a comment. Every lookup is recorded so
/// that keys nobody asked for can be reported as schema errors.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::string_view text)
    {
        KeyValueConfig c;
        std::size_t line_no = 0;
        for (const auto& raw : split(text, '\n')) {
            ++line_no;
            std::string_view line = raw;
            if (auto hash = line.find('#'); hash != std::string_view::npos)
                line = line.substr(0, hash);
            line = trim(line);
            if (line.empty())
                continue;
            const auto eq = line.find('=');
            if (eq == std::string_view::npos)
                throw ParseError("expected 'key = value'", line_no);
            const std::string key(trim(line.substr(0, eq)));
            if (key.empty())
                throw ParseError("empty key", line_no);
            if (!c.entries_.emplace(key, std::string(trim(line.substr(eq + 1)))).second)
                throw ParseError("duplicate key '" + key + "'", line_no);
        }
        return c;
    }

    bool has(const std::string& key) const
    {
        used_.insert(key);
        return entries_.contains(key);
    }

    std::string get(const std::string& key, const std::string& fallback) const
    {
        used_.insert(key);
        auto it = entries_.find(key);
        return it == entries_.end() ? fallback : it->second;
    }

    std::string require(const std::string& key) const
    {
        used_.insert(key);
        auto it = entries_.find(key);
        if (it == entries_.end() || it->second.empty())
            throw ConfigError("missing required key '" + key + "'");
        return it->second;
    }

    double get_double(const std::string& key, double fallback) const
    {
        if (!has(key))
            return fallback;
        return to_double(key, entries_.at(key));
    }

    long get_int(const std::string& key, long fallback) const
    {
        if (!has(key))
            return fallback;
        const auto& v = entries_.at(key);
        long out = 0;
        const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc() || p != v.data() + v.size())
            throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
        return out;
    }

    std::size_t get_count(const std::string& key, std::size_t fallback) const
    {
        const long v = get_int(key, static_cast<long>(fallback));
        if (v < 0)
            throw ConfigError("key '" + key + "' must be non-negative");
        return static_cast<std::size_t>(v);
    }

    bool get_bool(const std::string& key, bool fallback) const
    {
        if (!has(key))
            return fallback;
        const auto& v = entries_.at(key);
        if (v == "true" || v == "yes" || v == "on" || v == "1")
            return true;
        if (v == "false" || v == "no" || v == "off" || v == "0")
            return false;
        throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
    }

    /// Comma-separated values; empty items are dropped.
    std::vector<std::string> get_list(const std::string& key, std::vector<std::string> fallback = {}) const
    {
        if (!has(key))
            return fallback;
        std::vector<std::string> out;
        for (const auto& item : split(entries_.at(key), ','))
            if (auto t = trim(item); !t.empty())
                out.emplace_back(t);
        return out;
    }

    std::vector<double> get_double_list(const std::string& key, std::vector<double> fallback) const
    {
        if (!has(key))
            return fallback;
        std::vector<double> out;
        for (const auto& item : get_list(key))
            out.push_back(to_double(key, item));
        if (out.empty())
            throw ConfigError("key '" + key + "' needs at least one value");
        return out;
    }

    std::vector<std::string> unused_keys() const
    {
        std::vector<std::string> out;
        for (const auto& [k, v] : entries_)
            if (!used_.contains(k))
                out.push_back(k);
        return out;
    }

    void reject_unused() const
    {
        const auto extra = unused_keys();
        if (!extra.empty())
            throw ConfigError("unknown key '" + extra.front() + "'");
    }

    const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

private:
    static double to_double(const std::string& key, const std::string& v)
    {
        try {
            return parse_double(v);
        } catch (const Error&) {
            throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
        }
    }

    std::map<std::string, std::string> entries_;
    mutable std::set<std::string> used_;
};

// ---------------------------------------------------------------------------
// Synthetic data specification
// ---------------------------------------------------------------------------

/// Starts from the default spec; `clusters = a, b` replaces the word groups,
/// each given by `cluster.<name>.kind` and `cluster.<name>.words = w:effect, ...`.
inline SynthSpec parse_synth_spec(std::string_view text)
{
    const auto kv = KeyValueConfig::parse(text);
    if (kv.get("schema", "1") != "1")
        throw ConfigError("schema: only version 1 is supported");
    SynthSpec s = default_synth_spec();
    s.n_days = kv.get_count("n_days", s.n_days);
    if (kv.has("start")) {
        try {
            s.start = parse_date(kv.require("start"));
        } catch (const ParseError& e) {
            throw ConfigError(std::string("key 'start': ") + e.what());
        }
    }
    s.base_level = kv.get_double("base_level", s.base_level);
    if (kv.has("noise_std") && kv.get("noise_std", "") != "auto")
        s.noise_std = kv.get_double("noise_std", 0.0);
    s.target_r2 = kv.get_double("target_r2", s.target_r2);
    s.words_per_doc = kv.get_count("words_per_doc", s.words_per_doc);
    s.base_rate = kv.get_double("base_rate", s.base_rate);
    s.peak_rate = kv.get_double("peak_rate", s.peak_rate);
    s.filler = kv.get_list("filler", s.filler);
    s.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long>(s.seed)));
    if (kv.has("clusters")) {
        s.clusters.clear();
        for (const auto& name : kv.get_list("clusters")) {
            WordCluster c{name, parse_cluster_kind(kv.require("cluster." + name + ".kind")), {}, {}};
            for (const auto& item : kv.get_list("cluster." + name + ".words")) {
                const auto colon = item.find(':');
                c.words.emplace_back(trim(item.substr(0, colon)));
                double effect = 0.0;
                if (colon != std::string::npos) {
                    try {
                        effect = parse_double(trim(item.substr(colon + 1)));
                    } catch (const Error&) {
                        throw ConfigError("key 'cluster." + name + ".words': bad effect in '" + item + "'");
                    }
                }
                c.effects.push_back(effect);
            }
            s.clusters.push_back(std::move(c));
        }
    }
    kv.reject_unused();
    try {
        s.validate();
    } catch (const SpecError& e) {
        throw ConfigError(e.what());
    }
    return s;
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& known_families()
{
    static const std::vector<std::string> f{"lasso", "rf", "rf_sel", "mlp", "gru", "benchmark"};
    return f;
}

struct RfGrid {
    std::vector<std::size_t> n_trees{100};
    std::vector<std::string> mtry{"third"};
    std::vector<std::size_t> min_leaf{5};
    std::vector<long> max_depth{-1};
};

struct MlpGrid {
    std::vector<std::vector<std::size_t>> hidden{{64}};
    std::vector<double> dropout{0.25};
    std::vector<double> learning_rate{1e-3};
    std::vector<std::string> optimizer{"adam"};
};

struct GruGrid {
    std::vector<std::size_t> embedding_dim{20};
    std::vector<std::size_t> hidden{32};
    std::vector<std::vector<std::size_t>> dense{{32}};
    std::vector<double> dropout{0.25};
    std::vector<double> learning_rate{1e-3};
    std::vector<std::string> optimizer{"adam"};
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::string preset = "standard"; // or "embedding-analysis"
    std::uint64_t seed = 0;

    std::filesystem::path series_path;
    std::string date_field = "date";
    std::string value_field = "value";
    Unit unit = Unit::unitless;
    bool detrend = false;
    std::optional<double> mape_guard;

    std::filesystem::path temperature_path, wind_path;
    std::string covariate_field = "value";
    std::filesystem::path docs_path;
    std::filesystem::path stopwords_path;

    SplitSpec split;
    VocabularyOptions vocab;
    std::size_t vocab_max_words = 300; // embedding-analysis vocabulary size

    std::vector<std::string> models;
    std::size_t runs = 10;
    bool aggregate = true;

    std::size_t selection_B = 10;
    std::size_t selection_max_k = 300;
    ForestParams selection_forest{100, -1, 5, 0, true};

    std::size_t lasso_lambdas = 50;
    double lasso_ratio = 1e-4;
    RfGrid rf;
    ForestParams benchmark{100, -1, 5, 0, true};
    MlpGrid mlp;
    GruGrid gru;
    int epochs = 100;
    std::size_t batch_size = 32;
    double momentum = 0.9;
    std::size_t max_length = 0; // 0: longest training sequence

    std::size_t top_k = 20;
    std::vector<std::string> queries;
    std::vector<std::string> probes;

    std::filesystem::path output_dir = "out";
    std::string source; // config text, hashed into the manifest

    bool wants(std::string_view family) const { return std::find(models.begin(), models.end(), family) != models.end(); }
};

namespace detail {

inline std::vector<std::size_t> parse_layers(const std::string& key, const std::string& v)
{
    std::vector<std::size_t> layers;
    if (v == "none" || v.empty())
        return layers;
    for (const auto& part : split(v, 'x')) {
        std::size_t n = 0;
        const auto t = trim(part);
        const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), n);
        if (ec != std::errc() || p != t.data() + t.size() || n == 0)
            throw ConfigError("key '" + key + "': bad layer list '" + v + "'");
        layers.push_back(n);
    }
    return layers;
}

inline std::vector<std::vector<std::size_t>> layer_grid(const KeyValueConfig& kv, const std::string& key,
                                                        std::vector<std::vector<std::size_t>> fallback)
{
    if (!kv.has(key))
        return fallback;
    std::vector<std::vector<std::size_t>> out;
    for (const auto& item : kv.get_list(key))
        out.push_back(parse_layers(key, item));
    if (out.empty())
        throw ConfigError("key '" + key + "' needs at least one value");
    return out;
}

template <class T>
std::vector<T> count_grid(const KeyValueConfig& kv, const std::string& key, std::vector<T> fallback)
{
    if (!kv.has(key))
        return fallback;
    std::vector<T> out;
    for (double v : kv.get_double_list(key, {})) {
        if (v != std::floor(v) || (std::is_unsigned_v<T> && v < 0))
            throw ConfigError("key '" + key + "': expected integers");
        out.push_back(static_cast<T>(v));
    }
    return out;
}

inline Date config_date(const KeyValueConfig& kv, const std::string& key)
{
    try {
        return parse_date(kv.require(key));
    } catch (const ParseError& e) {
        throw ConfigError("key '" + key + "': " + e.what());
    }
}

} // namespace detail

inline MtryRule parse_mtry_rule(std::string_view s)
{
    if (s == "sqrt")
        return MtryRule::sqrt;
    if (s == "third")
        return MtryRule::third;
    if (s == "all")
        return MtryRule::all;
    throw ConfigError("unknown mtry rule '" + std::string(s) + "'");
}

/// Relative paths are resolved against `base_dir`.
inline ExperimentConfig parse_experiment_config(std::string_view text, const std::filesystem::path& base_dir = {})
{
    const auto kv = KeyValueConfig::parse(text);
    if (kv.get("schema", "") != "1")
        throw ConfigError("key 'schema': expected 1");
    ExperimentConfig c;
    c.source = std::string(text);
    auto path = [&](const std::string& key, bool required) -> std::filesystem::path {
        const auto v = required ? kv.require(key) : kv.get(key, "");
        if (v.empty())
            return {};
        std::filesystem::path p(v);
        return p.is_absolute() ? p : base_dir / p;
    };
    c.name = kv.get("name", c.name);
    c.preset = kv.get("preset", c.preset);
    if (c.preset != "standard" && c.preset != "embedding-analysis")
        throw ConfigError("key 'preset': unknown preset '" + c.preset + "'");
    c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));

    c.series_path = path("series.path", true);
    c.date_field = kv.get("series.date_field", c.date_field);
    c.value_field = kv.get("series.value_field", c.value_field);
    try {
        c.unit = parse_unit(kv.get("series.unit", "unitless"));
    } catch (const Error& e) {
        throw ConfigError(std::string("key 'series.unit': ") + e.what());
    }
    c.detrend = kv.get_bool("series.detrend", false);
    if (const auto g = kv.get("series.mape_guard", "none"); g != "none")
        c.mape_guard = kv.get_double("series.mape_guard", 0.05);
    c.temperature_path = path("covariates.temperature", false);
    c.wind_path = path("covariates.wind", false);
    c.covariate_field = kv.get("covariates.value_field", c.covariate_field);
    c.docs_path = path("docs.path", true);
    c.stopwords_path = path("stopwords.path", false);

    if (c.preset == "standard") {
        c.split.train_end = detail::config_date(kv, "split.train_end");
        c.split.validation_end = detail::config_date(kv, "split.validation_end");
    }
    c.vocab.min_count = kv.get_count("vocab.min_count", c.vocab.min_count);
    c.vocab.max_doc_frac = kv.get_double("vocab.max_doc_frac", c.vocab.max_doc_frac);
    c.vocab_max_words = kv.get_count("vocab.max_words", c.vocab_max_words);

    c.models = kv.get_list("models", c.preset == "standard" ? known_families() : std::vector<std::string>{"gru"});
    for (const auto& m : c.models)
        if (std::find(known_families().begin(), known_families().end(), m) == known_families().end())
            throw ConfigError("key 'models': unknown model family '" + m + "'");
    if (c.models.empty())
        throw ConfigError("key 'models': no model family selected");
    c.runs = kv.get_count("runs.B", c.runs);
    if (c.runs < 1)
        throw ConfigError("key 'runs.B' must be at least 1");
    c.aggregate = kv.get_bool("aggregate", c.aggregate);

    c.selection_B = kv.get_count("selection.B", c.selection_B);
    c.selection_max_k = kv.get_count("selection.max_k", c.selection_max_k);
    c.selection_forest.n_trees = kv.get_count("selection.trees", c.selection_forest.n_trees);
    c.selection_forest.min_leaf = kv.get_count("selection.min_leaf", c.selection_forest.min_leaf);

    c.lasso_lambdas = kv.get_count("grid.lasso.lambda_count", c.lasso_lambdas);
    c.lasso_ratio = kv.get_double("grid.lasso.lambda_ratio", c.lasso_ratio);
    if (c.lasso_lambdas < 1 || !(c.lasso_ratio > 0.0 && c.lasso_ratio <= 1.0))
        throw ConfigError("key 'grid.lasso.*': need at least one lambda and a ratio in (0, 1]");

    c.rf.n_trees = detail::count_grid<std::size_t>(kv, "grid.rf.trees", c.rf.n_trees);
    c.rf.mtry = kv.get_list("grid.rf.mtry", c.rf.mtry);
    for (const auto& m : c.rf.mtry)
        try {
            parse_mtry_rule(m);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("key 'grid.rf.mtry': ") + e.what());
        }
    c.rf.min_leaf = detail::count_grid<std::size_t>(kv, "grid.rf.min_leaf", c.rf.min_leaf);
    c.rf.max_depth = detail::count_grid<long>(kv, "grid.rf.max_depth", c.rf.max_depth);
    c.benchmark.n_trees = kv.get_count("benchmark.trees", c.benchmark.n_trees);
    c.benchmark.min_leaf = kv.get_count("benchmark.min_leaf", c.benchmark.min_leaf);

    c.mlp.hidden = detail::layer_grid(kv, "grid.mlp.hidden", c.mlp.hidden);
    c.mlp.dropout = kv.get_double_list("grid.mlp.dropout", c.mlp.dropout);
    c.mlp.learning_rate = kv.get_double_list("grid.mlp.learning_rate", c.mlp.learning_rate);
    c.mlp.optimizer = kv.get_list("grid.mlp.optimizer", c.mlp.optimizer);
    c.gru.embedding_dim = detail::count_grid<std::size_t>(kv, "grid.gru.embedding_dim", c.gru.embedding_dim);
    c.gru.hidden = detail::count_grid<std::size_t>(kv, "grid.gru.hidden", c.gru.hidden);
    c.gru.dense = detail::layer_grid(kv, "grid.gru.dense", c.gru.dense);
    c.gru.dropout = kv.get_double_list("grid.gru.dropout", c.gru.dropout);
    c.gru.learning_rate = kv.get_double_list("grid.gru.learning_rate", c.gru.learning_rate);
    c.gru.optimizer = kv.get_list("grid.gru.optimizer", c.gru.optimizer);
    for (const auto& key : {"grid.mlp.optimizer", "grid.gru.optimizer"})
        for (const auto& o : kv.get_list(key, {"adam"}))
            try {
                parse_optimizer(o);
            } catch (const ConfigError& e) {
                throw ConfigError("key '" + std::string(key) + "': " + e.what());
            }
    c.epochs = static_cast<int>(kv.get_int("nn.epochs", c.epochs));
    c.batch_size = kv.get_count("nn.batch_size", c.batch_size);
    c.momentum = kv.get_double("nn.momentum", c.momentum);
    c.max_length = kv.get_count("nn.max_length", c.max_length);
    if (c.epochs < 1 || c.batch_size < 1)
        throw ConfigError("key 'nn.epochs' and 'nn.batch_size' must be positive");

    c.top_k = kv.get_count("interpret.top_k", c.top_k);
    c.queries = kv.get_list("interpret.queries");
    c.probes = kv.get_list("interpret.probes");
    c.output_dir = path("output.dir", false);
    if (c.output_dir.empty())
        c.output_dir = "out";
    kv.reject_unused();

    if (c.wants("benchmark") && (c.temperature_path.empty() || c.wind_path.empty()))
        throw ConfigError("key 'models': the benchmark needs covariates.temperature and covariates.wind");
    return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path)
{
    std::string text;
    try {
        text = read_file(path.string());
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    try {
        return parse_experiment_config(text, path.parent_path());
    } catch (const ParseError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

} // namespace textcast
