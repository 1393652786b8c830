#include <iostream>

#include <CLI11.hpp>

#include "textcast/textcast.hpp"

namespace fs = std::filesystem;
using namespace textcast;

namespace {

constexpr int exit_runtime = 1;
constexpr int exit_usage = 2;

struct Globals {
    std::optional<std::uint64_t> seed;
    unsigned jobs = 0;
    std::string out;
};

void log_line(const std::string& s) { std::cerr << s << '\n'; }

nlohmann::json file_hashes(const std::map<std::string, std::string>& files)
{
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, content] : files)
        j[name] = hex64(fnv1a(content));
    return j;
}

std::uint64_t bundle_hash(const std::map<std::string, std::string>& files)
{
    std::uint64_t h = fnv1a(version_string);
    for (const auto& [name, content] : files) {
        h = fnv1a(name, h);
        h = fnv1a(content, h);
    }
    return h;
}

void write_bundle(const fs::path& dir, const std::map<std::string, std::string>& files, nlohmann::json manifest)
{
    fs::create_directories(dir);
    for (const auto& [name, content] : files)
        write_file((dir / name).string(), content);
    manifest["version"] = version_string;
    manifest["outputs"] = file_hashes(files);
    manifest["bundle_hash"] = hex64(bundle_hash(files));
    write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

int cmd_synth(const Globals& g, const std::string& spec_path)
{
    SynthSpec spec = default_synth_spec();
    if (!spec_path.empty())
        spec = parse_synth_spec(read_file(spec_path));
    const std::uint64_t seed = g.seed.value_or(spec.seed);
    const auto bundle = generate(spec, seed);
    std::map<std::string, std::string> files{
        {"documents.jsonl", serialize_documents(bundle.documents)},
        {"load.csv", serialize_series(bundle.target)},
        {"temperature.csv", serialize_series(bundle.temperature)},
        {"wind.csv", serialize_series(bundle.wind)},
        {"ground_truth.csv", serialize_ground_truth(bundle.ground_truth)},
    };
    const fs::path out = g.out.empty() ? "synth_out" : g.out;
    write_bundle(out, files,
                 {{"kind", "synthetic bundle"},
                  {"seed", seed},
                  {"days", spec.n_days},
                  {"base_level", bundle.base_level},
                  {"noise_std", bundle.noise_std}});
    log_line("wrote " + std::to_string(bundle.documents.size()) + " documents to " + out.string());
    return 0;
}

struct IngestArgs {
    std::string series, docs, stopwords, date_field = "date", value_field = "value", unit = "unitless";
    std::size_t min_count = 7;
    double max_doc_frac = 0.40;
};

int cmd_ingest(const Globals& g, const IngestArgs& a)
{
    const auto series = load_series(a.series, a.date_field, a.value_field, parse_unit(a.unit));
    const auto docs = load_documents(a.docs);
    StopWords stop;
    if (!a.stopwords.empty())
        stop = load_stopwords(a.stopwords);
    std::vector<TokenList> tokens;
    for (const auto& d : docs)
        tokens.push_back(preprocess(d.text, stop));
    const auto vocab = build_vocabulary(tokens, {a.min_count, a.max_doc_frac});
    const auto stats = corpus_stats(tokens, vocab);
    std::string v = "index,word,total_count,doc_count\n";
    for (std::size_t k = 0; k < vocab.size(); ++k) {
        const auto& e = vocab.entries()[k];
        v += std::to_string(k + 1) + "," + e.word + "," + std::to_string(e.total_count) + "," +
             std::to_string(e.doc_count) + "\n";
    }
    std::map<std::string, std::string> files{
        {"series.csv", serialize_series(series)},
        {"documents.jsonl", serialize_documents(docs)},
        {"vocabulary.csv", v},
        {"corpus_stats.csv", "documents,vocabulary_before_filter,vocabulary_after_filter,max_length,mean_length\n" +
                                 std::to_string(stats.documents) + "," +
                                 std::to_string(stats.vocabulary_before_filter) + "," +
                                 std::to_string(stats.vocabulary_after_filter) + "," +
                                 std::to_string(stats.max_length) + "," + format_fixed(stats.mean_length, 6) + "\n"},
    };
    const fs::path out = g.out.empty() ? "bundle" : g.out;
    write_bundle(out, files,
                 {{"kind", "dataset bundle"},
                  {"series_days", series.size()},
                  {"documents", docs.size()},
                  {"vocabulary", vocab.size()},
                  {"vocab_hash", vocab.hash()}});
    log_line("ingested " + std::to_string(series.size()) + " days and " + std::to_string(docs.size()) +
             " documents into " + out.string());
    return 0;
}

int cmd_run(const Globals& g, const std::string& config_path)
{
    auto cfg = load_experiment_config(config_path);
    if (g.seed)
        cfg.seed = *g.seed;
    if (!g.out.empty())
        cfg.output_dir = g.out;
    Experiment exp(cfg, log_line);
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentResult result;
    try {
        result = exp.run();
    } catch (const IoError&) {
        throw;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw std::runtime_error("stage '" + exp.stage() + "' failed: " + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_outputs(cfg.output_dir, result, cfg, seconds);
    log_line("outputs written to " + cfg.output_dir.string());
    return 0;
}

struct InterpretArgs {
    std::vector<std::string> embeddings, queries, probes, rankings;
    std::string lasso;
    std::size_t top_k = 20, overlap_k = 50;
};

std::vector<std::string> read_ranked_words(const std::string& path)
{
    const auto text = read_file(path);
    const auto lines = split(text, '\n');
    if (lines.empty())
        throw ConfigError("ranking file '" + path + "' is empty");
    const auto header = split(lines[0], ',');
    const auto col = std::find(header.begin(), header.end(), "word");
    if (col == header.end())
        throw ConfigError("ranking file '" + path + "' has no 'word' column");
    const auto c = static_cast<std::size_t>(col - header.begin());
    std::vector<std::string> words;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty())
            continue;
        const auto f = split(lines[i], ',');
        if (f.size() <= c)
            throw ParseError(path + ": missing word column", i + 1);
        words.emplace_back(trim(f[c]));
    }
    return words;
}

LassoModel read_lasso(const std::string& path, std::vector<std::string>& words)
{
    LassoModel m;
    const auto lines = split(read_file(path), '\n');
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty())
            continue;
        const auto f = split(lines[i], ',');
        if (f.size() != 2)
            throw ParseError(path + ": expected word,beta", i + 1);
        words.emplace_back(trim(f[0]));
        m.beta.push_back(parse_double(f[1]));
    }
    return m;
}

int cmd_interpret(const Globals& g, const InterpretArgs& a)
{
    std::map<std::string, std::string> files;
    if (!a.embeddings.empty()) {
        std::vector<std::string> words;
        std::vector<Matrix> E;
        for (const auto& path : a.embeddings) {
            auto [w, m] = parse_embedding(read_file(path));
            if (!words.empty() && w != words)
                throw ConfigError("embedding '" + path + "' uses a different vocabulary");
            words = std::move(w);
            E.push_back(std::move(m));
        }
        files["norm_ranking.csv"] = serialize_norm_ranking(norm_ranking(words, E, a.top_k));
        for (const auto& q : a.queries)
            files["neighbors_" + q + ".csv"] = serialize_neighbors(nearest_words(q, words, E, a.top_k, a.probes));
    } else if (!a.queries.empty()) {
        throw ConfigError("--query needs at least one --embedding");
    }
    if (!a.lasso.empty()) {
        std::vector<std::string> words;
        const auto m = read_lasso(a.lasso, words);
        const auto fx = lasso_word_effects(m, words, a.top_k);
        if (fx.empty)
            log_line("warning: every LASSO coefficient is zero");
        std::string s = "sign,rank,word,beta\n";
        for (const auto& w : fx.positive)
            s += "positive," + std::to_string(w.rank) + "," + w.word + "," + format_double(w.score) + "\n";
        for (const auto& w : fx.negative)
            s += "negative," + std::to_string(w.rank) + "," + w.word + "," + format_double(w.score) + "\n";
        files["lasso_effects.csv"] = s;
    }
    if (!a.rankings.empty()) {
        if (a.rankings.size() != 3)
            throw ConfigError("--rankings needs exactly three files");
        const auto r0 = read_ranked_words(a.rankings[0]);
        const auto r1 = read_ranked_words(a.rankings[1]);
        const auto r2 = read_ranked_words(a.rankings[2]);
        files["overlap.csv"] = serialize_venn(selection_overlap(r0, r1, r2, a.overlap_k), "a", "b", "c");
    }
    if (files.empty())
        throw ConfigError("nothing to do: give --embedding, --lasso or --rankings");
    const fs::path out = g.out.empty() ? "interpret_out" : g.out;
    fs::create_directories(out);
    for (const auto& [name, content] : files)
        write_file((out / name).string(), content);
    log_line("wrote " + std::to_string(files.size()) + " reports to " + out.string());
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Forecast daily time series from dated text documents."};
    app.require_subcommand(1);
    Globals g;
    std::uint64_t seed = 0;
    auto* seed_opt = app.add_option("--seed", seed, "Override every seed")->group("Global");
    app.add_option("--jobs", g.jobs, "Worker threads (0 = all cores)")->group("Global");
    app.add_option("--out", g.out, "Output directory")->group("Global");

    std::string spec_path;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus and series with known word effects");
    synth->add_option("spec", spec_path, "Synthetic spec file (defaults when omitted)")->check(CLI::ExistingFile);

    IngestArgs ia;
    auto* ingest = app.add_subcommand("ingest", "Validate and normalize a series and a document file");
    ingest->add_option("--series", ia.series, "Series CSV")->required()->check(CLI::ExistingFile);
    ingest->add_option("--docs", ia.docs, "Documents JSONL")->required()->check(CLI::ExistingFile);
    ingest->add_option("--stopwords", ia.stopwords, "Stopword list")->check(CLI::ExistingFile);
    ingest->add_option("--date-field", ia.date_field, "Date column");
    ingest->add_option("--value-field", ia.value_field, "Value column");
    ingest->add_option("--unit", ia.unit, "megawatt, celsius, metre_per_second or unitless");
    ingest->add_option("--min-count", ia.min_count, "Minimum total count of a kept word");
    ingest->add_option("--max-doc-frac", ia.max_doc_frac, "Maximum document frequency of a kept word");

    std::string config_path;
    auto* run = app.add_subcommand("run", "Run an experiment described by a config file");
    run->add_option("config", config_path, "Experiment config")->required()->check(CLI::ExistingFile);

    InterpretArgs pa;
    auto* interpret = app.add_subcommand("interpret", "Reports over saved model artifacts");
    interpret->add_option("--embedding", pa.embeddings, "Embedding CSV (repeat for several runs)")
        ->check(CLI::ExistingFile);
    interpret->add_option("--query", pa.queries, "Word whose neighbors are listed");
    interpret->add_option("--probe", pa.probes, "Extra word reported for every query");
    interpret->add_option("--lasso", pa.lasso, "LASSO coefficient CSV")->check(CLI::ExistingFile);
    interpret->add_option("--rankings", pa.rankings, "Three ranked word lists for the overlap counts")
        ->check(CLI::ExistingFile);
    interpret->add_option("--top-k", pa.top_k, "Length of each report");
    interpret->add_option("--overlap-k", pa.overlap_k, "Prefix length used for the overlap counts");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_usage;
    }
    if (*seed_opt)
        g.seed = seed;
    set_default_jobs(g.jobs ? g.jobs : std::max(1u, std::thread::hardware_concurrency()));

    try {
        if (*synth)
            return cmd_synth(g, spec_path);
        if (*ingest)
            return cmd_ingest(g, ia);
        if (*run)
            return cmd_run(g, config_path);
        return cmd_interpret(g, pa);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_usage;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_runtime;
    }
}
