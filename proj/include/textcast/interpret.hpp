#pragma once

#include <set>

#include "textcast/linmod.hpp"

namespace textcast {

struct WordReport {
    std::string word;
    double score = 0.0;
    double std = 0.0; // across B runs; 0 for a single run
    std::size_t rank = 0;
};

// ---------------------------------------------------------------------------
// Embedding geometry
// ---------------------------------------------------------------------------

inline double l2_norm(std::span<const double> v)
{
    double s = 0.0;
    for (double x : v)
        s += x * x;
    return std::sqrt(s);
}

/// 1 - cos(w1, w2), in [0, 2].
inline double cosine_distance(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw ShapeError("cosine_distance: vectors differ in dimension");
    const double na = l2_norm(a), nb = l2_norm(b);
    if (!(na > 0.0) || !(nb > 0.0))
        throw ZeroNormError("cosine_distance: zero vector");
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        dot += a[i] * b[i];
    return std::clamp(1.0 - dot / (na * nb), 0.0, 2.0);
}

namespace detail {

inline void check_embeddings(std::span<const std::string> words, std::span<const Matrix> embeddings)
{
    if (embeddings.empty())
        throw SpecError("at least one embedding matrix is required");
    for (const auto& E : embeddings)
        if (E.rows != words.size() + 1 || E.cols != embeddings.front().cols)
            throw ShapeError("embedding matrix must have one row per word plus the padding row");
}

inline std::size_t word_row(std::span<const std::string> words, const std::string& w)
{
    const auto it = std::find(words.begin(), words.end(), w);
    if (it == words.end())
        throw LookupError("word '" + w + "' is not in the vocabulary");
    return static_cast<std::size_t>(it - words.begin()) + 1;
}

inline std::pair<double, double> mean_distance(std::span<const Matrix> embeddings, std::size_t a, std::size_t b)
{
    std::vector<double> d;
    for (const auto& E : embeddings)
        d.push_back(cosine_distance(E.row(a), E.row(b)));
    return {mean(d), sample_std(d)};
}

inline void assign_ranks(std::vector<WordReport>& r)
{
    for (std::size_t i = 0; i < r.size(); ++i)
        r[i].rank = i + 1;
}

} // namespace detail

struct NeighborReport {
    WordReport query;                // always at distance 0
    std::vector<WordReport> neighbors; // ascending mean distance, ranks 1..k
    std::vector<WordReport> probes;  // caller-supplied words, in the given order
};

/// Closest words to `query` in the cosine sense. With several embeddings the
/// distance of each pair is averaged across them; the matrices themselves are
/// never combined because each lives in its own basis. `words[i]` labels row
/// i + 1. Words whose vector is zero in any model are skipped.
inline NeighborReport nearest_words(const std::string& query, std::span<const std::string> words,
                                    std::span<const Matrix> embeddings, std::size_t k,
                                    std::span<const std::string> probes = {})
{
    detail::check_embeddings(words, embeddings);
    const auto q = detail::word_row(words, query);
    for (const auto& E : embeddings)
        if (!(l2_norm(E.row(q)) > 0.0))
            throw ZeroNormError("embedding of '" + query + "' is the zero vector");

    NeighborReport rep;
    rep.query = {query, 0.0, 0.0, 0};
    std::vector<WordReport> all;
    for (std::size_t r = 1; r <= words.size(); ++r) {
        if (r == q)
            continue;
        const bool zero = std::any_of(embeddings.begin(), embeddings.end(),
                                      [&](const Matrix& E) { return !(l2_norm(E.row(r)) > 0.0); });
        if (zero)
            continue;
        const auto [m, s] = detail::mean_distance(embeddings, q, r);
        all.push_back({words[r - 1], m, s, 0});
    }
    std::stable_sort(all.begin(), all.end(), [](const WordReport& a, const WordReport& b) {
        return a.score != b.score ? a.score < b.score : a.word < b.word;
    });
    all.resize(std::min(k, all.size()));
    detail::assign_ranks(all);
    rep.neighbors = std::move(all);
    for (const auto& p : probes) {
        const auto r = detail::word_row(words, p);
        const auto [m, s] = detail::mean_distance(embeddings, q, r);
        rep.probes.push_back({p, m, s, 0});
    }
    return rep;
}

/// Words by embedding norm, descending; ties lexicographic. The padding row is
/// excluded.
inline std::vector<WordReport> norm_ranking(std::span<const std::string> words, std::span<const Matrix> embeddings,
                                            std::size_t k)
{
    detail::check_embeddings(words, embeddings);
    std::vector<WordReport> all;
    for (std::size_t r = 1; r <= words.size(); ++r) {
        std::vector<double> n;
        for (const auto& E : embeddings)
            n.push_back(l2_norm(E.row(r)));
        all.push_back({words[r - 1], mean(n), sample_std(n), 0});
    }
    std::stable_sort(all.begin(), all.end(), [](const WordReport& a, const WordReport& b) {
        return a.score != b.score ? a.score > b.score : a.word < b.word;
    });
    all.resize(std::min(k, all.size()));
    detail::assign_ranks(all);
    return all;
}

// ---------------------------------------------------------------------------
// Linear and forest rankings
// ---------------------------------------------------------------------------

struct LassoEffects {
    std::vector<WordReport> positive; // by |beta| descending
    std::vector<WordReport> negative;
    bool empty = false;               // every coefficient is zero
};

inline LassoEffects lasso_word_effects(const LassoModel& model, std::span<const std::string> words, std::size_t k)
{
    if (words.size() != model.beta.size())
        throw ShapeError("lasso_word_effects: word list does not match the model");
    LassoEffects fx;
    for (std::size_t j = 0; j < words.size(); ++j) {
        if (model.beta[j] > 0.0)
            fx.positive.push_back({words[j], model.beta[j], 0.0, 0});
        else if (model.beta[j] < 0.0)
            fx.negative.push_back({words[j], model.beta[j], 0.0, 0});
    }
    auto by_magnitude = [](const WordReport& a, const WordReport& b) {
        const double fa = std::abs(a.score), fb = std::abs(b.score);
        return fa != fb ? fa > fb : a.word < b.word;
    };
    for (auto* list : {&fx.positive, &fx.negative}) {
        std::stable_sort(list->begin(), list->end(), by_magnitude);
        list->resize(std::min(k, list->size()));
        detail::assign_ranks(*list);
    }
    fx.empty = fx.positive.empty() && fx.negative.empty();
    return fx;
}

struct ImportanceRun {
    std::vector<std::string> words;
    std::vector<double> importance; // normalized OOB importance per word
};

/// Mean and standard deviation of normalized importance across runs; top k.
inline std::vector<WordReport> rf_word_importance(std::span<const ImportanceRun> runs, std::size_t k)
{
    if (runs.empty())
        throw SpecError("rf_word_importance: no runs supplied");
    const auto& words = runs.front().words;
    for (const auto& r : runs)
        if (r.words != words || r.importance.size() != words.size())
            throw SpecError("rf_word_importance: runs use different vocabularies");
    std::vector<WordReport> all;
    for (std::size_t j = 0; j < words.size(); ++j) {
        std::vector<double> v;
        for (const auto& r : runs)
            v.push_back(r.importance[j]);
        all.push_back({words[j], mean(v), sample_std(v), 0});
    }
    std::stable_sort(all.begin(), all.end(), [](const WordReport& a, const WordReport& b) {
        return a.score != b.score ? a.score > b.score : a.word < b.word;
    });
    all.resize(std::min(k, all.size()));
    detail::assign_ranks(all);
    return all;
}

// ---------------------------------------------------------------------------
// Overlap of three rankings
// ---------------------------------------------------------------------------

/// Exclusive regions of the three-set Venn diagram.
struct VennCounts {
    std::size_t only_a = 0, only_b = 0, only_c = 0;
    std::size_t ab = 0, ac = 0, bc = 0; // in exactly these two
    std::size_t abc = 0;

    std::size_t total() const { return only_a + only_b + only_c + ab + ac + bc + abc; }
};

inline VennCounts selection_overlap(std::span<const std::string> a, std::span<const std::string> b,
                                    std::span<const std::string> c, std::size_t top_k = 50)
{
    if (a.size() < top_k || b.size() < top_k || c.size() < top_k)
        throw SpecError("selection_overlap: every list needs at least " + std::to_string(top_k) + " words");
    const std::set<std::string> A(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(top_k));
    const std::set<std::string> B(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(top_k));
    const std::set<std::string> C(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(top_k));
    std::set<std::string> all = A;
    all.insert(B.begin(), B.end());
    all.insert(C.begin(), C.end());
    VennCounts v;
    for (const auto& w : all) {
        const bool ia = A.contains(w), ib = B.contains(w), ic = C.contains(w);
        if (ia && ib && ic)
            ++v.abc;
        else if (ia && ib)
            ++v.ab;
        else if (ia && ic)
            ++v.ac;
        else if (ib && ic)
            ++v.bc;
        else if (ia)
            ++v.only_a;
        else if (ib)
            ++v.only_b;
        else
            ++v.only_c;
    }
    return v;
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

inline std::string serialize_word_reports(std::span<const WordReport> r, std::string_view score_name)
{
    std::string out = "rank,word," + std::string(score_name) + ",std\n";
    for (const auto& w : r)
        out += std::to_string(w.rank) + "," + w.word + "," + format_double(w.score) + "," + format_double(w.std) + "\n";
    return out;
}

/// Norm ranking with the log-norm column used for plotting.
inline std::string serialize_norm_ranking(std::span<const WordReport> r)
{
    std::string out = "rank,word,norm,std,log_norm\n";
    for (const auto& w : r)
        out += std::to_string(w.rank) + "," + w.word + "," + format_double(w.score) + "," + format_double(w.std) + "," +
               format_double(std::log(w.score)) + "\n";
    return out;
}

/// Query first at distance zero, then neighbors, then probe rows.
inline std::string serialize_neighbors(const NeighborReport& n)
{
    std::string out = "kind,rank,word,mean_dcos,std\n";
    out += "query,0," + n.query.word + "," + format_fixed(0.0, 3) + "," + format_fixed(0.0, 3) + "\n";
    for (const auto& w : n.neighbors)
        out += "neighbor," + std::to_string(w.rank) + "," + w.word + "," + format_fixed(w.score, 3) + "," +
               format_fixed(w.std, 3) + "\n";
    for (const auto& w : n.probes)
        out += "probe,," + w.word + "," + format_fixed(w.score, 3) + "," + format_fixed(w.std, 3) + "\n";
    return out;
}

inline std::string serialize_venn(const VennCounts& v, std::string_view a, std::string_view b, std::string_view c)
{
    const std::string A(a), B(b), C(c);
    std::string out = "region,count\n";
    out += A + "," + std::to_string(v.only_a) + "\n";
    out += B + "," + std::to_string(v.only_b) + "\n";
    out += C + "," + std::to_string(v.only_c) + "\n";
    out += A + "&" + B + "," + std::to_string(v.ab) + "\n";
    out += A + "&" + C + "," + std::to_string(v.ac) + "\n";
    out += B + "&" + C + "," + std::to_string(v.bc) + "\n";
    out += A + "&" + B + "&" + C + "," + std::to_string(v.abc) + "\n";
    return out;
}

/// Raw embedding rows for external projection; the padding row is omitted.
inline std::string serialize_embedding(std::span<const std::string> words, const Matrix& E)
{
    if (E.rows != words.size() + 1)
        throw ShapeError("serialize_embedding: one row per word plus padding expected");
    std::string out = "word";
    for (std::size_t c = 0; c < E.cols; ++c)
        out += ",e" + std::to_string(c);
    out += '\n';
    for (std::size_t r = 1; r < E.rows; ++r) {
        out += words[r - 1];
        for (double v : E.row(r))
            out += "," + format_double(v);
        out += '\n';
    }
    return out;
}

/// Inverse of serialize_embedding; row 0 is restored as zeros.
inline std::pair<std::vector<std::string>, Matrix> parse_embedding(std::string_view text)
{
    std::vector<std::string> words;
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 0, cols = 0;
    for (const auto& line : split(text, '\n')) {
        ++line_no;
        if (trim(line).empty())
            continue;
        const auto f = split(line, ',');
        if (line_no == 1) {
            cols = f.size() - 1;
            continue;
        }
        if (f.size() != cols + 1)
            throw ParseError("embedding row has the wrong number of fields", line_no);
        words.push_back(f[0]);
        std::vector<double> r;
        for (std::size_t c = 1; c < f.size(); ++c) {
            try {
                r.push_back(parse_double(f[c]));
            } catch (const Error& e) {
                throw ParseError(e.what(), line_no);
            }
        }
        rows.push_back(std::move(r));
    }
    Matrix E(words.size() + 1, cols);
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy(rows[r].begin(), rows[r].end(), E.row(r + 1).begin());
    return {std::move(words), std::move(E)};
}

} // namespace textcast
