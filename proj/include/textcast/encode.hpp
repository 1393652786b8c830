#pragma once

#include "textcast/corpus.hpp"

namespace textcast {

/// Inverse-document-frequency factors fitted on a training corpus.
///
/// x[d, w] = f[d, w] * ln(N / (df(w) + 1)), where f[d, w] is the count of w in d
/// divided by the number of in-vocabulary tokens of d. The +1 is kept as is, so
/// a word present in every training document gets a negative weight and one
/// present in N - 1 documents gets weight zero.
struct TfIdfModel {
    std::size_t n_docs = 0;
    std::vector<std::size_t> doc_count; // per vocabulary index - 1
    std::vector<double> idf;
    std::string vocab_hash;

    std::size_t dimension() const noexcept { return idf.size(); }
};

struct TfIdfMatrix {
    TfIdfModel model;
    Matrix rows; // N x V
};

inline std::vector<double> transform_tfidf(const TokenList& doc, const Vocabulary& vocab, const TfIdfModel& model)
{
    if (vocab.size() != model.dimension())
        throw ShapeError("transform_tfidf: vocabulary size differs from the fitted model");
    std::vector<double> row(model.dimension(), 0.0);
    std::size_t length = 0;
    for (const auto& t : doc) {
        const int id = vocab.index(t);
        if (id == 0)
            continue;
        row[static_cast<std::size_t>(id - 1)] += 1.0;
        ++length;
    }
    if (length == 0)
        return row;
    const double len = static_cast<double>(length);
    for (std::size_t w = 0; w < row.size(); ++w)
        if (row[w] != 0.0)
            row[w] = row[w] / len * model.idf[w];
    return row;
}

inline TfIdfMatrix fit_tfidf(std::span<const TokenList> docs, const Vocabulary& vocab)
{
    if (docs.empty() || vocab.size() == 0)
        throw EmptyVocabError("fit_tfidf: empty corpus or vocabulary");
    TfIdfModel model;
    model.n_docs = docs.size();
    model.doc_count.assign(vocab.size(), 0);
    model.vocab_hash = vocab.hash();
    std::vector<int> last_seen(vocab.size(), -1);
    for (std::size_t d = 0; d < docs.size(); ++d)
        for (const auto& t : docs[d]) {
            const int id = vocab.index(t);
            if (id == 0)
                continue;
            const auto w = static_cast<std::size_t>(id - 1);
            if (last_seen[w] != static_cast<int>(d)) {
                last_seen[w] = static_cast<int>(d);
                ++model.doc_count[w];
            }
        }
    const double n = static_cast<double>(model.n_docs);
    model.idf.resize(vocab.size());
    for (std::size_t w = 0; w < vocab.size(); ++w)
        model.idf[w] = std::log(n / (static_cast<double>(model.doc_count[w]) + 1.0));

    TfIdfMatrix out{std::move(model), Matrix(docs.size(), vocab.size())};
    for (std::size_t d = 0; d < docs.size(); ++d) {
        const auto row = transform_tfidf(docs[d], vocab, out.model);
        std::copy(row.begin(), row.end(), out.rows.row(d).begin());
    }
    return out;
}

inline Matrix transform_tfidf(std::span<const TokenList> docs, const Vocabulary& vocab, const TfIdfModel& model)
{
    Matrix out(docs.size(), model.dimension());
    for (std::size_t d = 0; d < docs.size(); ++d) {
        const auto row = transform_tfidf(docs[d], vocab, model);
        std::copy(row.begin(), row.end(), out.row(d).begin());
    }
    return out;
}

/// Header of words, one row per date.
inline std::string serialize_tfidf(const Matrix& rows, std::span<const Date> dates, const Vocabulary& vocab)
{
    if (dates.size() != rows.rows || vocab.size() != rows.cols)
        throw ShapeError("serialize_tfidf: shape mismatch");
    std::string out = "date";
    for (const auto& e : vocab.entries())
        out += "," + e.word;
    out += '\n';
    for (std::size_t r = 0; r < rows.rows; ++r) {
        out += format_date(dates[r]);
        for (double v : rows.row(r))
            out += "," + format_double(v);
        out += '\n';
    }
    return out;
}

} // namespace textcast
