#pragma once

#include <map>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "textcast/core.hpp"

namespace textcast {

struct RawDocument {
    Date date;
    std::string text;

    friend bool operator==(const RawDocument&, const RawDocument&) = default;
};

/// Line-delimited JSON: one {"date": "...", "text": "..."} object per line.
/// The result is sorted by date.
inline std::vector<RawDocument> parse_documents(std::string_view content)
{
    std::vector<RawDocument> docs;
    std::istringstream in{std::string(content)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        try {
            const auto j = nlohmann::json::parse(line);
            if (!j.is_object() || !j.contains("date") || !j.contains("text") || !j["date"].is_string() ||
                !j["text"].is_string())
                throw ParseError("record needs string fields 'date' and 'text'", line_no);
            docs.push_back({parse_date(j["date"].get<std::string>()), j["text"].get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("malformed record: ") + e.what(), line_no);
        } catch (const ParseError& e) {
            if (e.line())
                throw;
            throw ParseError(e.what(), line_no);
        }
    }
    std::stable_sort(docs.begin(), docs.end(), [](const auto& a, const auto& b) { return a.date < b.date; });
    for (std::size_t i = 1; i < docs.size(); ++i)
        if (docs[i].date == docs[i - 1].date)
            throw DuplicateError("duplicate document date " + format_date(docs[i].date));
    return docs;
}

inline std::vector<RawDocument> load_documents(const std::string& path) { return parse_documents(read_file(path)); }

inline std::string serialize_documents(std::span<const RawDocument> docs)
{
    std::string out;
    for (const auto& d : docs) {
        nlohmann::json j;
        j["date"] = format_date(d.date);
        j["text"] = d.text;
        out += j.dump();
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

namespace detail {

/// Decodes one UTF-8 code point; invalid bytes decode as U+FFFD.
inline char32_t next_code_point(std::string_view s, std::size_t& i)
{
    const auto b0 = static_cast<unsigned char>(s[i++]);
    if (b0 < 0x80)
        return b0;
    int extra = b0 >= 0xF0 ? 3 : b0 >= 0xE0 ? 2 : b0 >= 0xC0 ? 1 : -1;
    if (extra < 0)
        return 0xFFFD;
    char32_t cp = b0 & (0x3F >> extra);
    for (int k = 0; k < extra; ++k) {
        if (i >= s.size() || (static_cast<unsigned char>(s[i]) & 0xC0) != 0x80)
            return 0xFFFD;
        cp = (cp << 6) | (static_cast<unsigned char>(s[i++]) & 0x3F);
    }
    return cp;
}

inline void append_utf8(std::string& out, char32_t cp)
{
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

/// Latin letters (including accented Latin-1 and Latin Extended-A/B), Greek and Cyrillic.
inline bool is_alpha(char32_t c)
{
    if ((c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z'))
        return true;
    if (c >= 0xC0 && c <= 0x24F)
        return c != 0xD7 && c != 0xF7;
    return (c >= 0x370 && c <= 0x3FF && c != 0x37E && c != 0x387) || (c >= 0x400 && c <= 0x52F);
}

inline char32_t to_lower(char32_t c)
{
    if (c >= U'A' && c <= U'Z')
        return c + 32;
    if (c >= 0xC0 && c <= 0xDE && c != 0xD7)
        return c + 32;
    if (c >= 0x100 && c <= 0x17F && c != 0x130 && c != 0x131 && c != 0x138 && c != 0x149 && c != 0x17F) {
        // Latin Extended-A alternates upper/lower, with a parity shift in 0x139..0x148 and 0x179..0x17E.
        const bool odd_upper = (c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E);
        if ((c % 2 == 1) == odd_upper)
            return c + 1;
        return c;
    }
    if (c == 0x178)
        return 0xFF;
    if (c >= 0x391 && c <= 0x3AB && c != 0x3A2)
        return c + 32;
    if (c >= 0x410 && c <= 0x42F)
        return c + 32;
    if (c >= 0x400 && c <= 0x40F)
        return c + 80;
    return c;
}

} // namespace detail

using StopWords = std::unordered_set<std::string>;

/// Lowercases, splits at every non-alphabetic character and drops stopwords.
inline std::vector<std::string> preprocess(std::string_view text, const StopWords& stopwords)
{
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty() && !stopwords.contains(current))
            tokens.push_back(current);
        current.clear();
    };
    for (std::size_t i = 0; i < text.size();) {
        const char32_t cp = detail::next_code_point(text, i);
        if (detail::is_alpha(cp))
            detail::append_utf8(current, detail::to_lower(cp));
        else
            flush();
    }
    flush();
    return tokens;
}

/// One word per line; blank lines and lines starting with '#' are ignored.
/// Entries are lowercased the same way as document text.
inline StopWords parse_stopwords(std::string_view content)
{
    StopWords out;
    std::istringstream in{std::string(content)};
    std::string line;
    while (std::getline(in, line)) {
        const auto t = trim(line);
        if (t.empty() || t.front() == '#')
            continue;
        for (auto& w : preprocess(t, {}))
            out.insert(std::move(w));
    }
    return out;
}

inline StopWords load_stopwords(const std::string& path) { return parse_stopwords(read_file(path)); }

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

using TokenList = std::vector<std::string>;

/// Word <-> index map with corpus statistics. Indices run 1..V; 0 is reserved
/// for padding and unknown words.
class Vocabulary {
public:
    struct Entry {
        std::string word;
        std::size_t total_count = 0;
        std::size_t doc_count = 0;
    };

    Vocabulary() = default;

    /// `entries` in index order (entry k gets index k + 1).
    Vocabulary(std::vector<Entry> entries, std::size_t corpus_size, std::size_t unfiltered_size = 0)
        : entries_(std::move(entries)), n_docs_(corpus_size), unfiltered_size_(unfiltered_size)
    {
        for (std::size_t k = 0; k < entries_.size(); ++k)
            if (!index_.emplace(entries_[k].word, static_cast<int>(k + 1)).second)
                throw DuplicateError("vocabulary word '" + entries_[k].word + "' listed twice");
    }

    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t corpus_size() const noexcept { return n_docs_; }
    std::size_t unfiltered_size() const noexcept { return unfiltered_size_; }
    const std::vector<Entry>& entries() const noexcept { return entries_; }

    /// 0 when unknown.
    int index(std::string_view word) const
    {
        auto it = index_.find(std::string(word));
        return it == index_.end() ? 0 : it->second;
    }

    const std::string& word(int index) const
    {
        if (index < 1 || static_cast<std::size_t>(index) > entries_.size())
            throw IndexError("vocabulary index " + std::to_string(index) + " out of range");
        return entries_[static_cast<std::size_t>(index - 1)].word;
    }

    std::vector<std::string> words() const
    {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_)
            out.push_back(e.word);
        return out;
    }

    /// Sub-vocabulary keeping the given words in the given order.
    Vocabulary restrict_to(std::span<const std::string> keep) const
    {
        std::vector<Entry> out;
        for (const auto& w : keep) {
            const int i = index(w);
            if (i == 0)
                throw LookupError("word '" + w + "' is not in the vocabulary");
            out.push_back(entries_[static_cast<std::size_t>(i - 1)]);
        }
        return {std::move(out), n_docs_, unfiltered_size_};
    }

    std::string hash() const
    {
        std::uint64_t h = fnv1a("vocabulary");
        for (const auto& e : entries_) {
            h = fnv1a(e.word, h);
            h = fnv1a(std::string_view("\n", 1), h);
        }
        return hex64(h);
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, int> index_;
    std::size_t n_docs_ = 0;
    std::size_t unfiltered_size_ = 0;
};

struct VocabularyOptions {
    std::size_t min_count = 7;
    double max_doc_frac = 0.40;
};

/// Keeps words with total_count >= min_count and doc_count / N <= max_doc_frac.
/// Index order: descending total count, ties broken lexicographically.
inline Vocabulary build_vocabulary(std::span<const TokenList> docs, VocabularyOptions opt = {})
{
    if (docs.empty())
        throw EmptyVocabError("build_vocabulary: no documents");
    std::map<std::string, Vocabulary::Entry> counts;
    for (const auto& doc : docs) {
        std::unordered_set<std::string_view> seen;
        for (const auto& w : doc) {
            auto& e = counts[w];
            ++e.total_count;
            if (seen.insert(w).second)
                ++e.doc_count;
        }
    }
    const double n = static_cast<double>(docs.size());
    std::vector<Vocabulary::Entry> kept;
    for (auto& [word, e] : counts) {
        e.word = word;
        if (e.total_count >= opt.min_count && static_cast<double>(e.doc_count) <= opt.max_doc_frac * n)
            kept.push_back(e);
    }
    if (kept.empty())
        throw EmptyVocabError("build_vocabulary: every word was removed by the frequency filters");
    std::stable_sort(kept.begin(), kept.end(),
                     [](const auto& a, const auto& b) { return a.total_count > b.total_count; });
    return {std::move(kept), docs.size(), counts.size()};
}

// ---------------------------------------------------------------------------
// Integer sequences
// ---------------------------------------------------------------------------

enum class IdMode {
    training, ///< out-of-vocabulary tokens are dropped
    inference ///< out-of-vocabulary tokens map to 0
};

struct TokenSequence {
    Date date{};
    std::vector<int> ids;

    std::size_t length() const noexcept { return ids.size(); }
};

inline TokenSequence to_ids(const TokenList& tokens, const Vocabulary& vocab, IdMode mode, Date date = {})
{
    TokenSequence seq{date, {}};
    seq.ids.reserve(tokens.size());
    for (const auto& t : tokens) {
        const int id = vocab.index(t);
        if (id != 0 || mode == IdMode::inference)
            seq.ids.push_back(id);
    }
    return seq;
}

/// Fixed-width rows: ids followed by zero padding, truncated at the tail when longer than S.
struct PaddedBatch {
    std::size_t S = 0;
    std::vector<int> ids; // rows() * S, row-major

    std::size_t rows() const noexcept { return S ? ids.size() / S : 0; }
    std::span<const int> row(std::size_t r) const { return {ids.data() + r * S, S}; }
};

inline PaddedBatch pad_batch(std::span<const TokenSequence> sequences, std::size_t S)
{
    PaddedBatch out{S, std::vector<int>(sequences.size() * S, 0)};
    for (std::size_t r = 0; r < sequences.size(); ++r) {
        const auto& ids = sequences[r].ids;
        std::copy_n(ids.begin(), std::min(ids.size(), S), out.ids.begin() + static_cast<std::ptrdiff_t>(r * S));
    }
    return out;
}

inline std::size_t max_length(std::span<const TokenSequence> sequences)
{
    std::size_t m = 0;
    for (const auto& s : sequences)
        m = std::max(m, s.length());
    return m;
}

// ---------------------------------------------------------------------------
// Descriptive statistics
// ---------------------------------------------------------------------------

struct CorpusStats {
    std::size_t documents = 0;
    std::size_t vocabulary_before_filter = 0;
    std::size_t vocabulary_after_filter = 0;
    std::size_t max_length = 0;
    double mean_length = 0.0;
};

/// Document lengths are counted after preprocessing (before frequency filtering).
inline CorpusStats corpus_stats(std::span<const TokenList> docs, const Vocabulary& vocab)
{
    CorpusStats s;
    s.documents = docs.size();
    std::unordered_set<std::string_view> distinct;
    std::size_t total = 0;
    for (const auto& d : docs) {
        s.max_length = std::max(s.max_length, d.size());
        total += d.size();
        for (const auto& w : d)
            distinct.insert(w);
    }
    s.vocabulary_before_filter = distinct.size();
    s.vocabulary_after_filter = vocab.size();
    s.mean_length = docs.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(docs.size());
    return s;
}

} // namespace textcast
