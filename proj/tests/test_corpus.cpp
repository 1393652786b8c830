#include <gtest/gtest.h>

#include "textcast/corpus.hpp"

using namespace textcast;

TEST(Documents, SortedAndValidated)
{
    const auto docs = parse_documents(R"({"date": "2016-02-02", "text": "b"})"
                                      "\n"
                                      R"({"date": "2016-02-01", "text": "a"})"
                                      "\n");
    ASSERT_EQ(docs.size(), 2u);
    EXPECT_EQ(format_date(docs[0].date), "2016-02-01");
    EXPECT_EQ(docs[1].text, "b");
    EXPECT_THROW(parse_documents(R"({"date": "2016-02-01", "text": "a"})"
                                 "\n"
                                 R"({"date": "2016-02-01", "text": "b"})"),
                 DuplicateError);
    const auto empty = parse_documents(R"({"date": "2016-02-01", "text": ""})");
    ASSERT_EQ(empty.size(), 1u);
    EXPECT_TRUE(preprocess(empty[0].text, {}).empty());
}

TEST(Documents, MalformedLineNumber)
{
    try {
        parse_documents(R"({"date": "2016-02-01", "text": "a"})"
                        "\n{oops\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(Documents, SerializeRoundTrip)
{
    const std::vector<RawDocument> docs{{parse_date("2016-01-01"), "Pluie \"forte\" sur l'Écosse"},
                                        {parse_date("2016-01-02"), ""}};
    EXPECT_EQ(parse_documents(serialize_documents(docs)), docs);
}

TEST(Preprocess, Examples)
{
    EXPECT_EQ(preprocess("Overnight, rain pushed northwards across Scotland.", {"across"}),
              (TokenList{"overnight", "rain", "pushed", "northwards", "scotland"}));
    EXPECT_TRUE(preprocess("", {}).empty());
    EXPECT_EQ(preprocess("01 February 2016", {}), (TokenList{"february"}));
}

TEST(Preprocess, AccentedLettersAreAlphabetic)
{
    EXPECT_EQ(preprocess("Éclaircies l'après-midi, GRÊLE!", {"l"}),
              (TokenList{"éclaircies", "après", "midi", "grêle"}));
}

TEST(Preprocess, Idempotent)
{
    const StopWords sw{"the", "of"};
    for (std::string text : {"The rain of SPAIN falls, mainly.", "a1b2c3 Ça--va?", "  \t"}) {
        const auto once = preprocess(text, sw);
        std::string joined;
        for (const auto& t : once)
            joined += t + " ";
        EXPECT_EQ(preprocess(joined, sw), once);
    }
}

TEST(Stopwords, FileFormat)
{
    const auto sw = parse_stopwords("# comment\nThe\n\n  and \n");
    EXPECT_EQ(sw.size(), 2u);
    EXPECT_TRUE(sw.contains("the"));
    EXPECT_TRUE(sw.contains("and"));
}

TEST(Vocabulary, FrequencyFilters)
{
    std::vector<TokenList> docs(100);
    for (int i = 0; i < 6; ++i)
        docs[i].push_back("rare"); // 6 occurrences
    for (int i = 0; i < 41; ++i)
        docs[i].push_back("common"); // 41% of documents
    for (int i = 0; i < 40; ++i)
        docs[50 + i].push_back("edge"); // exactly 40%
    for (int i = 0; i < 7; ++i)
        docs[99].push_back("burst");
    const auto v = build_vocabulary(docs);
    EXPECT_EQ(v.index("rare"), 0);
    EXPECT_EQ(v.index("common"), 0);
    EXPECT_EQ(v.index("edge"), 1);
    EXPECT_EQ(v.index("burst"), 2);
    EXPECT_EQ(v.unfiltered_size(), 4u);
}

TEST(Vocabulary, RainAndGale)
{
    std::vector<TokenList> docs(10, TokenList{"rain"});
    for (int i = 0; i < 7; ++i)
        docs[i % 3].push_back("gale");
    const auto v = build_vocabulary(docs);
    EXPECT_EQ(v.index("rain"), 0);
    EXPECT_EQ(v.index("gale"), 1);
    EXPECT_EQ(v.entries()[0].doc_count, 3u);
    EXPECT_EQ(v.entries()[0].total_count, 7u);
}

TEST(Vocabulary, DeterministicOrderAndInvariants)
{
    Rng rng(4);
    const std::vector<std::string> pool{"a", "b", "c", "d", "e", "f", "g", "h"};
    std::vector<TokenList> docs(40);
    for (auto& d : docs)
        for (int i = 0; i < 6; ++i)
            d.push_back(pool[rng.below(pool.size())]);
    const auto v1 = build_vocabulary(docs, {3, 0.6});
    const auto v2 = build_vocabulary(docs, {3, 0.6});
    EXPECT_EQ(v1.words(), v2.words());
    for (std::size_t k = 0; k < v1.size(); ++k) {
        const auto& e = v1.entries()[k];
        EXPECT_GE(e.total_count, 3u);
        EXPECT_LE(static_cast<double>(e.doc_count) / 40.0, 0.6);
        if (k > 0) {
            const auto& p = v1.entries()[k - 1];
            EXPECT_TRUE(p.total_count > e.total_count || (p.total_count == e.total_count && p.word < e.word));
        }
    }
    EXPECT_EQ(v1.hash(), v2.hash());
}

TEST(Vocabulary, EmptyResultThrows)
{
    std::vector<TokenList> docs(3, TokenList{"x"});
    EXPECT_THROW(build_vocabulary(docs), EmptyVocabError);
    EXPECT_THROW(build_vocabulary(std::vector<TokenList>{}), EmptyVocabError);
}

TEST(Vocabulary, RestrictKeepsGivenOrder)
{
    const Vocabulary v({{"a", 9, 1}, {"b", 8, 1}, {"c", 7, 1}}, 5);
    const std::vector<std::string> keep{"c", "a"};
    const auto r = v.restrict_to(keep);
    EXPECT_EQ(r.index("c"), 1);
    EXPECT_EQ(r.index("a"), 2);
    EXPECT_EQ(r.index("b"), 0);
    EXPECT_THROW(v.restrict_to(std::vector<std::string>{"zz"}), LookupError);
    EXPECT_THROW(v.word(4), IndexError);
}

TEST(Ids, TrainingAndInferenceModes)
{
    const Vocabulary v({{"rain", 9, 1}, {"wind", 8, 1}, {"snow", 7, 1}}, 5);
    EXPECT_EQ(to_ids({"snow", "rain", "wind"}, v, IdMode::training).ids, (std::vector<int>{3, 1, 2}));
    EXPECT_EQ(to_ids({"rain", "fog", "wind"}, v, IdMode::inference).ids, (std::vector<int>{1, 0, 2}));
    EXPECT_EQ(to_ids({"rain", "fog", "wind"}, v, IdMode::training).ids, (std::vector<int>{1, 2}));
}

TEST(Ids, PadBatch)
{
    const std::vector<TokenSequence> seqs{{{}, {3, 1, 4}}, {{}, {}}, {{}, {1, 2, 3, 4, 5, 6}}};
    const auto b = pad_batch(seqs, 5);
    ASSERT_EQ(b.rows(), 3u);
    EXPECT_TRUE(std::ranges::equal(b.row(0), std::vector<int>{3, 1, 4, 0, 0}));
    EXPECT_TRUE(std::ranges::equal(b.row(1), std::vector<int>{0, 0, 0, 0, 0}));
    EXPECT_TRUE(std::ranges::equal(b.row(2), std::vector<int>{1, 2, 3, 4, 5}));
    EXPECT_EQ(max_length(seqs), 6u);
}

TEST(Stats, LengthsAndVocabularySizes)
{
    const Vocabulary v({{"a", 9, 1}}, 1);
    const std::vector<TokenList> one{{"a", "b", "c", "d"}};
    const auto s1 = corpus_stats(one, v);
    EXPECT_EQ(s1.max_length, 4u);
    EXPECT_EQ(s1.mean_length, 4.0);
    EXPECT_EQ(s1.vocabulary_before_filter, 4u);
    EXPECT_EQ(s1.vocabulary_after_filter, 1u);
    const std::vector<TokenList> two{{"a", "b"}, {"a", "b", "c", "d"}};
    EXPECT_EQ(corpus_stats(two, v).mean_length, 3.0);
}
