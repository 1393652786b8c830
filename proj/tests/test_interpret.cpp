#include <gtest/gtest.h>

#include "textcast/interpret.hpp"

using namespace textcast;

namespace {

Matrix embedding(const std::vector<std::vector<double>>& rows)
{
    Matrix E(rows.size() + 1, rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::ranges::copy(rows[r], E.row(r + 1).begin());
    return E;
}

std::vector<std::string> numbered(std::size_t n, const std::string& prefix)
{
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(prefix + std::to_string(i));
    return out;
}

} // namespace

TEST(Cosine, BasicValues)
{
    const std::vector<double> w{0.3, -1.2, 2.0}, neg{-0.3, 1.2, -2.0};
    EXPECT_NEAR(cosine_distance(w, w), 0.0, 1e-15);
    EXPECT_NEAR(cosine_distance(w, neg), 2.0, 1e-15);
    EXPECT_NEAR(cosine_distance(std::vector<double>{1, 0}, std::vector<double>{0, 5}), 1.0, 1e-15);
    EXPECT_THROW(cosine_distance(w, std::vector<double>(3, 0.0)), ZeroNormError);
    EXPECT_THROW(cosine_distance(w, std::vector<double>(2, 1.0)), ShapeError);
}

TEST(Cosine, SymmetricAndScaleInvariant)
{
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> a(5), b(5);
        for (auto& v : a)
            v = rng.normal();
        for (auto& v : b)
            v = rng.normal();
        const double d = cosine_distance(a, b);
        EXPECT_NEAR(cosine_distance(b, a), d, 1e-15);
        auto scaled = a;
        for (auto& v : scaled)
            v *= 3.7;
        EXPECT_NEAR(cosine_distance(scaled, b), d, 1e-14);
    }
}

TEST(Neighbors, ToyEmbedding)
{
    const std::vector<std::string> words{"word1", "word2", "word3"};
    const std::vector<Matrix> E{embedding({{1, 0}, {0.9, 0.1}, {-1, 0}})};
    const auto rep = nearest_words("word1", words, E, 5);
    ASSERT_EQ(rep.neighbors.size(), 2u);
    EXPECT_EQ(rep.neighbors[0].word, "word2");
    EXPECT_NEAR(rep.neighbors[0].score, 1.0 - 0.9 / std::sqrt(0.82), 1e-15);
    EXPECT_NEAR(rep.neighbors[0].score, 0.006116, 1e-6);
    EXPECT_EQ(rep.neighbors[1].word, "word3");
    EXPECT_NEAR(rep.neighbors[1].score, 2.0, 1e-15);
    const auto csv = serialize_neighbors(rep);
    EXPECT_NE(csv.find("query,0,word1,0.000,0.000\nneighbor,1,word2,0.006,0.000\n"), std::string::npos);
    EXPECT_THROW(nearest_words("word9", words, E, 2), LookupError);
}

TEST(Neighbors, AveragesDistancesAcrossRuns)
{
    const std::vector<std::string> words{"a", "b", "c"};
    const std::vector<Matrix> E{embedding({{1, 0}, {0, 1}, {1, 1}}), embedding({{1, 0}, {1, 0}, {0, 1}})};
    const std::vector<std::string> probes{"c"};
    const auto rep = nearest_words("a", words, E, 2, probes);
    EXPECT_EQ(rep.neighbors[0].word, "b");
    EXPECT_NEAR(rep.neighbors[0].score, 0.5, 1e-15);
    EXPECT_NEAR(rep.neighbors[0].std, std::sqrt(0.5), 1e-15);
    const double dc = 0.5 * ((1.0 - 1.0 / std::sqrt(2.0)) + 1.0);
    EXPECT_NEAR(rep.neighbors[1].score, dc, 1e-15);
    ASSERT_EQ(rep.probes.size(), 1u);
    EXPECT_NEAR(rep.probes[0].score, dc, 1e-15);
    for (std::size_t i = 1; i < rep.neighbors.size(); ++i)
        EXPECT_GE(rep.neighbors[i].score, rep.neighbors[i - 1].score);
}

TEST(Neighbors, ZeroRowsAreSkipped)
{
    const std::vector<std::string> words{"a", "b", "c"};
    const std::vector<Matrix> E{embedding({{1, 0}, {0, 0}, {1, 1}})};
    const auto rep = nearest_words("a", words, E, 5);
    ASSERT_EQ(rep.neighbors.size(), 1u);
    EXPECT_EQ(rep.neighbors[0].word, "c");
    EXPECT_THROW(nearest_words("b", words, E, 5), ZeroNormError);
}

TEST(Norms, RankingExamples)
{
    const std::vector<std::string> words{"small", "big"};
    const std::vector<Matrix> E{embedding({{1, 0}, {3, 4}})};
    const auto r = norm_ranking(words, E, 10);
    EXPECT_EQ(r[0].word, "big");
    EXPECT_DOUBLE_EQ(r[0].score, 5.0);
    EXPECT_EQ(r[0].rank, 1u);
    EXPECT_EQ(r[1].score, 1.0);
    EXPECT_NE(serialize_norm_ranking(r).find("1,big,5,0," + format_double(std::log(5.0))), std::string::npos);

    const std::vector<std::string> tied{"zeta", "alpha", "mid"};
    const std::vector<Matrix> T{embedding({{0, 2}, {2, 0}, {-2, 0}})};
    const auto t = norm_ranking(tied, T, 3);
    EXPECT_EQ(t[0].word, "alpha");
    EXPECT_EQ(t[1].word, "mid");
    EXPECT_EQ(t[2].word, "zeta");
}

TEST(Norms, SortOracleAndRotationInvariance)
{
    Rng rng(2);
    const auto words = numbered(30, "w");
    Matrix E(31, 2), R(31, 2);
    const double c = std::cos(0.7), s = std::sin(0.7);
    for (std::size_t r = 1; r <= 30; ++r) {
        E(r, 0) = rng.normal();
        E(r, 1) = rng.normal();
        R(r, 0) = c * E(r, 0) - s * E(r, 1);
        R(r, 1) = s * E(r, 0) + c * E(r, 1);
    }
    std::vector<std::pair<double, std::string>> oracle;
    for (std::size_t r = 1; r <= 30; ++r)
        oracle.emplace_back(-std::hypot(E(r, 0), E(r, 1)), words[r - 1]);
    std::ranges::sort(oracle);
    const std::vector<Matrix> a{E}, b{R};
    const auto ra = norm_ranking(words, a, 10), rb = norm_ranking(words, b, 10);
    for (std::size_t i = 0; i < 10; ++i) {
        EXPECT_EQ(ra[i].word, oracle[i].second);
        EXPECT_EQ(rb[i].word, ra[i].word);
    }
}

TEST(LassoReport, SignedLists)
{
    LassoModel m;
    m.beta = {2.0, -3.0, 0.0};
    const std::vector<std::string> words{"w1", "w2", "w3"};
    const auto fx = lasso_word_effects(m, words, 5);
    ASSERT_EQ(fx.positive.size(), 1u);
    ASSERT_EQ(fx.negative.size(), 1u);
    EXPECT_EQ(fx.positive[0].word, "w1");
    EXPECT_EQ(fx.negative[0].word, "w2");
    EXPECT_FALSE(fx.empty);
    m.beta = {0, 0, 0};
    EXPECT_TRUE(lasso_word_effects(m, words, 5).empty);
}

TEST(ForestReport, MeanAndStd)
{
    const std::vector<std::string> words{"a", "b"};
    const std::vector<ImportanceRun> one{{words, {0.3, 0.7}}};
    const auto r1 = rf_word_importance(one, 2);
    EXPECT_EQ(r1[0].word, "b");
    EXPECT_EQ(r1[0].std, 0.0);
    const std::vector<ImportanceRun> three{{words, {0.2, 0.8}}, {words, {0.4, 0.6}}, {words, {0.9, 0.1}}};
    const auto r3 = rf_word_importance(three, 2);
    EXPECT_EQ(r3[0].word, "a");
    EXPECT_NEAR(r3[0].score, 0.5, 1e-15);
    EXPECT_NEAR(r3[0].std, std::sqrt((0.09 + 0.01 + 0.16) / 2.0), 1e-15);
    const std::vector<ImportanceRun> bad{{words, {0.5, 0.5}}, {{"a", "c"}, {0.5, 0.5}}};
    EXPECT_THROW(rf_word_importance(bad, 2), SpecError);
}

TEST(Overlap, IdenticalAndDisjointLists)
{
    const auto a = numbered(60, "a");
    const auto same = selection_overlap(a, a, a);
    EXPECT_EQ(same.abc, 50u);
    EXPECT_EQ(same.total(), 50u);
    const auto d = selection_overlap(a, numbered(50, "b"), numbered(50, "c"));
    EXPECT_EQ(d.only_a + d.only_b + d.only_c, 150u);
    EXPECT_EQ(d.ab + d.ac + d.bc + d.abc, 0u);
    EXPECT_THROW(selection_overlap(a, a, numbered(49, "c")), SpecError);
}

TEST(Overlap, RegionsPartitionUnion)
{
    const std::vector<std::string> a{"x", "y", "z", "u"}, b{"y", "z", "v", "x"}, c{"z", "w", "u", "q"};
    const auto v = selection_overlap(a, b, c, 3);
    // Top 3: A={x,y,z}, B={y,z,v}, C={z,w,u}
    EXPECT_EQ(v.abc, 1u);
    EXPECT_EQ(v.ab, 1u);
    EXPECT_EQ(v.only_a, 1u);
    EXPECT_EQ(v.only_b, 1u);
    EXPECT_EQ(v.only_c, 2u);
    EXPECT_EQ(v.total(), 6u);
    EXPECT_EQ(serialize_venn(v, "rf", "lasso", "norm"),
              "region,count\nrf,1\nlasso,1\nnorm,2\nrf&lasso,1\nrf&norm,0\nlasso&norm,0\nrf&lasso&norm,1\n");
}

TEST(Export, EmbeddingRoundTrip)
{
    const std::vector<std::string> words{"frost", "sunny"};
    const auto E = embedding({{0.125, -1.0 / 3.0}, {2.5, 1e-9}});
    const auto [w, back] = parse_embedding(serialize_embedding(words, E));
    EXPECT_EQ(w, words);
    EXPECT_EQ(back.data, E.data);
    EXPECT_THROW(parse_embedding("word,e0\nx,1,2\n"), ParseError);
}
