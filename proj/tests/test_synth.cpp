#include <gtest/gtest.h>

#include "textcast/synth.hpp"

using namespace textcast;

TEST(Synth, DefaultSpecShape)
{
    const auto s = default_synth_spec();
    EXPECT_NO_THROW(s.validate());
    std::size_t words = 0, up = 0, down = 0, weekday = 0, noise = 0;
    for (const auto& c : s.clusters) {
        words += c.words.size();
        const auto n = c.words.size();
        switch (c.kind) {
        case ClusterKind::seasonal_up: up += n; break;
        case ClusterKind::seasonal_down: down += n; break;
        case ClusterKind::weekday: weekday += n; break;
        case ClusterKind::noise: noise += n; break;
        }
    }
    EXPECT_EQ(words, 100u);
    EXPECT_EQ(up, 5u);
    EXPECT_EQ(down, 5u);
    EXPECT_EQ(weekday, 7u);
    EXPECT_EQ(noise, 83u);
    EXPECT_EQ(s.n_days, 2000u);
}

TEST(Synth, NoiselessTargetIsBasePlusEffects)
{
    auto spec = default_synth_spec();
    spec.n_days = 200;
    spec.noise_std = 0.0;
    const auto b = generate(spec, 5);
    for (std::size_t t = 0; t < b.documents.size(); ++t) {
        const auto tokens = preprocess(b.documents[t].text, {});
        const double oracle = oracle_predict(tokens, b.ground_truth, spec.base_level);
        EXPECT_DOUBLE_EQ(b.target.values()[t], oracle);
        EXPECT_DOUBLE_EQ(b.noiseless[t], oracle);
    }
}

TEST(Synth, EmptyClustersGiveConstantSeries)
{
    SynthSpec spec;
    spec.n_days = 30;
    spec.noise_std = 0.0;
    const auto b = generate(spec, 1);
    for (double v : b.target.values())
        EXPECT_EQ(v, spec.base_level);
}

TEST(Synth, OracleR2MatchesVarianceDecomposition)
{
    auto spec = default_synth_spec();
    const auto b = generate(spec, 11);
    const auto& y = b.target.values();
    const double ym = mean(y);
    double sse = 0, sst = 0, var_signal = 0;
    const double sm = mean(b.noiseless);
    for (std::size_t t = 0; t < y.size(); ++t) {
        sse += (y[t] - b.noiseless[t]) * (y[t] - b.noiseless[t]);
        sst += (y[t] - ym) * (y[t] - ym);
        var_signal += (b.noiseless[t] - sm) * (b.noiseless[t] - sm);
    }
    var_signal /= static_cast<double>(y.size());
    const double expected = var_signal / (var_signal + b.noise_std * b.noise_std);
    EXPECT_NEAR(expected, spec.target_r2, 1e-12);
    // Sampling error of R^2 over 2000 days is about 0.005.
    EXPECT_NEAR(1.0 - sse / sst, expected, 0.02);
}

TEST(Synth, OraclePredictExamples)
{
    const std::vector<std::pair<std::string, double>> gt{{"frost", 5.0}, {"sunny", -5.0}, {"market", 0.0}};
    EXPECT_EQ(oracle_predict(std::vector<std::string>{}, gt, 100.0), 100.0);
    EXPECT_EQ(oracle_predict(std::vector<std::string>{"frost", "market"}, gt, 100.0), 105.0);
    EXPECT_EQ(oracle_predict(std::vector<std::string>{"frost", "frost", "sunny"}, gt, 100.0), 100.0);
}

TEST(Synth, SeededDeterminism)
{
    auto spec = default_synth_spec();
    spec.n_days = 100;
    const auto a = generate(spec, 3), b = generate(spec, 3), c = generate(spec, 4);
    EXPECT_EQ(a.documents, b.documents);
    EXPECT_EQ(a.target, b.target);
    EXPECT_EQ(a.temperature, b.temperature);
    EXPECT_NE(a.documents, c.documents);
}

TEST(Synth, SeasonalWordsFollowTheSeason)
{
    const auto b = generate(default_synth_spec(), 2);
    int winter_frost = 0, summer_frost = 0, winter_days = 0, summer_days = 0;
    for (const auto& d : b.documents) {
        const double s = season_signal(d.date);
        const auto tokens = preprocess(d.text, {});
        const bool frost = std::ranges::find(tokens, "frost") != tokens.end();
        if (s > 0.8) {
            ++winter_days;
            winter_frost += frost;
        } else if (s < -0.8) {
            ++summer_days;
            summer_frost += frost;
        }
        const int wd = weekday_index(d.date);
        static const char* names[] = {"monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"};
        EXPECT_NE(std::ranges::find(tokens, names[wd]), tokens.end());
        EXPECT_EQ(tokens.front(), "report");
    }
    EXPECT_GT(static_cast<double>(winter_frost) / winter_days, 0.45);
    EXPECT_LT(static_cast<double>(summer_frost) / summer_days, 0.1);
}

TEST(Synth, CovariatesTrackSeason)
{
    const auto b = generate(default_synth_spec(), 6);
    double cov = 0;
    for (std::size_t t = 0; t < b.temperature.size(); ++t)
        cov += season_signal(b.temperature.dates()[t]) * (b.temperature.values()[t] - 12.0);
    EXPECT_LT(cov, 0.0);
    for (double w : b.wind.values())
        EXPECT_GE(w, 0.0);
    EXPECT_EQ(b.temperature.unit(), Unit::celsius);
}

TEST(Synth, ValidationRejectsBadSpecs)
{
    auto s = default_synth_spec();
    s.clusters.back().effects[0] = 1.0; // noise word with an effect
    EXPECT_THROW(s.validate(), SpecError);
    s = default_synth_spec();
    s.clusters[0].words[0] = "Two words";
    EXPECT_THROW(s.validate(), SpecError);
    s = default_synth_spec();
    s.clusters[1].words[0] = s.clusters[0].words[0];
    EXPECT_THROW(s.validate(), SpecError);
    s = default_synth_spec();
    s.target_r2 = 0.0;
    EXPECT_THROW(s.validate(), SpecError);
}

TEST(Synth, GroundTruthRoundTrip)
{
    const auto gt = default_synth_spec().ground_truth();
    EXPECT_EQ(parse_ground_truth(serialize_ground_truth(gt)), gt);
    try {
        parse_ground_truth("word,effect\nfrost,5\nsnow,x\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
}
