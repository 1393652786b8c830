#pragma once

#include <map>
#include <optional>

#include "textcast/corpus.hpp"
#include "textcast/series.hpp"

namespace textcast {

/// How a cluster's words enter the daily documents.
enum class ClusterKind {
    seasonal_up,   // frequent in winter
    seasonal_down, // frequent in summer
    weekday,       // word i appears on every day with ISO weekday index i
    noise,         // fills the document up to its length
};

inline std::string to_string(ClusterKind k)
{
    switch (k) {
    case ClusterKind::seasonal_up: return "seasonal_up";
    case ClusterKind::seasonal_down: return "seasonal_down";
    case ClusterKind::weekday: return "weekday";
    case ClusterKind::noise: return "noise";
    }
    return "noise";
}

inline ClusterKind parse_cluster_kind(std::string_view s)
{
    if (s == "seasonal_up")
        return ClusterKind::seasonal_up;
    if (s == "seasonal_down")
        return ClusterKind::seasonal_down;
    if (s == "weekday")
        return ClusterKind::weekday;
    if (s == "noise")
        return ClusterKind::noise;
    throw ConfigError("unknown cluster kind '" + std::string(s) + "'");
}

struct WordCluster {
    std::string name;
    ClusterKind kind = ClusterKind::noise;
    std::vector<std::string> words;
    std::vector<double> effects; // additive effect of each word's presence, target units
};

struct SynthSpec {
    std::size_t n_days = 2000;
    Date start = parse_date("2010-01-01");
    std::vector<WordCluster> clusters;
    double base_level = 100.0;
    std::optional<double> noise_std; // unset: chosen so the oracle reaches target_r2
    double target_r2 = 0.9;
    std::size_t words_per_doc = 20;   // in-vocabulary tokens per document
    double base_rate = 0.05;          // seasonal word inclusion probability off season
    double peak_rate = 0.55;          // extra probability at the seasonal peak
    std::vector<std::string> filler{"report"}; // in every document; removed by the frequency filter
    std::uint64_t seed = 42;

    void validate() const;
    std::vector<std::pair<std::string, double>> ground_truth() const;
};

inline SynthSpec default_synth_spec()
{
    SynthSpec s;
    s.clusters.push_back({"winter", ClusterKind::seasonal_up, {"frost", "snow", "icy", "freezing", "blizzard"}, {}});
    s.clusters.push_back({"summer", ClusterKind::seasonal_down, {"sunny", "heatwave", "warm", "thunderstorms", "humid"}, {}});
    s.clusters.push_back({"weekday",
                          ClusterKind::weekday,
                          {"monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"},
                          {2, 2, 2, 2, 2, -2, -2}});
    s.clusters[0].effects.assign(5, 5.0);
    s.clusters[1].effects.assign(5, -5.0);
    WordCluster noise{"noise", ClusterKind::noise, {}, {}};
    noise.words = {"market",  "river",   "garden",  "window",  "bridge",  "castle",  "violin",  "pepper",  "carpet",
                   "ladder",  "marble",  "pencil",  "rocket",  "saddle",  "tunnel",  "velvet",  "walnut",  "anchor",
                   "basket",  "candle",  "dragon",  "engine",  "falcon",  "goblet",  "harbor",  "island",  "jacket",
                   "kettle",  "lantern", "magnet",  "needle",  "orchid",  "paddle",  "quiver",  "ribbon",  "silver",
                   "timber",  "umpire",  "vessel",  "wagon",   "yogurt",  "zipper",  "acorn",   "beacon",  "cobalt",
                   "dollar",  "ember",   "fabric",  "glider",  "hammer",  "indigo",  "jigsaw",  "kernel",  "lizard",
                   "meadow",  "nectar",  "oyster",  "parrot",  "quartz",  "raisin",  "signal",  "turnip",  "utensil",
                   "vendor",  "wizard",  "almond",  "bishop",  "cactus",  "donkey",  "eagle",   "fossil",  "ginger",
                   "helmet",  "insect",  "jungle",  "koala",   "lemon",   "mirror",  "nickel",  "oxygen",  "puzzle",
                   "rabbit",  "tomato"};
    noise.effects.assign(noise.words.size(), 0.0);
    s.clusters.push_back(std::move(noise));
    return s;
}

inline void SynthSpec::validate() const
{
    if (n_days == 0)
        throw SpecError("synth: n_days must be positive");
    if (!(target_r2 > 0.0 && target_r2 <= 1.0))
        throw SpecError("synth: target_r2 must lie in (0, 1]");
    if (noise_std && !(*noise_std >= 0.0))
        throw SpecError("synth: noise_std must be non-negative");
    if (!(base_rate >= 0.0 && peak_rate >= 0.0 && base_rate + peak_rate <= 1.0))
        throw SpecError("synth: inclusion rates must form a probability");
    std::unordered_set<std::string> seen(filler.begin(), filler.end());
    std::size_t noise_words = 0;
    for (const auto& c : clusters) {
        if (c.words.size() != c.effects.size())
            throw SpecError("synth: cluster '" + c.name + "' needs one effect per word");
        if (c.kind == ClusterKind::weekday && c.words.size() > 7)
            throw SpecError("synth: weekday cluster '" + c.name + "' has more than 7 words");
        for (std::size_t i = 0; i < c.words.size(); ++i) {
            if (!std::isfinite(c.effects[i]))
                throw SpecError("synth: effect of '" + c.words[i] + "' is not finite");
            if (c.kind == ClusterKind::noise && c.effects[i] != 0.0)
                throw SpecError("synth: noise word '" + c.words[i] + "' must have zero effect");
            if (!seen.insert(c.words[i]).second)
                throw SpecError("synth: word '" + c.words[i] + "' appears in two clusters");
            const auto tokens = preprocess(c.words[i], {});
            if (tokens.size() != 1 || tokens[0] != c.words[i])
                throw SpecError("synth: word '" + c.words[i] + "' must be a single lowercase alphabetic token");
        }
        if (c.kind == ClusterKind::noise)
            noise_words += c.words.size();
    }
    if (noise_words == 0 && words_per_doc > 0) {
        bool only_empty = true;
        for (const auto& c : clusters)
            only_empty = only_empty && c.words.empty();
        if (!only_empty)
            throw SpecError("synth: a noise cluster is required to fill documents");
    }
}

inline std::vector<std::pair<std::string, double>> SynthSpec::ground_truth() const
{
    std::vector<std::pair<std::string, double>> out;
    for (const auto& c : clusters)
        for (std::size_t i = 0; i < c.words.size(); ++i)
            out.emplace_back(c.words[i], c.effects[i]);
    return out;
}

struct SynthBundle {
    std::vector<RawDocument> documents;
    TimeSeries target;
    TimeSeries temperature;
    TimeSeries wind;
    std::vector<std::pair<std::string, double>> ground_truth; // word, effect
    std::vector<double> noiseless;                            // base + sum of effects
    double base_level = 0.0;
    double noise_std = 0.0;
};

/// Annual cycle peaking mid-January: +1 in winter, -1 in summer.
inline double season_signal(Date d)
{
    return std::cos(2.0 * std::numbers::pi * (static_cast<double>(day_of_year(d)) - 15.0) / 365.25);
}

/// base + sum of the effects of the distinct words present in the document.
inline double oracle_predict(std::span<const std::string> tokens,
                             std::span<const std::pair<std::string, double>> ground_truth, double base)
{
    std::unordered_map<std::string, double> effect(ground_truth.begin(), ground_truth.end());
    std::unordered_set<std::string> seen;
    double y = base;
    for (const auto& t : tokens)
        if (seen.insert(t).second) {
            auto it = effect.find(t);
            if (it != effect.end())
                y += it->second;
        }
    return y;
}

/// Each day draws seasonal words (each independently, with a probability
/// following the annual cycle), the weekday word for that day, and noise words
/// up to words_per_doc tokens. Every informative word appears at most once per
/// document. y_t = base + sum of effects + N(0, noise_std^2).
inline SynthBundle generate(const SynthSpec& spec, std::uint64_t seed)
{
    spec.validate();
    Rng text_rng(derive_seed(seed, 1));
    Rng noise_rng(derive_seed(seed, 2));
    Rng cov_rng(derive_seed(seed, 3));

    std::vector<std::string> noise_words;
    for (const auto& c : spec.clusters)
        if (c.kind == ClusterKind::noise)
            noise_words.insert(noise_words.end(), c.words.begin(), c.words.end());

    SynthBundle b;
    b.base_level = spec.base_level;
    b.ground_truth = spec.ground_truth();
    std::vector<Date> dates;
    std::vector<double> temperature, wind;
    for (std::size_t t = 0; t < spec.n_days; ++t) {
        const Date d = spec.start + std::chrono::days{static_cast<long>(t)};
        dates.push_back(d);
        const double s = season_signal(d);
        const double p_up = spec.base_rate + spec.peak_rate * std::max(0.0, s);
        const double p_down = spec.base_rate + spec.peak_rate * std::max(0.0, -s);

        std::vector<std::string> tokens;
        double y = spec.base_level;
        for (const auto& c : spec.clusters) {
            for (std::size_t i = 0; i < c.words.size(); ++i) {
                bool present = false;
                switch (c.kind) {
                case ClusterKind::seasonal_up: present = text_rng.uniform() < p_up; break;
                case ClusterKind::seasonal_down: present = text_rng.uniform() < p_down; break;
                case ClusterKind::weekday: present = static_cast<int>(i) == weekday_index(d); break;
                case ClusterKind::noise: break;
                }
                if (present) {
                    tokens.push_back(c.words[i]);
                    y += c.effects[i];
                }
            }
        }
        while (tokens.size() < spec.words_per_doc && !noise_words.empty())
            tokens.push_back(noise_words[text_rng.below(noise_words.size())]);
        text_rng.shuffle(tokens);

        std::string text;
        for (const auto& f : spec.filler)
            text += (text.empty() ? "" : " ") + f;
        if (!text.empty()) {
            text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
            text += ":";
        }
        for (std::size_t k = 0; k < tokens.size(); ++k)
            text += (k == 0 ? " " : k % 6 == 0 ? ". The " : k % 3 == 0 ? ", and " : " ") + tokens[k];
        if (!tokens.empty())
            text += ".";
        b.documents.push_back({d, std::string(trim(text))});
        b.noiseless.push_back(y);

        temperature.push_back(12.0 - 8.0 * s + cov_rng.normal(0.0, 2.0));
        wind.push_back(std::max(0.0, 5.0 + 1.5 * s + cov_rng.normal(0.0, 1.5)));
    }

    if (spec.noise_std) {
        b.noise_std = *spec.noise_std;
    } else {
        const double mu = mean(b.noiseless);
        double var = 0.0;
        for (double v : b.noiseless)
            var += (v - mu) * (v - mu);
        var /= static_cast<double>(b.noiseless.size());
        b.noise_std = std::sqrt(var * (1.0 / spec.target_r2 - 1.0));
    }
    std::vector<double> y = b.noiseless;
    if (b.noise_std > 0.0)
        for (auto& v : y)
            v += noise_rng.normal(0.0, b.noise_std);
    b.target = TimeSeries(dates, std::move(y), Unit::megawatt);
    b.temperature = TimeSeries(dates, std::move(temperature), Unit::celsius);
    b.wind = TimeSeries(dates, std::move(wind), Unit::metre_per_second);
    return b;
}

inline std::string serialize_ground_truth(std::span<const std::pair<std::string, double>> gt)
{
    std::string out = "word,effect\n";
    for (const auto& [w, e] : gt)
        out += w + "," + format_double(e) + "\n";
    return out;
}

inline std::vector<std::pair<std::string, double>> parse_ground_truth(std::string_view text)
{
    std::vector<std::pair<std::string, double>> out;
    std::size_t line_no = 0;
    for (const auto& line : split(text, '\n')) {
        ++line_no;
        if (line_no == 1 || trim(line).empty())
            continue;
        const auto f = split(line, ',');
        if (f.size() != 2)
            throw ParseError("ground truth rows need a word and an effect", line_no);
        try {
            out.emplace_back(std::string(trim(f[0])), parse_double(f[1]));
        } catch (const Error& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return out;
}

} // namespace textcast
