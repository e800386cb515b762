// include/findpo/fixture.hpp
#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "findpo/core.hpp"
#include "findpo/ingest.hpp"
#include "findpo/prefdata.hpp"
#include "findpo/random.hpp"

namespace findpo::fixture {

namespace fs = std::filesystem;

/// Synthetic desk-scale market: returns with a common market factor plus
/// idiosyncratic noise, and articles whose label tracks the cross-sectional
/// rank of the return on the trading day the article trades (same-day
/// convention) with probability `rho`. Each article also carries a `score`:
/// the rank mapped to [-1, 1] when informative, uniform noise otherwise.
struct FixtureConfig {
    std::uint64_t seed = 7;
    std::size_t n_tickers = 5;
    std::size_t n_days = 30;
    std::size_t n_articles = 50;
    std::size_t n_samples = 300;
    double rho = 1.0;
    double dispersion = 0.02;     // idiosyncratic daily vol
    double market_vol = 0.01;
    double market_drift = 0.0004;
    double weekend_share = 0.1;   // articles stamped on the weekend before their trade day
    double low_confidence_share = 0.1;
    Date start = Date{std::chrono::year{2021}, std::chrono::January, std::chrono::day{4}};

    void validate() const {
        if (n_tickers == 0 || n_days == 0 || n_articles == 0 || n_samples == 0)
            throw Error("fixture sizes must be positive");
        if (!(rho >= 0.0 && rho <= 1.0)) throw Error("rho must lie in [0,1]");
        if (!(dispersion >= 0.0) || !(market_vol >= 0.0)) throw Error("volatilities must be non-negative");
    }
};

inline constexpr std::array<std::string_view, 8> kPositiveWords = {
    "surge", "beat", "upgrade", "record", "growth", "rally", "outperform", "bullish"};
inline constexpr std::array<std::string_view, 8> kNegativeWords = {
    "plunge", "miss", "downgrade", "lawsuit", "slump", "recall", "underperform", "bearish"};
inline constexpr std::array<std::string_view, 8> kNeutralWords = {
    "announce", "schedule", "meeting", "filing", "update", "conference", "appoint", "statement"};
inline constexpr std::array<std::string_view, 6> kFiller = {"company", "shares", "market", "quarter",
                                                             "investors", "today"};

struct FixtureFiles {
    fs::path articles, prices, samples, benchmark, lexicon;
};

namespace detail {

inline std::string ticker_name(std::size_t i) {
    std::string t = "T";
    std::string digits = std::to_string(i);
    while (digits.size() < 3) digits.insert(digits.begin(), '0');
    return t + digits;
}

template <std::size_t N>
std::string_view pick(rng::Stream& s, const std::array<std::string_view, N>& words) {
    return words[static_cast<std::size_t>(s.below(N))];
}

/// `strength` class words mixed with two filler words, in a seeded order.
inline std::string make_text(rng::Stream& s, Label label, std::size_t strength, std::string_view ticker) {
    std::vector<std::string> words;
    for (std::size_t i = 0; i < strength; ++i) {
        switch (label) {
            case Label::positive: words.emplace_back(pick(s, kPositiveWords)); break;
            case Label::negative: words.emplace_back(pick(s, kNegativeWords)); break;
            case Label::neutral: words.emplace_back(pick(s, kNeutralWords)); break;
        }
    }
    words.emplace_back(pick(s, kFiller));
    words.emplace_back(pick(s, kFiller));
    s.shuffle(words);
    std::string text(ticker);
    for (const auto& w : words) text += " " + w;
    return text + ".";
}

inline std::vector<Date> business_days(Date start, std::size_t n) {
    using namespace std::chrono;
    std::vector<Date> out;
    sys_days d{start};
    while (out.size() < n) {
        const weekday wd{d};
        if (wd != Saturday && wd != Sunday) out.emplace_back(d);
        d += days{1};
    }
    return out;
}

}  // namespace detail

/// Writes articles.jsonl, prices.csv, samples.jsonl, benchmark.csv and
/// lexicon.csv into `dir`. Identical config gives identical bytes.
inline FixtureFiles gen_fixture(const FixtureConfig& cfg, const fs::path& dir) {
    using namespace std::chrono;
    cfg.validate();
    fs::create_directories(dir);
    FixtureFiles files{dir / "articles.jsonl", dir / "prices.csv", dir / "samples.jsonl",
                       dir / "benchmark.csv", dir / "lexicon.csv"};

    const auto days = detail::business_days(cfg.start, cfg.n_days);
    std::vector<std::string> tickers;
    for (std::size_t i = 0; i < cfg.n_tickers; ++i) tickers.push_back(detail::ticker_name(i));

    // Market data.
    rng::Stream mkt(rng::stage_seed(cfg.seed, "fixture.returns"));
    std::vector<std::vector<double>> ret(cfg.n_days, std::vector<double>(cfg.n_tickers));
    std::vector<double> market(cfg.n_days);
    {
        std::ofstream prices(files.prices, std::ios::trunc);
        std::ofstream bench(files.benchmark, std::ios::trunc);
        prices << "date,ticker,simple_return\n";
        bench << "date,return\n";
        for (std::size_t t = 0; t < cfg.n_days; ++t) {
            market[t] = cfg.market_drift + cfg.market_vol * mkt.normal();
            for (std::size_t i = 0; i < cfg.n_tickers; ++i) {
                const double r = market[t] + cfg.dispersion * mkt.normal();
                ret[t][i] = std::clamp(r, -0.5, 0.5);
                prices << to_string(days[t]) << ',' << tickers[i] << ',' << format_double(ret[t][i]) << '\n';
            }
            bench << to_string(days[t]) << ',' << format_double(market[t]) << '\n';
        }
    }

    // Articles.
    {
        rng::Stream s(rng::stage_seed(cfg.seed, "fixture.articles"));
        std::ofstream out(files.articles, std::ios::trunc);
        for (std::size_t a = 0; a < cfg.n_articles; ++a) {
            const auto t = static_cast<std::size_t>(s.below(cfg.n_days));
            const auto i = static_cast<std::size_t>(s.below(cfg.n_tickers));
            // Cross-sectional rank of this name's return that day, in [0, 1].
            std::size_t below = 0;
            for (std::size_t j = 0; j < cfg.n_tickers; ++j) below += ret[t][j] < ret[t][i];
            const double q = cfg.n_tickers > 1
                                 ? static_cast<double>(below) / static_cast<double>(cfg.n_tickers - 1)
                                 : 0.5;
            Label label;
            std::size_t strength;
            double score;
            if (s.uniform() < cfg.rho) {
                label = q >= 0.5 ? Label::positive : Label::negative;
                strength = 1 + static_cast<std::size_t>(std::floor(std::abs(q - 0.5) * 6.0));
                score = 2.0 * q - 1.0;
            } else {
                label = kLabels[static_cast<std::size_t>(s.below(kNumLabels))];
                strength = 1 + static_cast<std::size_t>(s.below(3));
                score = 2.0 * s.uniform() - 1.0;
            }
            ingest::ArticleRecord rec;
            rec.id = "a" + std::to_string(a);
            rec.ticker = tickers[i];
            rec.date = days[t];
            // Stamp some articles on the preceding weekend; they map forward to a Monday.
            if (weekday{sys_days{days[t]}} == Monday && s.uniform() < cfg.weekend_share * 5.0)
                rec.date = Date{sys_days{days[t]} - std::chrono::days{1 + s.below(2)}};
            rec.text = detail::make_text(s, label, strength, tickers[i]);
            rec.label = label;
            rec.score = score;
            rec.ner_confidence = s.uniform() < cfg.low_confidence_share ? 0.90 + 0.08 * s.uniform()
                                                                         : 0.981 + 0.019 * s.uniform();
            out << ingest::serialize_article(rec) << '\n';
        }
    }

    // Labeled training samples; every third one carries a five-level label.
    {
        rng::Stream s(rng::stage_seed(cfg.seed, "fixture.samples"));
        std::ofstream out(files.samples, std::ios::trunc);
        static constexpr std::array<std::string_view, 3> sources = {"FPB", "TFNS", "NWGI"};
        for (std::size_t n = 0; n < cfg.n_samples; ++n) {
            const Label label = kLabels[n % kNumLabels];
            const std::size_t strength = 1 + static_cast<std::size_t>(s.below(3));
            nlohmann::ordered_json j;
            j["text"] = detail::make_text(s, label, strength, "Company");
            const auto source = sources[(n / kNumLabels) % sources.size()];
            if (source == "NWGI") {
                const bool strong = strength >= 2;
                switch (label) {
                    case Label::positive: j["label5"] = strong ? "strongly positive" : "mildly positive"; break;
                    case Label::negative: j["label5"] = strong ? "strongly negative" : "mildly negative"; break;
                    case Label::neutral: j["label5"] = "neutral"; break;
                }
            } else {
                j["label"] = std::string(to_string(label));
            }
            j["source"] = std::string(source);
            out << j.dump() << '\n';
        }
    }

    {
        std::ofstream out(files.lexicon, std::ios::trunc);
        for (auto w : kPositiveWords) out << w << ",1\n";
        for (auto w : kNegativeWords) out << w << ",-1\n";
    }
    return files;
}

}  // namespace findpo::fixture
