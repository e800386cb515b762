// include/findpo/scoring.hpp
#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "findpo/core.hpp"
#include "findpo/ingest.hpp"

namespace findpo::scoring {

/// Probabilities in label order; each in [0,1], summing to 1.
using ClassProbs = Logits;

inline ClassProbs softmax_scores(const Logits& logits, double temperature = 1.0) {
    if (!(temperature > 0.0)) throw Error("temperature must be positive");
    for (double v : logits)
        if (!std::isfinite(v)) throw Error("non-finite logit");
    Logits scaled{};
    for (std::size_t k = 0; k < kNumLabels; ++k) scaled[k] = logits[k] / temperature;
    return softmax(scaled);
}

/// Signed score p(positive) - p(negative); neutral mass shrinks it toward 0.
inline double probs_to_score(const ClassProbs& p) noexcept {
    return p[index_of(Label::positive)] - p[index_of(Label::negative)];
}

// ---------------------------------------------------------------------------
// Temperature scaling
// ---------------------------------------------------------------------------

inline constexpr double kMinTemperature = 0.05;
inline constexpr double kMaxTemperature = 20.0;
inline constexpr std::size_t kTemperatureGrid = 64;
inline constexpr double kTemperatureTol = 1e-4;

struct CalibrationResult {
    double temperature = 1.0;
    double nll_before = 0.0;  // at T = 1
    double nll_after = 0.0;   // at the fitted T
    std::size_t grid_evaluations = 0;
};

/// Mean negative log-likelihood of `truths` under softmax(logits / T).
inline double mean_nll(std::span<const Logits> logits, std::span<const Label> truths, double temperature) {
    if (logits.size() != truths.size()) throw Error("logits and labels differ in length");
    if (logits.empty()) throw Error("no calibration samples");
    if (!(temperature > 0.0)) throw Error("temperature must be positive");
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        Logits z{};
        for (std::size_t k = 0; k < kNumLabels; ++k) z[k] = logits[i][k] / temperature;
        sum -= log_softmax(z)[index_of(truths[i])];
    }
    return sum / static_cast<double>(logits.size());
}

/// Log-spaced coarse grid over [0.05, 20], golden-section refinement around
/// the best grid point, and T = 1 as an explicit candidate. Near-ties (within
/// 1e-12) resolve to the candidate closest to 1 in log space.
inline CalibrationResult fit_temperature(std::span<const Logits> logits, std::span<const Label> truths) {
    if (logits.size() != truths.size()) throw Error("logits and labels differ in length");
    if (logits.empty()) throw Error("no calibration samples");

    CalibrationResult res;
    auto nll = [&](double t) {
        ++res.grid_evaluations;
        return mean_nll(logits, truths, t);
    };
    struct Candidate {
        double t;
        double v;
    };
    auto better = [](const Candidate& a, const Candidate& b) {
        constexpr double tie = 1e-12;
        if (a.v < b.v - tie) return true;
        if (b.v < a.v - tie) return false;
        return std::abs(std::log(a.t)) < std::abs(std::log(b.t));
    };

    const double lo = std::log(kMinTemperature), hi = std::log(kMaxTemperature);
    std::array<double, kTemperatureGrid> grid{};
    for (std::size_t i = 0; i < kTemperatureGrid; ++i)
        grid[i] = std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(kTemperatureGrid - 1));
    grid.front() = kMinTemperature;
    grid.back() = kMaxTemperature;

    std::size_t best_i = 0;
    Candidate best{grid[0], nll(grid[0])};
    for (std::size_t i = 1; i < kTemperatureGrid; ++i) {
        Candidate c{grid[i], nll(grid[i])};
        if (better(c, best)) {
            best = c;
            best_i = i;
        }
    }

    // Golden-section on the bracket around the best grid point.
    double a = grid[best_i == 0 ? 0 : best_i - 1];
    double b = grid[best_i + 1 < kTemperatureGrid ? best_i + 1 : best_i];
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
    double f1 = nll(x1), f2 = nll(x2);
    while (b - a > kTemperatureTol) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = nll(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = nll(x2);
        }
    }
    const double mid = std::clamp(0.5 * (a + b), kMinTemperature, kMaxTemperature);
    if (Candidate c{mid, nll(mid)}; better(c, best)) best = c;

    const Candidate unit{1.0, nll(1.0)};
    if (better(unit, best)) best = unit;

    res.temperature = best.t;
    res.nll_before = unit.v;
    res.nll_after = best.v;
    return res;
}

inline nlohmann::ordered_json to_json(const CalibrationResult& c) {
    nlohmann::ordered_json j;
    j["temperature"] = c.temperature;
    j["nll_before"] = c.nll_before;
    j["nll_after"] = c.nll_after;
    j["grid_evaluations"] = c.grid_evaluations;
    return j;
}

inline CalibrationResult calibration_from_json(const nlohmann::json& j) {
    CalibrationResult c;
    c.temperature = j.at("temperature").get<double>();
    c.nll_before = j.value("nll_before", 0.0);
    c.nll_after = j.value("nll_after", 0.0);
    c.grid_evaluations = j.value("grid_evaluations", std::size_t{0});
    if (!(c.temperature > 0.0)) throw Error("calibration temperature must be positive");
    return c;
}

// ---------------------------------------------------------------------------
// Lexicon baseline
// ---------------------------------------------------------------------------

inline const std::unordered_set<std::string>& stop_words() {
    static const std::unordered_set<std::string> words = {
        "a",    "an",   "and",  "are",  "as",    "at",   "be",   "been", "but",  "by",
        "for",  "from", "had",  "has",  "have",  "he",   "her",  "his",  "i",    "in",
        "into", "is",   "it",   "its",  "of",    "on",   "or",   "our",  "she",  "so",
        "than", "that", "the",  "their", "them", "then", "there", "these", "they", "this",
        "to",   "was",  "we",   "were", "which", "while", "who", "will", "with", "you"};
    return words;
}

/// Suffix-stripping stand-in for lemmatization; keeps stems of length >= 3.
/// Plurals follow Porter's step 1a (sses -> ss, ies -> i, ss kept, s dropped).
inline std::string stem(std::string word) {
    auto ends = [&](std::string_view suf) {
        return word.size() >= suf.size() + 3 && word.compare(word.size() - suf.size(), suf.size(), suf) == 0;
    };
    for (std::string_view suf : {"ing", "edly", "ed", "ly"}) {
        if (ends(suf)) {
            word.resize(word.size() - suf.size());
            return word;
        }
    }
    auto tail = [&](std::string_view suf) {
        return word.size() > suf.size() && word.ends_with(suf);
    };
    if (tail("sses") || tail("ies")) word.resize(word.size() - 2);
    else if (tail("s") && !tail("ss") && word.size() > 3) word.pop_back();
    return word;
}

/// Tokenize, lowercase, strip punctuation, drop stop words, stem.
inline std::vector<std::string> preprocess(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty() && !stop_words().contains(cur)) out.push_back(stem(std::move(cur)));
        cur.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c))
            cur.push_back(static_cast<char>(std::tolower(c)));
        else if (c != '\'')
            flush();
    }
    flush();
    return out;
}

/// Word -> polarity (+1 / -1). Keys are normalised through the same pipeline as text.
class Lexicon {
public:
    Lexicon() = default;
    explicit Lexicon(const std::map<std::string, int>& words) {
        for (const auto& [w, pol] : words) add(w, pol);
    }

    void add(std::string_view word, int polarity) {
        if (polarity != 1 && polarity != -1) throw Error("lexicon polarity must be +1 or -1");
        auto toks = preprocess(word);
        if (toks.size() != 1) throw Error("lexicon entry '" + std::string(word) + "' is not a single word");
        entries_[toks.front()] = polarity;
    }

    int polarity(const std::string& stemmed) const {
        auto it = entries_.find(stemmed);
        return it == entries_.end() ? 0 : it->second;
    }

    std::size_t size() const noexcept { return entries_.size(); }

private:
    std::unordered_map<std::string, int> entries_;
};

/// Lexicon file: `word,polarity` per line (polarity +1/-1 or positive/negative).
inline Lexicon read_lexicon(std::istream& in) {
    Lexicon lex;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw Error("lexicon line " + std::to_string(lineno) + ": expected word,polarity");
        const std::string word = line.substr(0, comma), pol = line.substr(comma + 1);
        int p = 0;
        if (pol == "1" || pol == "+1" || pol == "positive") p = 1;
        else if (pol == "-1" || pol == "negative") p = -1;
        else throw Error("lexicon line " + std::to_string(lineno) + ": bad polarity '" + pol + "'");
        lex.add(word, p);
    }
    return lex;
}

/// (pos - neg) / (pos + neg), or 0 when no lexicon word occurs.
inline double lexicon_score(std::string_view text, const Lexicon& lexicon) {
    long pos = 0, neg = 0;
    for (const auto& tok : preprocess(text)) {
        const int p = lexicon.polarity(tok);
        pos += p > 0;
        neg += p < 0;
    }
    if (pos + neg == 0) return 0.0;
    return static_cast<double>(pos - neg) / static_cast<double>(pos + neg);
}

// ---------------------------------------------------------------------------
// Article records and daily aggregation
// ---------------------------------------------------------------------------

struct SentimentRecord {
    Date date;
    std::string ticker;
    double score = 0.0;
    ClassProbs probs{};
};

inline SentimentRecord make_record(const Date& date, std::string ticker, const Logits& logits,
                                   double temperature) {
    const ClassProbs p = softmax_scores(logits, temperature);
    return {date, std::move(ticker), probs_to_score(p), p};
}

struct DailySentiment {
    Date date;
    std::string ticker;
    double mean_score = 0.0;
    std::size_t article_count = 0;
};

/// Mean score per (date, ticker), sorted by (date, ticker). Summation within a
/// group follows input order.
inline std::vector<DailySentiment> aggregate_daily(std::span<const SentimentRecord> records) {
    std::map<std::pair<Date, std::string>, std::pair<double, std::size_t>> groups;
    for (const auto& r : records) {
        auto& [sum, n] = groups[{r.date, r.ticker}];
        sum += r.score;
        ++n;
    }
    std::vector<DailySentiment> out;
    out.reserve(groups.size());
    for (const auto& [key, acc] : groups)
        out.push_back({key.first, key.second, acc.first / static_cast<double>(acc.second), acc.second});
    return out;
}

inline void write_sentiment_csv(std::ostream& out, std::span<const SentimentRecord> records) {
    out << "date,ticker,score,p_pos,p_neg,p_neu\n";
    for (const auto& r : records) {
        out << to_string(r.date) << ',' << r.ticker << ',' << format_double(r.score);
        for (double p : r.probs) out << ',' << format_double(p);
        out << '\n';
    }
}

inline std::vector<SentimentRecord> read_sentiment_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) return {};
    auto header = ingest::detail::split_csv_line(line);
    if (header.size() < 3 || header[0] != "date" || header[1] != "ticker" || header[2] != "score")
        throw Error("sentiment header must start with 'date,ticker,score'");
    std::vector<SentimentRecord> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto f = ingest::detail::split_csv_line(line);
        auto fail = [&](const std::string& why) {
            throw Error("sentiment line " + std::to_string(lineno) + ": " + why);
        };
        if (f.size() != header.size()) fail("field count mismatch");
        auto d = try_parse_date(f[0]);
        if (!d) fail("invalid date");
        auto s = try_parse_double(f[2]);
        if (!s || !(*s >= -1.0 && *s <= 1.0)) fail("score must lie in [-1,1]");
        SentimentRecord r{*d, f[1], *s, {}};
        if (f.size() >= 6)
            for (std::size_t k = 0; k < kNumLabels; ++k) {
                auto p = try_parse_double(f[3 + k]);
                if (!p) fail("invalid probability");
                r.probs[k] = *p;
            }
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<SentimentRecord> read_sentiment_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open sentiment file '" + path + "'");
    return read_sentiment_csv(in);
}

}  // namespace findpo::scoring
