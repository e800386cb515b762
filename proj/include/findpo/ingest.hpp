// include/findpo/ingest.hpp
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "findpo/core.hpp"

namespace findpo::ingest {

/// One news article linked to a ticker. Optional fields model what upstream
/// tooling may have attached (NER confidence, external model logits, a score).
struct ArticleRecord {
    std::string id;
    Date date;
    std::string ticker;
    std::string text;
    std::optional<Label> label;
    std::optional<double> ner_confidence;
    std::optional<Logits> logits;
    std::optional<double> score;

    bool operator==(const ArticleRecord&) const = default;
};

struct LineError {
    std::size_t line = 0;  // 1-based
    std::string message;
};

struct ArticleParseResult {
    std::vector<ArticleRecord> records;
    std::vector<LineError> errors;
};

namespace detail {

inline ArticleRecord article_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error("record is not a JSON object");
    auto required_string = [&](const char* key) -> std::string {
        auto it = j.find(key);
        if (it == j.end()) throw Error(std::string("missing required field '") + key + "'");
        if (!it->is_string()) throw Error(std::string("field '") + key + "' must be a string");
        return it->get<std::string>();
    };
    ArticleRecord a;
    a.id = required_string("id");
    const std::string date = required_string("date");
    auto parsed = try_parse_date(date);
    if (!parsed) throw Error("invalid date '" + date + "'");
    a.date = *parsed;
    a.ticker = required_string("ticker");
    if (a.ticker.empty()) throw Error("empty ticker");

    if (auto it = j.find("text"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw Error("field 'text' must be a string");
        a.text = it->get<std::string>();
    }
    if (auto it = j.find("label"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw Error("field 'label' must be a string");
        auto l = try_parse_label(it->get<std::string>());
        if (!l) throw Error("unknown label '" + it->get<std::string>() + "'");
        a.label = *l;
    }
    if (auto it = j.find("ner_confidence"); it != j.end() && !it->is_null()) {
        if (!it->is_number()) throw Error("field 'ner_confidence' must be a number");
        const double c = it->get<double>();
        if (!(c >= 0.0 && c <= 1.0))
            throw Error("ner_confidence " + format_double(c) + " outside [0,1]");
        a.ner_confidence = c;
    }
    if (auto it = j.find("logits"); it != j.end() && !it->is_null()) {
        if (!it->is_array() || it->size() != kNumLabels)
            throw Error("field 'logits' must be an array of 3 numbers");
        Logits l{};
        for (std::size_t k = 0; k < kNumLabels; ++k) {
            if (!(*it)[k].is_number()) throw Error("field 'logits' must be an array of 3 numbers");
            l[k] = (*it)[k].get<double>();
            if (!std::isfinite(l[k])) throw Error("non-finite logit");
        }
        a.logits = l;
    }
    if (auto it = j.find("score"); it != j.end() && !it->is_null()) {
        if (!it->is_number()) throw Error("field 'score' must be a number");
        const double s = it->get<double>();
        if (!(s >= -1.0 && s <= 1.0)) throw Error("score " + format_double(s) + " outside [-1,1]");
        a.score = s;
    }
    return a;
}

}  // namespace detail

/// Parses one JSON object per line. Blank lines are skipped; any other line
/// that fails validation is rejected and reported with its line number.
inline ArticleParseResult parse_articles(std::istream& in) {
    ArticleParseResult out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.records.push_back(detail::article_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            out.errors.push_back({lineno, std::string("malformed JSON: ") + e.what()});
        } catch (const Error& e) {
            out.errors.push_back({lineno, e.what()});
        }
    }
    return out;
}

inline ArticleParseResult parse_articles_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open articles file '" + path + "'");
    return parse_articles(in);
}

inline nlohmann::ordered_json to_json(const ArticleRecord& a) {
    nlohmann::ordered_json j;
    j["id"] = a.id;
    j["date"] = to_string(a.date);
    j["ticker"] = a.ticker;
    if (!a.text.empty()) j["text"] = a.text;
    if (a.label) j["label"] = std::string(to_string(*a.label));
    if (a.ner_confidence) j["ner_confidence"] = *a.ner_confidence;
    if (a.logits) j["logits"] = std::vector<double>(a.logits->begin(), a.logits->end());
    if (a.score) j["score"] = *a.score;
    return j;
}

inline std::string serialize_article(const ArticleRecord& a) { return to_json(a).dump(); }

/// Keeps records whose NER confidence strictly exceeds `threshold`. Records
/// without a confidence are treated as pre-verified and kept.
inline std::vector<ArticleRecord> ner_filter(std::span<const ArticleRecord> articles,
                                             double threshold = 0.98) {
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw Error("NER threshold must lie in [0,1]");
    std::vector<ArticleRecord> kept;
    for (const auto& a : articles)
        if (!a.ner_confidence || *a.ner_confidence > threshold) kept.push_back(a);
    return kept;
}

// ---------------------------------------------------------------------------
// Market data
// ---------------------------------------------------------------------------

struct PriceRecord {
    Date date;
    std::string ticker;
    double simple_return = 0.0;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

}  // namespace detail

/// CSV with header `date,ticker,simple_return`. Any malformed row is a hard error.
inline std::vector<PriceRecord> parse_prices(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) return {};
    if (auto hdr = detail::split_csv_line(line);
        hdr != std::vector<std::string>{"date", "ticker", "simple_return"})
        throw Error("prices header must be 'date,ticker,simple_return'");
    std::vector<PriceRecord> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto f = detail::split_csv_line(line);
        auto fail = [&](const std::string& why) {
            throw Error("prices line " + std::to_string(lineno) + ": " + why);
        };
        if (f.size() != 3) fail("expected 3 fields");
        auto date = try_parse_date(f[0]);
        if (!date) fail("invalid date '" + f[0] + "'");
        if (f[1].empty()) fail("empty ticker");
        auto r = try_parse_double(f[2]);
        if (!r || !std::isfinite(*r)) fail("invalid return '" + f[2] + "'");
        if (*r <= -1.0) fail("simple return must exceed -1");
        out.push_back({*date, f[1], *r});
    }
    return out;
}

inline std::vector<PriceRecord> parse_prices_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open prices file '" + path + "'");
    return parse_prices(in);
}

/// Dense dates x tickers grid of simple and log returns. Missing cells mean
/// "not investable that day". Immutable once built.
class ReturnsTable {
public:
    ReturnsTable() = default;

    const std::vector<Date>& dates() const noexcept { return dates_; }
    const std::vector<std::string>& tickers() const noexcept { return tickers_; }
    std::size_t num_days() const noexcept { return dates_.size(); }

    std::optional<std::size_t> date_index(const Date& d) const {
        auto it = std::lower_bound(dates_.begin(), dates_.end(), d);
        if (it == dates_.end() || *it != d) return std::nullopt;
        return static_cast<std::size_t>(it - dates_.begin());
    }

    /// Index of the first trading date on or after `d`.
    std::optional<std::size_t> next_trading_index(const Date& d) const {
        auto it = std::lower_bound(dates_.begin(), dates_.end(), d);
        if (it == dates_.end()) return std::nullopt;
        return static_cast<std::size_t>(it - dates_.begin());
    }

    std::optional<std::size_t> ticker_index(const std::string& t) const {
        auto it = std::lower_bound(tickers_.begin(), tickers_.end(), t);
        if (it == tickers_.end() || *it != t) return std::nullopt;
        return static_cast<std::size_t>(it - tickers_.begin());
    }

    std::optional<double> simple_return(std::size_t day, const std::string& ticker) const {
        return cell(simple_, day, ticker);
    }
    std::optional<double> log_return(std::size_t day, const std::string& ticker) const {
        return cell(log_, day, ticker);
    }
    std::optional<double> simple_return(const Date& d, const std::string& ticker) const {
        auto i = date_index(d);
        return i ? simple_return(*i, ticker) : std::nullopt;
    }
    std::optional<double> log_return(const Date& d, const std::string& ticker) const {
        auto i = date_index(d);
        return i ? log_return(*i, ticker) : std::nullopt;
    }

    std::size_t num_cells() const noexcept {
        return static_cast<std::size_t>(
            std::count_if(simple_.begin(), simple_.end(), [](double v) { return !std::isnan(v); }));
    }

private:
    friend ReturnsTable build_returns_table(std::span<const PriceRecord> prices);

    std::optional<double> cell(const std::vector<double>& grid, std::size_t day,
                               const std::string& ticker) const {
        auto t = ticker_index(ticker);
        if (!t || day >= dates_.size()) return std::nullopt;
        const double v = grid[day * tickers_.size() + *t];
        if (std::isnan(v)) return std::nullopt;
        return v;
    }

    std::vector<Date> dates_;
    std::vector<std::string> tickers_;
    std::vector<double> simple_;  // row-major [day][ticker], NaN when absent
    std::vector<double> log_;
};

inline ReturnsTable build_returns_table(std::span<const PriceRecord> prices) {
    ReturnsTable t;
    for (const auto& p : prices) {
        t.dates_.push_back(p.date);
        t.tickers_.push_back(p.ticker);
    }
    std::sort(t.dates_.begin(), t.dates_.end());
    t.dates_.erase(std::unique(t.dates_.begin(), t.dates_.end()), t.dates_.end());
    std::sort(t.tickers_.begin(), t.tickers_.end());
    t.tickers_.erase(std::unique(t.tickers_.begin(), t.tickers_.end()), t.tickers_.end());

    const std::size_t cells = t.dates_.size() * t.tickers_.size();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    t.simple_.assign(cells, nan);
    t.log_.assign(cells, nan);
    for (const auto& p : prices) {
        if (!(p.simple_return > -1.0) || !std::isfinite(p.simple_return))
            throw Error("simple return for (" + to_string(p.date) + ", " + p.ticker +
                        ") must be finite and exceed -1");
        const std::size_t idx = *t.date_index(p.date) * t.tickers_.size() + *t.ticker_index(p.ticker);
        if (!std::isnan(t.simple_[idx]))
            throw Error("duplicate price record for (" + to_string(p.date) + ", " + p.ticker + ")");
        t.simple_[idx] = p.simple_return;
        t.log_[idx] = std::log1p(p.simple_return);
    }
    return t;
}

}  // namespace findpo::ingest
