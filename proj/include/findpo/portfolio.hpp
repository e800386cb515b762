// include/findpo/portfolio.hpp
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "findpo/core.hpp"
#include "findpo/ingest.hpp"
#include "findpo/scoring.hpp"

namespace findpo::portfolio {

using ingest::ReturnsTable;
using scoring::DailySentiment;

struct BacktestConfig {
    double long_fraction = 0.35;
    double short_fraction = 0.35;
    std::vector<double> cost_bps_levels{0, 1, 2, 3, 4, 5};
    std::size_t min_names_per_side = 1;
    /// Trading days between the sentiment date and the trade date (0 = same day).
    int lag = 0;

    void validate() const {
        if (!(long_fraction > 0.0) || !(short_fraction > 0.0))
            throw Error("long and short fractions must be positive");
        if (long_fraction + short_fraction > 1.0 + 1e-12)
            throw Error("long and short fractions must sum to at most 1");
        if (min_names_per_side == 0) throw Error("min names per side must be positive");
        for (double k : cost_bps_levels)
            if (!(k >= 0.0) || !std::isfinite(k)) throw Error("cost levels must be non-negative");
        if (lag < 0) throw Error("lag must be non-negative");
    }
};

/// One day's book. Long names are ordered best-ranked first, short names
/// worst-ranked first, so the marginal name of each side sits at the back.
struct AllocationDay {
    Date date;
    std::vector<std::string> long_set;
    std::vector<std::string> short_set;
    std::map<std::string, double> weights;

    void rebuild_weights() {
        weights.clear();
        for (const auto& t : long_set) weights[t] = 1.0 / static_cast<double>(long_set.size());
        for (const auto& t : short_set) weights[t] = -1.0 / static_cast<double>(short_set.size());
    }
};

struct DailyPnl {
    Date date;
    double r_long = 0.0;
    double r_short = 0.0;
    double gross_return = 0.0;
    double turnover = 0.0;
    std::vector<double> net_return_by_cost;  // parallel to BacktestConfig::cost_bps_levels
    std::size_t names_per_side = 0;
};

struct SkipRecord {
    Date date;
    std::string reason;
};

struct BacktestResult {
    std::vector<double> cost_levels;
    int lag = 0;
    std::vector<DailyPnl> pnl;
    std::vector<AllocationDay> holdings;
    std::vector<SkipRecord> skips;
};

/// Descending by score, ties by ascending ticker.
inline std::vector<std::string> rank_day(std::span<const DailySentiment> day) {
    std::vector<const DailySentiment*> rows;
    rows.reserve(day.size());
    std::set<std::string_view> seen;
    for (const auto& d : day) {
        if (!seen.insert(d.ticker).second)
            throw Error("duplicate sentiment for ticker " + d.ticker + " on " + to_string(d.date));
        rows.push_back(&d);
    }
    std::sort(rows.begin(), rows.end(), [](const DailySentiment* a, const DailySentiment* b) {
        if (a->mean_score != b->mean_score) return a->mean_score > b->mean_score;
        return a->ticker < b->ticker;
    });
    std::vector<std::string> out;
    out.reserve(rows.size());
    for (const auto* r : rows) out.push_back(r->ticker);
    return out;
}

/// Names per side: floor(fraction * n), raised to min_names_per_side and
/// capped at floor(n / 2). Both sides always get the same count.
inline std::size_t side_size(std::size_t n, const BacktestConfig& cfg) {
    const double frac = std::min(cfg.long_fraction, cfg.short_fraction);
    auto k = static_cast<std::size_t>(std::floor(frac * static_cast<double>(n) + 1e-9));
    k = std::max(k, cfg.min_names_per_side);
    return std::min(k, n / 2);
}

/// Equal-weighted long top / short bottom. Returns nullopt (a skipped day)
/// when fewer than 2 * min_names_per_side names are ranked.
inline std::optional<AllocationDay> allocate(std::span<const std::string> ranking, const BacktestConfig& cfg,
                                             const Date& date = {}) {
    if (ranking.size() < 2 * cfg.min_names_per_side) return std::nullopt;
    const std::size_t k = side_size(ranking.size(), cfg);
    if (k == 0) return std::nullopt;
    AllocationDay a;
    a.date = date;
    a.long_set.assign(ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(k));
    for (std::size_t i = 0; i < k; ++i) a.short_set.push_back(ranking[ranking.size() - 1 - i]);
    a.rebuild_weights();
    return a;
}

struct DayReturn {
    AllocationDay held;  // after dropping names without a return
    double r_long = 0.0;
    double r_short = 0.0;
    double gross = 0.0;
    std::size_t dropped = 0;
};

/// Mean long return minus mean short return on trading day `day`. Names with
/// no return that day are dropped and the other side's marginal names trimmed
/// so both sides stay equal. Nullopt when a side ends up empty.
inline std::optional<DayReturn> day_return(const AllocationDay& alloc, const ReturnsTable& returns,
                                           std::size_t day) {
    DayReturn out;
    out.held.date = alloc.date;
    std::vector<double> rl, rs;
    for (const auto& t : alloc.long_set)
        if (auto r = returns.simple_return(day, t)) {
            out.held.long_set.push_back(t);
            rl.push_back(*r);
        }
    for (const auto& t : alloc.short_set)
        if (auto r = returns.simple_return(day, t)) {
            out.held.short_set.push_back(t);
            rs.push_back(*r);
        }
    const std::size_t n = std::min(rl.size(), rs.size());
    out.dropped = alloc.long_set.size() + alloc.short_set.size() - 2 * n;
    if (n == 0) return std::nullopt;
    out.held.long_set.resize(n);
    out.held.short_set.resize(n);
    rl.resize(n);
    rs.resize(n);
    out.held.rebuild_weights();
    double sl = 0.0, ss = 0.0;
    for (double v : rl) sl += v;
    for (double v : rs) ss += v;
    out.r_long = sl / static_cast<double>(n);
    out.r_short = ss / static_cast<double>(n);
    out.gross = out.r_long - out.r_short;
    return out;
}

inline std::optional<DayReturn> day_return(const AllocationDay& alloc, const ReturnsTable& returns) {
    auto idx = returns.date_index(alloc.date);
    if (!idx) return std::nullopt;
    return day_return(alloc, returns, *idx);
}

/// Sum of absolute weight changes over the union of names.
inline double turnover(const AllocationDay& prev, const AllocationDay& curr) {
    double sum = 0.0;
    auto p = prev.weights.begin(), c = curr.weights.begin();
    while (p != prev.weights.end() || c != curr.weights.end()) {
        if (c == curr.weights.end() || (p != prev.weights.end() && p->first < c->first)) {
            sum += std::abs(p->second);
            ++p;
        } else if (p == prev.weights.end() || c->first < p->first) {
            sum += std::abs(c->second);
            ++c;
        } else {
            sum += std::abs(c->second - p->second);
            ++p;
            ++c;
        }
    }
    return sum;
}

/// First day: the whole book is established.
inline double turnover(const AllocationDay& curr) {
    double sum = 0.0;
    for (const auto& [t, w] : curr.weights) sum += std::abs(w);
    return sum;
}

inline double turnover(const std::optional<AllocationDay>& prev, const AllocationDay& curr) {
    return prev ? turnover(*prev, curr) : turnover(curr);
}

/// Linear cost model: gross - (k / 10000) * turnover.
inline double apply_costs(double gross, double turnover_value, double k_bps) {
    if (!(k_bps >= 0.0)) throw Error("cost level must be non-negative");
    return gross - (k_bps / 10000.0) * turnover_value;
}

/// Moves each sentiment row to the trading day it trades on: the first trading
/// date on or after its own date, plus `lag` trading days. Rows landing on the
/// same (day, ticker) merge by article-count-weighted mean. Rows past the end
/// of the calendar are reported in `skips`.
inline std::map<std::size_t, std::vector<DailySentiment>> align_to_calendar(
    std::span<const DailySentiment> daily, const ReturnsTable& returns, int lag,
    std::vector<SkipRecord>* skips = nullptr) {
    std::map<std::pair<std::size_t, std::string>, std::pair<double, std::size_t>> acc;
    std::set<Date> beyond;
    for (const auto& d : daily) {
        auto idx = returns.next_trading_index(d.date);
        if (!idx || *idx + static_cast<std::size_t>(lag) >= returns.num_days()) {
            beyond.insert(d.date);
            continue;
        }
        const std::size_t count = std::max<std::size_t>(d.article_count, 1);
        auto& [sum, n] = acc[{*idx + static_cast<std::size_t>(lag), d.ticker}];
        sum += d.mean_score * static_cast<double>(count);
        n += count;
    }
    if (skips)
        for (const auto& d : beyond) skips->push_back({d, "sentiment date has no trading day to trade on"});
    std::map<std::size_t, std::vector<DailySentiment>> out;
    for (const auto& [key, v] : acc)
        out[key.first].push_back({returns.dates()[key.first], key.second,
                                  v.first / static_cast<double>(v.second), v.second});
    return out;
}

/// Day-by-day: rank, allocate, settle returns, turnover against the last held
/// book, then costs for every configured level.
inline BacktestResult run_backtest(std::span<const DailySentiment> daily, const ReturnsTable& returns,
                                   const BacktestConfig& cfg) {
    cfg.validate();
    BacktestResult res;
    res.cost_levels = cfg.cost_bps_levels;
    res.lag = cfg.lag;
    const auto by_day = align_to_calendar(daily, returns, cfg.lag, &res.skips);

    std::optional<AllocationDay> prev;
    for (const auto& [day, rows] : by_day) {
        const Date date = returns.dates()[day];
        const auto ranking = rank_day(rows);
        auto alloc = allocate(ranking, cfg, date);
        if (!alloc) {
            res.skips.push_back({date, "only " + std::to_string(ranking.size()) + " ranked names"});
            continue;
        }
        auto settled = day_return(*alloc, returns, day);
        if (!settled) {
            res.skips.push_back({date, "no returns for allocated names"});
            continue;
        }
        DailyPnl p;
        p.date = date;
        p.r_long = settled->r_long;
        p.r_short = settled->r_short;
        p.gross_return = settled->gross;
        p.turnover = turnover(prev, settled->held);
        p.names_per_side = settled->held.long_set.size();
        for (double k : cfg.cost_bps_levels) p.net_return_by_cost.push_back(apply_costs(p.gross_return, p.turnover, k));
        res.pnl.push_back(std::move(p));
        prev = settled->held;
        res.holdings.push_back(std::move(settled->held));
    }
    return res;
}

inline std::string cost_column(double k) { return "net_k" + format_double(k); }

inline void write_pnl_csv(std::ostream& out, const BacktestResult& res) {
    out << "date,r_long,r_short,gross,turnover";
    for (double k : res.cost_levels) out << ',' << cost_column(k);
    out << '\n';
    for (const auto& p : res.pnl) {
        out << to_string(p.date) << ',' << format_double(p.r_long) << ',' << format_double(p.r_short) << ','
            << format_double(p.gross_return) << ',' << format_double(p.turnover);
        for (double v : p.net_return_by_cost) out << ',' << format_double(v);
        out << '\n';
    }
}

/// Parses pnl.csv back; cost levels are recovered from the `net_k<k>` columns.
inline BacktestResult read_pnl_csv(std::istream& in) {
    BacktestResult res;
    std::string line;
    if (!std::getline(in, line)) throw Error("empty pnl file");
    auto hdr = ingest::detail::split_csv_line(line);
    if (hdr.size() < 5 || hdr[0] != "date" || hdr[1] != "r_long" || hdr[2] != "r_short" || hdr[3] != "gross" ||
        hdr[4] != "turnover")
        throw Error("pnl header must start with 'date,r_long,r_short,gross,turnover'");
    for (std::size_t i = 5; i < hdr.size(); ++i) {
        if (hdr[i].rfind("net_k", 0) != 0) throw Error("unexpected pnl column '" + hdr[i] + "'");
        auto k = try_parse_double(std::string_view(hdr[i]).substr(5));
        if (!k) throw Error("bad cost column '" + hdr[i] + "'");
        res.cost_levels.push_back(*k);
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto f = ingest::detail::split_csv_line(line);
        if (f.size() != hdr.size()) throw Error("pnl line " + std::to_string(lineno) + ": field count mismatch");
        DailyPnl p;
        auto d = try_parse_date(f[0]);
        if (!d) throw Error("pnl line " + std::to_string(lineno) + ": invalid date");
        p.date = *d;
        std::vector<double> vals;
        for (std::size_t i = 1; i < f.size(); ++i) {
            auto v = try_parse_double(f[i]);
            if (!v) throw Error("pnl line " + std::to_string(lineno) + ": invalid number '" + f[i] + "'");
            vals.push_back(*v);
        }
        p.r_long = vals[0];
        p.r_short = vals[1];
        p.gross_return = vals[2];
        p.turnover = vals[3];
        p.net_return_by_cost.assign(vals.begin() + 4, vals.end());
        res.pnl.push_back(std::move(p));
    }
    return res;
}

}  // namespace findpo::portfolio
