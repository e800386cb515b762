// include/findpo/metrics.hpp
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "findpo/core.hpp"
#include "findpo/portfolio.hpp"

namespace findpo::metrics {

inline constexpr double kTradingDaysPerYear = 252.0;

/// A ratio that may be undefined (zero denominator, too few observations).
/// nullopt is the explicit degenerate flag; no metric ever returns inf or NaN.
using Ratio = std::optional<double>;

namespace detail {

inline void require_nonempty(std::span<const double> xs, const char* what) {
    if (xs.empty()) throw Error(std::string(what) + " of an empty return series");
}

inline double mean(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

/// Sample standard deviation (N - 1 denominator).
inline double sample_std(std::span<const double> xs) {
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace detail

/// Additive sum of daily returns (not compounded).
inline double cumulative_return(std::span<const double> daily) {
    detail::require_nonempty(daily, "cumulative return");
    double s = 0.0;
    for (double r : daily) s += r;
    return s;
}

/// Compounded wealth minus one, reported alongside the additive figure.
inline double compounded_return(std::span<const double> daily) {
    detail::require_nonempty(daily, "compounded return");
    double w = 1.0;
    for (double r : daily) w *= 1.0 + r;
    return w - 1.0;
}

/// Mean daily log return times 252.
inline double annualized_return(std::span<const double> daily_log) {
    detail::require_nonempty(daily_log, "annualized return");
    return detail::mean(daily_log) * kTradingDaysPerYear;
}

/// Sample std of daily log returns times sqrt(252).
inline Ratio annualized_vol(std::span<const double> daily_log) {
    if (daily_log.size() < 2) return std::nullopt;
    return detail::sample_std(daily_log) * std::sqrt(kTradingDaysPerYear);
}

inline Ratio sharpe(std::span<const double> daily_log, double risk_free = 0.0) {
    const auto vol = annualized_vol(daily_log);
    if (!vol || !(*vol > 0.0)) return std::nullopt;
    return (annualized_return(daily_log) - risk_free) / *vol;
}

/// Root-mean-square of min(r, 0) over all N observations (target 0).
inline double downside_deviation(std::span<const double> daily_simple) {
    detail::require_nonempty(daily_simple, "downside deviation");
    double ss = 0.0;
    for (double r : daily_simple) {
        const double d = std::min(r, 0.0);
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(daily_simple.size()));
}

inline Ratio sortino(std::span<const double> daily_simple, double risk_free = 0.0) {
    if (daily_simple.size() < 2) return std::nullopt;
    const double dd = downside_deviation(daily_simple);
    if (!(dd > 0.0)) return std::nullopt;
    return (detail::mean(daily_simple) - risk_free) * std::sqrt(kTradingDaysPerYear) / dd;
}

/// Largest peak-to-trough fall of the compounded equity curve (E_0 = 1), as a positive fraction.
inline double max_drawdown(std::span<const double> daily_simple) {
    detail::require_nonempty(daily_simple, "max drawdown");
    double equity = 1.0, peak = 1.0, mdd = 0.0;
    for (double r : daily_simple) {
        equity *= 1.0 + r;
        peak = std::max(peak, equity);
        mdd = std::max(mdd, (peak - equity) / peak);
    }
    return mdd;
}

inline Ratio calmar(std::span<const double> daily_simple) {
    if (daily_simple.size() < 2) return std::nullopt;
    const double mdd = max_drawdown(daily_simple);
    if (!(mdd > 0.0)) return std::nullopt;
    return (std::pow(1.0 + detail::mean(daily_simple), kTradingDaysPerYear) - 1.0) / mdd;
}

struct MetricReport {
    double cumulative_return = 0.0;
    double compounded_return = 0.0;
    double annualized_return = 0.0;
    Ratio sharpe;
    Ratio sortino;
    Ratio calmar;
    double max_drawdown = 0.0;
    double risk_free = 0.0;
    std::size_t days = 0;
    Ratio annualized_vol;
    double downside_dev = 0.0;
    double mean_simple = 0.0;
};

/// Every metric from one series of daily simple returns (log returns derived as ln(1 + r)).
inline MetricReport compute_metrics(std::span<const double> daily_simple, double risk_free = 0.0) {
    detail::require_nonempty(daily_simple, "metrics");
    std::vector<double> logs;
    logs.reserve(daily_simple.size());
    for (double r : daily_simple) {
        if (!std::isfinite(r) || !(std::abs(r) < 1.0))
            throw Error("daily return " + format_double(r) + " fails the |r| < 1 fraction sanity bound");
        logs.push_back(std::log1p(r));
    }
    MetricReport m;
    m.cumulative_return = cumulative_return(daily_simple);
    m.compounded_return = compounded_return(daily_simple);
    m.annualized_return = annualized_return(logs);
    m.sharpe = sharpe(logs, risk_free);
    m.sortino = sortino(daily_simple, risk_free);
    m.calmar = calmar(daily_simple);
    m.max_drawdown = max_drawdown(daily_simple);
    m.risk_free = risk_free;
    m.days = daily_simple.size();
    m.annualized_vol = annualized_vol(logs);
    m.downside_dev = downside_deviation(daily_simple);
    m.mean_simple = detail::mean(daily_simple);
    return m;
}

inline nlohmann::ordered_json to_json(const MetricReport& m) {
    nlohmann::ordered_json j;
    std::vector<std::string> degenerate;
    auto ratio = [&](const char* key, const Ratio& r) {
        if (r) {
            j[key] = *r;
        } else {
            j[key] = nullptr;
            degenerate.emplace_back(key);
        }
    };
    j["cumulative_return"] = m.cumulative_return;
    j["compounded_return"] = m.compounded_return;
    j["annualized_return"] = m.annualized_return;
    ratio("sharpe", m.sharpe);
    ratio("sortino", m.sortino);
    ratio("calmar", m.calmar);
    j["max_drawdown"] = m.max_drawdown;
    j["risk_free"] = m.risk_free;
    j["days"] = m.days;
    ratio("annualized_vol", m.annualized_vol);
    j["downside_dev"] = m.downside_dev;
    j["mean_simple"] = m.mean_simple;
    j["degenerate"] = degenerate;
    return j;
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct ClassificationReport {
    std::array<ClassMetrics, kNumLabels> per_class{};
    double weighted_f1 = 0.0;
    double macro_f1 = 0.0;
    double accuracy = 0.0;
    std::array<std::array<std::size_t, kNumLabels>, kNumLabels> confusion{};  // [truth][pred]
};

/// Per-class precision / recall / F1 (0 on a zero denominator) and their
/// support-weighted mean.
inline ClassificationReport weighted_f1(std::span<const Label> truths, std::span<const Label> preds) {
    if (truths.size() != preds.size()) throw Error("truths and predictions differ in length");
    if (truths.empty()) throw Error("no predictions to score");
    ClassificationReport rep;
    for (std::size_t i = 0; i < truths.size(); ++i) ++rep.confusion[index_of(truths[i])][index_of(preds[i])];
    std::size_t correct = 0;
    for (std::size_t c = 0; c < kNumLabels; ++c) {
        std::size_t tp = rep.confusion[c][c], pred_c = 0, true_c = 0;
        for (std::size_t k = 0; k < kNumLabels; ++k) {
            pred_c += rep.confusion[k][c];
            true_c += rep.confusion[c][k];
        }
        correct += tp;
        auto& m = rep.per_class[c];
        m.support = true_c;
        m.precision = pred_c ? static_cast<double>(tp) / static_cast<double>(pred_c) : 0.0;
        m.recall = true_c ? static_cast<double>(tp) / static_cast<double>(true_c) : 0.0;
        // 2tp / (pred + true) equals the harmonic mean without the intermediate rounding.
        m.f1 = (pred_c + true_c) ? 2.0 * static_cast<double>(tp) / static_cast<double>(pred_c + true_c) : 0.0;
    }
    const double n = static_cast<double>(truths.size());
    for (const auto& m : rep.per_class) {
        rep.weighted_f1 += m.f1 * static_cast<double>(m.support) / n;
        rep.macro_f1 += m.f1 / static_cast<double>(kNumLabels);
    }
    rep.accuracy = static_cast<double>(correct) / n;
    return rep;
}

inline nlohmann::ordered_json to_json(const ClassificationReport& r) {
    nlohmann::ordered_json j;
    j["weighted_f1"] = r.weighted_f1;
    j["macro_f1"] = r.macro_f1;
    j["accuracy"] = r.accuracy;
    for (std::size_t c = 0; c < kNumLabels; ++c) {
        const auto& m = r.per_class[c];
        j["per_class"][std::string(to_string(kLabels[c]))] = {
            {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
    }
    return j;
}

// ---------------------------------------------------------------------------
// Backtest report
// ---------------------------------------------------------------------------

struct CostLevelReport {
    double k_bps = 0.0;
    MetricReport metrics;
};

/// Metrics of the net series at every cost level, in the backtest's level order.
inline std::vector<CostLevelReport> build_report(const portfolio::BacktestResult& bt, double risk_free = 0.0) {
    if (bt.pnl.empty()) throw Error("backtest produced no trading days to report on");
    std::vector<CostLevelReport> out;
    for (std::size_t c = 0; c < bt.cost_levels.size(); ++c) {
        std::vector<double> net;
        net.reserve(bt.pnl.size());
        for (const auto& p : bt.pnl) net.push_back(p.net_return_by_cost.at(c));
        out.push_back({bt.cost_levels[c], compute_metrics(net, risk_free)});
    }
    return out;
}

inline std::vector<double> gross_series(const portfolio::BacktestResult& bt) {
    std::vector<double> out;
    for (const auto& p : bt.pnl) out.push_back(p.gross_return);
    return out;
}

}  // namespace findpo::metrics
