// include/findpo/pipeline.hpp
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "findpo/core.hpp"
#include "findpo/dpo.hpp"
#include "findpo/ingest.hpp"
#include "findpo/manifest.hpp"
#include "findpo/metrics.hpp"
#include "findpo/policy.hpp"
#include "findpo/portfolio.hpp"
#include "findpo/prefdata.hpp"
#include "findpo/random.hpp"
#include "findpo/scoring.hpp"

namespace findpo::pipeline {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

/// A failure attributed to one named stage.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& cause)
        : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)), cause_(cause) {}
    const std::string& stage() const noexcept { return stage_; }
    const std::string& cause() const noexcept { return cause_; }

private:
    std::string stage_;
    std::string cause_;
};

namespace detail {

inline std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + p.string() + "'");
    return out;
}

inline void write_json(const fs::path& p, const ordered_json& j) {
    auto out = open_out(p);
    out << j.dump(2) << '\n';
}

inline fs::path with_suffix(const fs::path& p, std::string_view suffix) {
    fs::path stem = p;
    stem.replace_extension();
    return fs::path(stem.string() + std::string(suffix));
}

inline ordered_json dpo_params(const dpo::DpoConfig& c, std::size_t dim) {
    return {{"beta", c.beta},           {"learning_rate", c.learning_rate}, {"epochs", c.epochs},
            {"batch_size", c.batch_size}, {"weight_decay", c.weight_decay},   {"warmup_ratio", c.warmup_ratio},
            {"adam_beta1", c.adam_beta1}, {"adam_beta2", c.adam_beta2},       {"adam_epsilon", c.adam_epsilon},
            {"feature_dim", dim}};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages. Each reads its inputs from files, writes its artifacts plus a
// manifest, and is safe to re-run in isolation.
// ---------------------------------------------------------------------------

struct IngestSummary {
    std::size_t articles_read = 0;
    std::size_t articles_rejected = 0;
    std::size_t articles_kept = 0;
    std::size_t price_rows = 0;
    std::size_t trading_days = 0;
};

/// Writes `articles.jsonl` (NER-filtered), `returns.csv` and `ingest.json` into `out_dir`.
inline IngestSummary stage_ingest(const fs::path& articles, const fs::path& prices, double ner_threshold,
                                  const fs::path& out_dir) {
    fs::create_directories(out_dir);
    auto parsed = ingest::parse_articles_file(articles.string());
    const auto kept = ingest::ner_filter(parsed.records, ner_threshold);
    const auto price_rows = ingest::parse_prices_file(prices.string());
    const auto table = ingest::build_returns_table(price_rows);

    const fs::path art_out = out_dir / "articles.jsonl";
    {
        auto out = detail::open_out(art_out);
        for (const auto& a : kept) out << ingest::serialize_article(a) << '\n';
    }
    const fs::path ret_out = out_dir / "returns.csv";
    {
        auto out = detail::open_out(ret_out);
        out << "date,ticker,simple_return,log_return\n";
        for (std::size_t d = 0; d < table.num_days(); ++d)
            for (const auto& t : table.tickers())
                if (auto r = table.simple_return(d, t))
                    out << to_string(table.dates()[d]) << ',' << t << ',' << format_double(*r) << ','
                        << format_double(*table.log_return(d, t)) << '\n';
    }
    IngestSummary s{parsed.records.size() + parsed.errors.size(), parsed.errors.size(), kept.size(),
                    price_rows.size(), table.num_days()};
    ordered_json rep;
    rep["articles_read"] = s.articles_read;
    rep["articles_rejected"] = s.articles_rejected;
    rep["articles_kept"] = s.articles_kept;
    rep["ner_threshold"] = ner_threshold;
    rep["price_rows"] = s.price_rows;
    rep["trading_days"] = s.trading_days;
    rep["tickers"] = table.tickers().size();
    rep["errors"] = ordered_json::array();
    for (const auto& e : parsed.errors) rep["errors"].push_back({{"line", e.line}, {"message", e.message}});
    const fs::path rep_out = out_dir / "ingest.json";
    detail::write_json(rep_out, rep);

    const ordered_json params{{"ner_threshold", ner_threshold}};
    for (const auto& p : {art_out, ret_out, rep_out}) manifest::write_manifest(p, "ingest", 0, {articles, prices}, params);
    return s;
}

/// Reference-model predictions, one label per line.
inline void stage_ref_predict(const fs::path& samples_path, const std::optional<fs::path>& policy_path,
                              std::size_t dim, std::string_view templ, const fs::path& out_path) {
    const auto samples = prefdata::read_samples_file(samples_path.string());
    const LogLinearPolicy ref = policy_path ? load_policy(policy_path->string()) : LogLinearPolicy(dim);
    const FeatureExtractor fx(ref.dimension());
    auto out = detail::open_out(out_path);
    for (const auto& s : samples)
        out << to_string(dpo::predict(ref, fx, prefdata::format_prompt(s, templ)).label) << '\n';
    out.close();
    std::vector<fs::path> inputs{samples_path};
    if (policy_path) inputs.push_back(*policy_path);
    manifest::write_manifest(out_path, "ref-predict", 0, inputs, {{"feature_dim", ref.dimension()}});
}

struct PairFiles {
    fs::path all, train, test;
};

/// Builds pairs.jsonl; with a train fraction also writes `<stem>.train.jsonl` and `<stem>.test.jsonl`.
inline PairFiles stage_build_pairs(const fs::path& samples_path, const fs::path& ref_preds_path,
                                   std::uint64_t seed, std::string_view templ, const fs::path& out_path,
                                   std::optional<double> train_fraction, std::uint64_t split_seed) {
    const auto samples = prefdata::read_samples_file(samples_path.string());
    const auto preds = prefdata::read_labels_file(ref_preds_path.string());
    const auto pairs = prefdata::build_preference_pairs(samples, preds, seed, templ);
    PairFiles files{out_path, {}, {}};
    {
        auto out = detail::open_out(out_path);
        prefdata::write_pairs(out, pairs);
    }
    const ordered_json params{{"template", templ}};
    manifest::write_manifest(out_path, "build-pairs", seed, {samples_path, ref_preds_path}, params);
    if (train_fraction) {
        const auto split = prefdata::split_train_test(pairs, *train_fraction, split_seed);
        files.train = detail::with_suffix(out_path, ".train.jsonl");
        files.test = detail::with_suffix(out_path, ".test.jsonl");
        {
            auto out = detail::open_out(files.train);
            prefdata::write_pairs(out, split.train);
        }
        {
            auto out = detail::open_out(files.test);
            prefdata::write_pairs(out, split.test);
        }
        const ordered_json sp{{"train_fraction", *train_fraction}};
        manifest::write_manifest(files.train, "split", split_seed, {out_path}, sp);
        manifest::write_manifest(files.test, "split", split_seed, {out_path}, sp);
    }
    return files;
}

inline void write_trace(const fs::path& base, const dpo::TrainTrace& trace, std::string_view stage,
                        std::uint64_t seed, const std::vector<fs::path>& inputs) {
    const fs::path steps = detail::with_suffix(base, ".trace.csv");
    {
        auto out = detail::open_out(steps);
        out << "step,epoch,learning_rate,loss,margin,grad_norm\n";
        for (const auto& s : trace.steps)
            out << s.step << ',' << s.epoch << ',' << format_double(s.learning_rate) << ',' << format_double(s.loss)
                << ',' << format_double(s.margin) << ',' << format_double(s.grad_norm) << '\n';
    }
    const fs::path epochs = detail::with_suffix(base, ".epochs.csv");
    {
        auto out = detail::open_out(epochs);
        out << "epoch,loss,margin\n";
        for (const auto& e : trace.epochs)
            out << e.epoch << ',' << format_double(e.loss) << ',' << format_double(e.margin) << '\n';
    }
    manifest::write_manifest(steps, stage, seed, inputs);
    manifest::write_manifest(epochs, stage, seed, inputs);
}

/// DPO training against the zero (uniform) reference or a supplied initial policy.
inline dpo::TrainResult stage_train(const fs::path& pairs_path, const dpo::DpoConfig& cfg, std::size_t dim,
                                    const fs::path& out_path, const std::optional<fs::path>& init = std::nullopt) {
    const auto pairs = prefdata::read_pairs_file(pairs_path.string());
    std::optional<LogLinearPolicy> initial;
    if (init) initial = load_policy(init->string());
    const FeatureExtractor fx(initial ? initial->dimension() : dim);
    auto res = dpo::train_dpo(pairs, cfg, fx, initial);
    save_policy(out_path.string(), res.policy);
    std::vector<fs::path> inputs{pairs_path};
    if (init) inputs.push_back(*init);
    manifest::write_manifest(out_path, "train", cfg.seed, inputs, detail::dpo_params(cfg, fx.dimension()));
    write_trace(out_path, res.trace, "train", cfg.seed, inputs);
    return res;
}

/// Cross-entropy baseline on the preferred (ground-truth) label of each pair.
inline dpo::TrainResult stage_train_sft(const fs::path& pairs_path, const dpo::DpoConfig& cfg, std::size_t dim,
                                        const fs::path& out_path) {
    const auto pairs = prefdata::read_pairs_file(pairs_path.string());
    const auto samples = prefdata::as_labeled(pairs);
    const FeatureExtractor fx(dim);
    auto res = dpo::train_sft(samples, cfg, fx);
    save_policy(out_path.string(), res.policy);
    manifest::write_manifest(out_path, "train-sft", cfg.seed, {pairs_path}, detail::dpo_params(cfg, dim));
    write_trace(out_path, res.trace, "train-sft", cfg.seed, {pairs_path});
    return res;
}

/// Weighted F1 of each named policy on the preferred labels of `pairs_path`.
inline ordered_json stage_evaluate(const std::vector<std::pair<std::string, fs::path>>& policies,
                                   const fs::path& pairs_path, const fs::path& out_path) {
    const auto pairs = prefdata::read_pairs_file(pairs_path.string());
    if (pairs.empty()) throw Error("evaluation split is empty");
    std::vector<Label> truths;
    for (const auto& p : pairs) truths.push_back(p.preferred);
    ordered_json rep;
    rep["samples"] = pairs.size();
    std::vector<fs::path> inputs{pairs_path};
    for (const auto& [name, path] : policies) {
        const auto pol = load_policy(path.string());
        const FeatureExtractor fx(pol.dimension());
        std::vector<Label> preds;
        for (const auto& p : pairs) preds.push_back(dpo::predict(pol, fx, p.prompt).label);
        rep["policies"][name] = metrics::to_json(metrics::weighted_f1(truths, preds));
        inputs.push_back(path);
    }
    detail::write_json(out_path, rep);
    manifest::write_manifest(out_path, "evaluate", 0, inputs);
    return rep;
}

/// Fits the temperature on the policy's logits over `pairs_path` (truth = preferred label).
inline scoring::CalibrationResult stage_calibrate(const fs::path& policy_path, const fs::path& pairs_path,
                                                  const fs::path& out_path) {
    const auto pol = load_policy(policy_path.string());
    const FeatureExtractor fx(pol.dimension());
    const auto pairs = prefdata::read_pairs_file(pairs_path.string());
    std::vector<Logits> logits;
    std::vector<Label> truths;
    for (const auto& p : pairs) {
        logits.push_back(pol.logits(fx.extract(p.prompt)));
        truths.push_back(p.preferred);
    }
    const auto cal = scoring::fit_temperature(logits, truths);
    detail::write_json(out_path, scoring::to_json(cal));
    manifest::write_manifest(out_path, "calibrate", 0, {policy_path, pairs_path});
    return cal;
}

enum class ScoreMethod { policy, lexicon, given };

inline ScoreMethod parse_score_method(std::string_view s) {
    if (s == "policy") return ScoreMethod::policy;
    if (s == "lexicon") return ScoreMethod::lexicon;
    if (s == "given") return ScoreMethod::given;
    throw Error("unknown scoring method '" + std::string(s) + "' (policy|lexicon|given)");
}

struct ScoreInputs {
    ScoreMethod method = ScoreMethod::policy;
    std::optional<fs::path> policy;
    std::optional<fs::path> calib;
    std::optional<fs::path> lexicon;
    std::string templ = std::string(prefdata::kDefaultTemplate);
};

/// Per-article sentiment CSV. For the policy method an article's own `logits`
/// field (from an external model) takes precedence over running the policy.
inline std::vector<scoring::SentimentRecord> stage_score(const ScoreInputs& in, const fs::path& articles_path,
                                                         const fs::path& out_path) {
    auto parsed = ingest::parse_articles_file(articles_path.string());
    if (!parsed.errors.empty())
        throw Error("articles line " + std::to_string(parsed.errors.front().line) + ": " +
                    parsed.errors.front().message);
    std::vector<scoring::SentimentRecord> recs;
    std::vector<fs::path> inputs{articles_path};
    ordered_json params;
    switch (in.method) {
        case ScoreMethod::policy: {
            if (!in.policy) throw Error("policy scoring needs --policy");
            const auto pol = load_policy(in.policy->string());
            const FeatureExtractor fx(pol.dimension());
            double t = 1.0;
            inputs.push_back(*in.policy);
            if (in.calib) {
                std::ifstream cf(*in.calib);
                if (!cf) throw Error("cannot open calibration file '" + in.calib->string() + "'");
                t = scoring::calibration_from_json(nlohmann::json::parse(cf)).temperature;
                inputs.push_back(*in.calib);
            }
            for (const auto& a : parsed.records) {
                const Logits z = a.logits ? *a.logits
                                          : pol.logits(fx.extract(prefdata::format_prompt({a.text, Label::neutral, {}}, in.templ)));
                recs.push_back(scoring::make_record(a.date, a.ticker, z, t));
            }
            params = {{"method", "policy"}, {"temperature", t}, {"template", in.templ}};
            break;
        }
        case ScoreMethod::lexicon: {
            if (!in.lexicon) throw Error("lexicon scoring needs --lexicon");
            std::ifstream lf(*in.lexicon);
            if (!lf) throw Error("cannot open lexicon '" + in.lexicon->string() + "'");
            const auto lex = scoring::read_lexicon(lf);
            inputs.push_back(*in.lexicon);
            for (const auto& a : parsed.records) {
                const double s = scoring::lexicon_score(a.text, lex);
                // Lexicon scores carry no class distribution; the split below keeps p_pos - p_neg = s.
                const double neu = 1.0 - std::abs(s);
                recs.push_back({a.date, a.ticker, s, {std::max(s, 0.0), std::max(-s, 0.0), neu}});
            }
            params = {{"method", "lexicon"}};
            break;
        }
        case ScoreMethod::given: {
            for (const auto& a : parsed.records) {
                if (!a.score) throw Error("article '" + a.id + "' has no score field");
                const double s = *a.score;
                recs.push_back({a.date, a.ticker, s, {std::max(s, 0.0), std::max(-s, 0.0), 1.0 - std::abs(s)}});
            }
            params = {{"method", "given"}};
            break;
        }
    }
    {
        auto out = detail::open_out(out_path);
        scoring::write_sentiment_csv(out, recs);
    }
    manifest::write_manifest(out_path, "score", 0, inputs, params);
    return recs;
}

/// Aggregates per-article sentiment by day (articles on non-trading days roll
/// forward to the next trading day), runs the long-short backtest, and writes
/// pnl.csv and `<stem>.skips.csv`.
inline portfolio::BacktestResult stage_backtest(const fs::path& sentiment_path, const fs::path& prices_path,
                                                const portfolio::BacktestConfig& cfg, const fs::path& out_path) {
    const auto recs = scoring::read_sentiment_file(sentiment_path.string());
    const auto table = ingest::build_returns_table(ingest::parse_prices_file(prices_path.string()));
    // Re-stamp each article with its trade day before averaging, so one
    // day's mean covers every article that trades on it.
    std::vector<scoring::SentimentRecord> stamped;
    stamped.reserve(recs.size());
    for (const auto& r : recs) {
        auto idx = table.next_trading_index(r.date);
        auto s = r;
        if (idx) s.date = table.dates()[*idx];
        stamped.push_back(std::move(s));
    }
    const auto daily = scoring::aggregate_daily(stamped);
    const auto res = portfolio::run_backtest(daily, table, cfg);
    {
        auto out = detail::open_out(out_path);
        portfolio::write_pnl_csv(out, res);
    }
    const fs::path skips = detail::with_suffix(out_path, ".skips.csv");
    {
        auto out = detail::open_out(skips);
        out << "date,reason\n";
        for (const auto& s : res.skips) out << to_string(s.date) << ',' << s.reason << '\n';
    }
    std::vector<double> costs = cfg.cost_bps_levels;
    const ordered_json params{{"long_fraction", cfg.long_fraction},
                              {"short_fraction", cfg.short_fraction},
                              {"cost_bps_levels", costs},
                              {"min_names_per_side", cfg.min_names_per_side},
                              {"lag", cfg.lag}};
    manifest::write_manifest(out_path, "backtest", 0, {sentiment_path, prices_path}, params);
    manifest::write_manifest(skips, "backtest", 0, {sentiment_path, prices_path}, params);
    return res;
}

inline std::string convention_text(int lag) {
    if (lag == 0) return "same-day: sentiment dated t trades on trading day t";
    return "lagged: sentiment dated t trades " + std::to_string(lag) + " trading day(s) later";
}

/// report.json (+ optional curves CSV and a plain-text table next to the report).
inline ordered_json stage_report(const fs::path& pnl_path, const std::optional<fs::path>& benchmark_path,
                                 const fs::path& out_path, const std::optional<fs::path>& curves_path,
                                 double risk_free = 0.0) {
    std::ifstream pin(pnl_path);
    if (!pin) throw Error("cannot open pnl file '" + pnl_path.string() + "'");
    const auto bt = portfolio::read_pnl_csv(pin);
    const auto levels = metrics::build_report(bt, risk_free);

    ordered_json rep;
    int lag = 0;
    if (auto m = manifest::read_manifest(pnl_path); !m.is_null() && m.contains("params") && m["params"].contains("lag"))
        lag = m["params"]["lag"].get<int>();
    rep["convention"] = {{"lag", lag}, {"description", convention_text(lag)}};
    rep["risk_free"] = risk_free;
    rep["trading_days"] = bt.pnl.size();
    rep["first_date"] = to_string(bt.pnl.front().date);
    rep["last_date"] = to_string(bt.pnl.back().date);
    double mean_turnover = 0.0;
    for (const auto& p : bt.pnl) mean_turnover += p.turnover;
    rep["mean_turnover"] = mean_turnover / static_cast<double>(bt.pnl.size());
    rep["cost_levels"] = ordered_json::array();
    for (const auto& l : levels) {
        const ordered_json e = metrics::to_json(l.metrics);
        ordered_json row{{"k_bps", l.k_bps}};
        for (auto it = e.begin(); it != e.end(); ++it) row[it.key()] = it.value();
        rep["cost_levels"].push_back(row);
    }

    std::vector<fs::path> inputs{pnl_path};
    std::vector<std::pair<Date, double>> bench;
    if (benchmark_path) {
        std::ifstream bin(*benchmark_path);
        if (!bin) throw Error("cannot open benchmark file '" + benchmark_path->string() + "'");
        std::string line;
        std::getline(bin, line);
        if (ingest::detail::split_csv_line(line) != std::vector<std::string>{"date", "return"})
            throw Error("benchmark header must be 'date,return'");
        std::size_t lineno = 1;
        while (std::getline(bin, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            auto f = ingest::detail::split_csv_line(line);
            auto d = f.size() == 2 ? try_parse_date(f[0]) : std::nullopt;
            auto r = f.size() == 2 ? try_parse_double(f[1]) : std::nullopt;
            if (!d || !r) throw Error("benchmark line " + std::to_string(lineno) + " malformed");
            if (*d >= bt.pnl.front().date && *d <= bt.pnl.back().date) bench.emplace_back(*d, *r);
        }
        if (!bench.empty()) {
            std::vector<double> series;
            for (const auto& [d, r] : bench) series.push_back(r);
            rep["benchmark"] = metrics::to_json(metrics::compute_metrics(series, risk_free));
            rep["benchmark"]["source"] = benchmark_path->filename().generic_string();
        }
        inputs.push_back(*benchmark_path);
    }
    detail::write_json(out_path, rep);
    manifest::write_manifest(out_path, "report", 0, inputs, {{"risk_free", risk_free}});

    // Tabular form.
    const fs::path table_path = detail::with_suffix(out_path, ".txt");
    {
        auto out = detail::open_out(table_path);
        out << "convention: " << convention_text(lag) << "\n";
        out << "cost_bps  cum_return  ann_return  sharpe  sortino  calmar  max_dd\n";
        auto fmt = [](const metrics::Ratio& r) { return r ? format_double(std::round(*r * 1e4) / 1e4) : std::string("n/a"); };
        auto pct = [](double v) { return format_double(std::round(v * 1e6) / 1e4); };
        for (const auto& l : levels)
            out << format_double(l.k_bps) << "  " << pct(l.metrics.cumulative_return) << "%  "
                << pct(l.metrics.annualized_return) << "%  " << fmt(l.metrics.sharpe) << "  "
                << fmt(l.metrics.sortino) << "  " << fmt(l.metrics.calmar) << "  " << pct(l.metrics.max_drawdown)
                << "%\n";
    }
    manifest::write_manifest(table_path, "report", 0, inputs);

    if (curves_path) {
        auto out = detail::open_out(*curves_path);
        out << "date";
        for (double k : bt.cost_levels) out << ",cum_k" << format_double(k);
        if (!bench.empty()) out << ",cum_benchmark";
        out << '\n';
        std::vector<double> cum(bt.cost_levels.size(), 0.0);
        double bcum = 0.0;
        std::size_t bi = 0;
        for (const auto& p : bt.pnl) {
            out << to_string(p.date);
            for (std::size_t c = 0; c < cum.size(); ++c) {
                cum[c] += p.net_return_by_cost[c];
                out << ',' << format_double(cum[c]);
            }
            if (!bench.empty()) {
                while (bi < bench.size() && bench[bi].first <= p.date) bcum += bench[bi++].second;
                out << ',' << format_double(bcum);
            }
            out << '\n';
        }
        out.close();
        manifest::write_manifest(*curves_path, "report", 0, inputs);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// End-to-end run
// ---------------------------------------------------------------------------

struct RunConfig {
    fs::path articles;
    fs::path prices;
    fs::path samples;
    std::optional<fs::path> lexicon;
    std::optional<fs::path> benchmark;
    fs::path out_dir = "out";
    std::string templ = std::string(prefdata::kDefaultTemplate);
    std::uint64_t seed = 42;
    double ner_threshold = 0.98;
    double train_fraction = 0.8;
    std::size_t feature_dim = FeatureExtractor::kDefaultDimension;
    dpo::DpoConfig dpo;
    portfolio::BacktestConfig backtest;
    ScoreMethod method = ScoreMethod::policy;
};

/// Per-stage seeds, all derived from the root seed.
struct StageSeeds {
    std::uint64_t pairs, split, train;
    static StageSeeds from(std::uint64_t root) {
        return {rng::stage_seed(root, "build-pairs"), rng::stage_seed(root, "split"),
                rng::stage_seed(root, "train")};
    }
};

struct PipelineResult {
    fs::path report;
    ordered_json evaluation;
    scoring::CalibrationResult calibration;
    portfolio::BacktestResult backtest;
};

/// ingest -> reference predictions -> pairs + split -> DPO and SFT training ->
/// evaluation -> calibration -> scoring -> backtest -> report. A failure marks
/// the output directory stale and names the failing stage.
inline PipelineResult run_pipeline(const RunConfig& cfg) {
    const fs::path out = cfg.out_dir;
    fs::create_directories(out);
    const fs::path stale = out / manifest::kStaleMarker;
    std::string current = "config";
    auto fail = [&](const std::string& cause) -> StageError {
        std::ofstream(stale, std::ios::trunc) << current << ": " << cause << '\n';
        return StageError(current, cause);
    };
    try {
        // Preconditions, attributed to the stage that owns each input.
        const std::vector<std::pair<std::string, fs::path>> required = {
            {"ingest", cfg.articles}, {"ingest", cfg.prices}, {"build-pairs", cfg.samples}};
        for (const auto& [stage, p] : required)
            if (!fs::exists(p)) {
                current = stage;
                throw Error("input file '" + p.string() + "' does not exist");
            }
        if (cfg.method == ScoreMethod::lexicon && (!cfg.lexicon || !fs::exists(*cfg.lexicon))) {
            current = "score";
            throw Error("lexicon method selected but no lexicon file exists");
        }
        cfg.dpo.validate();
        cfg.backtest.validate();

        const auto seeds = StageSeeds::from(cfg.seed);
        dpo::DpoConfig dcfg = cfg.dpo;
        dcfg.seed = seeds.train;
        PipelineResult res;

        current = "ingest";
        stage_ingest(cfg.articles, cfg.prices, cfg.ner_threshold, out);

        current = "build-pairs";
        stage_ref_predict(cfg.samples, std::nullopt, cfg.feature_dim, cfg.templ, out / "ref_preds.txt");
        const auto pf = stage_build_pairs(cfg.samples, out / "ref_preds.txt", seeds.pairs, cfg.templ,
                                          out / "pairs.jsonl", cfg.train_fraction, seeds.split);

        current = "train";
        stage_train(pf.train, dcfg, cfg.feature_dim, out / "policy.bin");
        current = "train-sft";
        stage_train_sft(pf.train, dcfg, cfg.feature_dim, out / "policy_sft.bin");

        current = "evaluate";
        res.evaluation = stage_evaluate({{"dpo", out / "policy.bin"}, {"sft", out / "policy_sft.bin"}}, pf.test,
                                        out / "evaluation.json");

        current = "calibrate";
        res.calibration = stage_calibrate(out / "policy.bin", pf.train, out / "calib.json");

        current = "score";
        ScoreInputs si;
        si.method = cfg.method;
        si.policy = out / "policy.bin";
        si.calib = out / "calib.json";
        si.lexicon = cfg.lexicon;
        si.templ = cfg.templ;
        stage_score(si, out / "articles.jsonl", out / "sentiment.csv");

        current = "backtest";
        res.backtest = stage_backtest(out / "sentiment.csv", cfg.prices, cfg.backtest, out / "pnl.csv");

        current = "report";
        stage_report(out / "pnl.csv", cfg.benchmark, out / "report.json", out / "curves.csv");
        res.report = out / "report.json";

        std::error_code ec;
        fs::remove(stale, ec);
        return res;
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw fail(e.what());
    }
}

}  // namespace findpo::pipeline
