// Acceptance suite: one line per criterion, non-zero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "findpo/fixture.hpp"
#include "findpo/pipeline.hpp"
#include "findpo/random.hpp"

using namespace findpo;
namespace fs = std::filesystem;

namespace {

struct Check {
    bool ok = true;
    std::string why;
    void expect(bool cond, const std::string& msg) {
        if (!cond && ok) {
            ok = false;
            why = msg;
        }
    }
};

fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("findpo_acceptance_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

// ---------------------------------------------------------------------------
// Independent oracles
// ---------------------------------------------------------------------------

/// Dense DPO loss written directly from the definition.
double oracle_dpo_loss(const std::vector<double>& w, const std::vector<double>& r, std::size_t dim,
                       const std::vector<dpo::EncodedPair>& batch, double beta) {
    auto lp = [&](const std::vector<double>& W, const SparseFeatures& phi, std::size_t y) {
        double z[3] = {0, 0, 0};
        for (std::size_t k = 0; k < 3; ++k)
            for (const auto& [j, x] : phi) z[k] += W[k * dim + j] * x;
        const double m = std::max({z[0], z[1], z[2]});
        return z[y] - m - std::log(std::exp(z[0] - m) + std::exp(z[1] - m) + std::exp(z[2] - m));
    };
    double s = 0;
    for (const auto& p : batch) {
        const auto a = index_of(p.preferred), b = index_of(p.dispreferred);
        const double z = beta * ((lp(w, p.phi, a) - lp(r, p.phi, a)) - (lp(w, p.phi, b) - lp(r, p.phi, b)));
        s += std::log1p(std::exp(-z));
    }
    return s / static_cast<double>(batch.size());
}

dpo::EncodedPair random_pair(rng::Stream& g, std::size_t dim) {
    dpo::EncodedPair p;
    for (std::size_t j = 0; j < dim; ++j)
        if (g.uniform() < 0.6) p.phi.emplace_back(static_cast<std::uint32_t>(j), 1.0 + static_cast<double>(g.below(3)));
    const auto w = g.below(3);
    p.preferred = kLabels[w];
    p.dispreferred = kLabels[(w + 1 + g.below(2)) % 3];
    return p;
}

/// Labeled texts whose class is announced by one cue word among noise words.
std::vector<prefdata::LabeledSample> separable_samples(std::uint64_t seed, std::size_t n) {
    static const char* cue[] = {"upbeat", "gloomy", "steady"};
    rng::Stream g(seed);
    std::vector<prefdata::LabeledSample> out;
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<std::size_t>(g.below(3));
        std::string text;
        for (int k = 0; k < 4; ++k) text += "noise" + std::to_string(g.below(50)) + " ";
        text += cue[c];
        out.push_back({text, kLabels[c], prefdata::Source::OTHER});
    }
    return out;
}

dpo::DpoConfig training_config(std::uint64_t seed) {
    dpo::DpoConfig c;
    c.learning_rate = 0.1;
    c.seed = seed;
    return c;
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

Check c1_dpo_identity() {
    Check c;
    rng::Stream g(101);
    {
        LogLinearPolicy pol(8);
        for (double& w : pol.weights()) w = g.normal();
        std::vector<dpo::EncodedPair> batch;
        for (int i = 0; i < 100; ++i) batch.push_back(random_pair(g, 8));
        const double l = dpo::dpo_loss(pol, pol, batch, 0.1);
        c.expect(std::abs(l - std::log(2.0)) < 1e-12, "loss at policy == reference is " + format_double(l));
    }
    const double h = 1e-6;
    for (int t = 0; t < 20; ++t) {
        const std::size_t dim = 1 + g.below(8);
        LogLinearPolicy pol(dim), ref(dim);
        for (double& w : pol.weights()) w = 0.5 * g.normal();
        for (double& w : ref.weights()) w = 0.5 * g.normal();
        std::vector<dpo::EncodedPair> batch;
        for (std::uint64_t i = 0; i <= g.below(5); ++i) batch.push_back(random_pair(g, dim));
        const double beta = 0.5 + g.uniform();
        const auto grad = dpo::dpo_grad(pol, ref, batch, beta);
        std::vector<double> w(pol.weights().begin(), pol.weights().end());
        const std::vector<double> r(ref.weights().begin(), ref.weights().end());
        double num = 0, den = 0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double o = w[i];
            w[i] = o + h;
            const double up = oracle_dpo_loss(w, r, dim, batch, beta);
            w[i] = o - h;
            const double dn = oracle_dpo_loss(w, r, dim, batch, beta);
            w[i] = o;
            const double fd = (up - dn) / (2 * h);
            num += (grad[i] - fd) * (grad[i] - fd);
            den += fd * fd;
        }
        const double rel = std::sqrt(num / den);
        c.expect(rel < 1e-5, "gradient relative error " + format_double(rel) + " on instance " + std::to_string(t));
    }
    return c;
}

Check c2_dpo_learning() {
    Check c;
    const auto samples = separable_samples(202, 200);
    std::vector<prefdata::PreferencePair> pairs;
    rng::Stream g(203);
    for (const auto& s : samples) {
        const auto t = index_of(s.truth);
        pairs.push_back({s.raw_text, s.truth, kLabels[(t + 1 + g.below(2)) % 3]});
    }
    auto cfg = training_config(204);
    cfg.learning_rate = 0.5;
    const auto res = dpo::train_dpo(pairs, cfg, FeatureExtractor());
    const auto& ep = res.trace.epochs;
    c.expect(ep.size() == 6, "expected 5 epoch summaries plus the initial one");
    c.expect(std::abs(ep.front().loss - std::log(2.0)) < 1e-9, "initial loss " + format_double(ep.front().loss));
    c.expect(ep.back().loss < 0.1, "final loss " + format_double(ep.back().loss));
    for (std::size_t e = 1; e < ep.size(); ++e)
        c.expect(ep[e].margin >= ep[e - 1].margin, "margin decreased at epoch " + std::to_string(e));
    return c;
}

Check c3_harness_parity() {
    Check c;
    const auto dir = scratch("parity");
    {
        std::ofstream out(dir / "samples.jsonl");
        prefdata::write_samples(out, separable_samples(303, 500));
    }
    const std::string templ(prefdata::kDefaultTemplate);
    pipeline::stage_ref_predict(dir / "samples.jsonl", std::nullopt, FeatureExtractor::kDefaultDimension, templ,
                                dir / "ref.txt");
    const auto files = pipeline::stage_build_pairs(dir / "samples.jsonl", dir / "ref.txt", 304, templ,
                                                   dir / "pairs.jsonl", 0.8, 305);
    const auto cfg = training_config(306);
    pipeline::stage_train(files.train, cfg, FeatureExtractor::kDefaultDimension, dir / "dpo.bin");
    pipeline::stage_train_sft(files.train, cfg, FeatureExtractor::kDefaultDimension, dir / "sft.bin");
    const auto rep = pipeline::stage_evaluate({{"dpo", dir / "dpo.bin"}, {"sft", dir / "sft.bin"}}, files.test,
                                              dir / "evaluation.json");
    c.expect(rep["samples"] == 100, "test split should hold 100 samples");
    for (const char* name : {"dpo", "sft"}) {
        const double f1 = rep["policies"][name]["weighted_f1"].get<double>();
        c.expect(f1 > 0.95, std::string(name) + " weighted F1 " + format_double(f1));
    }
    return c;
}

Check c4_calibration() {
    Check c;
    rng::Stream g(404);
    std::vector<Logits> z;
    std::vector<Label> y;
    for (int i = 0; i < 5000; ++i) {
        Logits l{1.5 * g.normal(), 1.5 * g.normal(), 1.5 * g.normal()};
        const Logits p = softmax(l);
        const double u = g.uniform();
        y.push_back(kLabels[u < p[0] ? 0 : (u < p[0] + p[1] ? 1 : 2)]);
        for (double& v : l) v *= 10.0;
        z.push_back(l);
    }
    const auto fit = scoring::fit_temperature(z, y);
    c.expect(std::abs(fit.temperature - 10.0) <= 0.5, "T* = " + format_double(fit.temperature));

    // NLL(T*) <= NLL(1), and no point of a dense grid beats T* by more than rounding.
    for (int t = 0; t < 25; ++t) {
        std::vector<Logits> zz;
        std::vector<Label> yy;
        const auto n = 1 + g.below(60);
        const double scale = std::exp(2.0 * g.normal());
        for (std::uint64_t i = 0; i < n; ++i) {
            zz.push_back({scale * g.normal(), scale * g.normal(), scale * g.normal()});
            yy.push_back(kLabels[g.below(3)]);
        }
        const auto f = scoring::fit_temperature(zz, yy);
        c.expect(f.nll_after <= scoring::mean_nll(zz, yy, 1.0), "NLL(T*) > NLL(1) on input " + std::to_string(t));
        double grid_min = INFINITY;
        for (int i = 0; i <= 2000; ++i)
            grid_min = std::min(grid_min, scoring::mean_nll(zz, yy, std::exp(std::log(0.05) + std::log(400.0) * i / 2000.0)));
        c.expect(f.nll_after <= grid_min + 1e-6, "dense grid beats T* on input " + std::to_string(t));
    }
    return c;
}

/// Per-day sentiment equal to the realized-return rank, from a 5 x 250 fixture.
struct OracleBook {
    ingest::ReturnsTable table;
    std::vector<scoring::DailySentiment> sentiment;
};

OracleBook oracle_book(const fs::path& dir) {
    fixture::FixtureConfig fc;
    fc.seed = 505;
    fc.n_tickers = 5;
    fc.n_days = 250;
    const auto f = fixture::gen_fixture(fc, dir);
    OracleBook b{ingest::build_returns_table(ingest::parse_prices_file(f.prices.string())), {}};
    for (std::size_t d = 0; d < b.table.num_days(); ++d)
        for (const auto& t : b.table.tickers()) {
            std::size_t below = 0;
            const double r = *b.table.simple_return(d, t);
            for (const auto& u : b.table.tickers()) below += *b.table.simple_return(d, u) < r;
            b.sentiment.push_back({b.table.dates()[d], t, static_cast<double>(below) / 4.0 * 2.0 - 1.0, 1});
        }
    return b;
}

Check c5_backtest_oracle() {
    Check c;
    const auto b = oracle_book(scratch("oracle"));
    portfolio::BacktestConfig cfg;
    cfg.cost_bps_levels = {0};
    const auto pos = portfolio::run_backtest(b.sentiment, b.table, cfg);
    auto flipped = b.sentiment;
    for (auto& s : flipped) s.mean_score = -s.mean_score;
    const auto neg = portfolio::run_backtest(flipped, b.table, cfg);
    double cp = 0, cn = 0;
    for (const auto& p : pos.pnl) cp += p.gross_return;
    for (const auto& p : neg.pnl) cn += p.gross_return;
    c.expect(pos.pnl.size() == 250, "expected 250 traded days, got " + std::to_string(pos.pnl.size()));
    c.expect(cp > 0, "cumulative gross " + format_double(cp));
    c.expect(cn < 0 && std::abs(cp + cn) < 1e-12, "negated cumulative gross " + format_double(cn));
    c.expect(pos.holdings.size() == neg.holdings.size(), "holding counts differ");
    for (std::size_t i = 0; i < pos.holdings.size() && i < neg.holdings.size(); ++i) {
        c.expect(pos.holdings[i].long_set == neg.holdings[i].short_set &&
                     pos.holdings[i].short_set == neg.holdings[i].long_set,
                 "long/short sets did not swap on day " + std::to_string(i));
    }
    return c;
}

Check c6_cost_sweep() {
    Check c;
    const auto dir = scratch("costs");
    fixture::FixtureConfig fc;
    fc.seed = 606;
    fc.n_tickers = 12;
    fc.n_days = 120;
    fc.n_articles = 900;
    fc.rho = 0.5;
    const auto f = fixture::gen_fixture(fc, dir / "fx");
    pipeline::ScoreInputs si;
    si.method = pipeline::ScoreMethod::given;
    pipeline::stage_score(si, f.articles, dir / "sentiment.csv");
    const portfolio::BacktestConfig cfg;
    const auto res = pipeline::stage_backtest(dir / "sentiment.csv", f.prices, cfg, dir / "pnl.csv");
    c.expect(!res.pnl.empty(), "no traded days");

    // Straight-line re-implementation: weights from the held sets, turnover as
    // the sum of absolute weight changes, net = gross - k/10000 * turnover.
    std::map<std::string, double> prev;
    std::vector<double> cum(cfg.cost_bps_levels.size(), 0.0);
    for (std::size_t d = 0; d < res.pnl.size(); ++d) {
        const auto& h = res.holdings[d];
        std::map<std::string, double> w;
        for (const auto& t : h.long_set) w[t] += 1.0 / static_cast<double>(h.long_set.size());
        for (const auto& t : h.short_set) w[t] -= 1.0 / static_cast<double>(h.short_set.size());
        double to = 0;
        std::map<std::string, int> names;
        for (const auto& [k, v] : w) names[k] = 1;
        for (const auto& [k, v] : prev) names[k] = 1;
        for (const auto& [k, unused] : names) {
            const double a = w.count(k) ? w.at(k) : 0.0, b = prev.count(k) ? prev.at(k) : 0.0;
            to += std::abs(a - b);
        }
        c.expect(std::abs(to - res.pnl[d].turnover) <= 1e-12, "turnover mismatch on day " + std::to_string(d));
        for (std::size_t k = 0; k < cfg.cost_bps_levels.size(); ++k) {
            const double net = res.pnl[d].gross_return - cfg.cost_bps_levels[k] / 10000.0 * to;
            c.expect(std::abs(net - res.pnl[d].net_return_by_cost[k]) <= 1e-12,
                     "net mismatch on day " + std::to_string(d) + " at k=" + format_double(cfg.cost_bps_levels[k]));
            cum[k] += net;
        }
        prev = std::move(w);
    }
    const auto report = metrics::build_report(res);
    for (std::size_t k = 0; k < cum.size(); ++k) {
        c.expect(std::abs(report[k].metrics.cumulative_return - cum[k]) <= 1e-12,
                 "cumulative mismatch at k=" + format_double(cfg.cost_bps_levels[k]));
        if (k) c.expect(cum[k] <= cum[k - 1], "cumulative net increased at k=" + format_double(cfg.cost_bps_levels[k]));
    }
    return c;
}

Check c7_metric_oracles() {
    Check c;
    const std::vector<double> s{0.01, -0.005, 0.01, -0.005};
    // The Sharpe hand derivation reads the series as daily log returns:
    // 0.0025 * 252 / (0.0075 * sqrt(4/3) * sqrt(252)).
    const double sh = *metrics::sharpe(s);
    c.expect(std::abs(sh - 4.583) <= 1e-3, "sharpe " + format_double(sh));
    const double so = *metrics::sortino(s);
    c.expect(std::abs(so - 11.225) <= 1e-3, "sortino " + format_double(so));
    const double mdd = metrics::max_drawdown(std::vector<double>{0.1, -0.2});
    c.expect(std::abs(mdd - 0.2) <= 1e-15, "max drawdown " + format_double(mdd));
    using L = Label;
    const std::vector<L> truth{L::positive, L::positive, L::negative, L::neutral};
    const std::vector<L> pred{L::positive, L::negative, L::negative, L::neutral};
    const double f1 = metrics::weighted_f1(truth, pred).weighted_f1;
    c.expect(f1 == 0.75, "weighted F1 " + format_double(f1));
    return c;
}

Check c8_determinism() {
    Check c;
    const auto root = scratch("determinism");
    const auto f = fixture::gen_fixture({}, root / "fx");
    auto cfg = pipeline::RunConfig{};
    cfg.articles = f.articles;
    cfg.prices = f.prices;
    cfg.samples = f.samples;
    cfg.benchmark = f.benchmark;
    cfg.seed = 808;
    cfg.dpo.learning_rate = 0.1;
    auto hashes = [](const fs::path& d) {
        std::map<std::string, std::string> h;
        for (const auto& e : fs::directory_iterator(d)) h[e.path().filename().string()] = manifest::file_sha256(e.path());
        return h;
    };
    cfg.out_dir = root / "a";
    pipeline::run_pipeline(cfg);
    cfg.out_dir = root / "b";
    pipeline::run_pipeline(cfg);
    const auto ha = hashes(root / "a"), hb = hashes(root / "b");
    c.expect(ha.size() > 20 && ha == hb, "repeat run differs");
    c.expect(fs::exists(root / "a" / "report.json"), "no report.json");

    cfg.out_dir = root / "lag1";
    cfg.backtest.lag = 1;
    pipeline::run_pipeline(cfg);
    std::ifstream r(root / "lag1" / "report.json");
    const auto rep = nlohmann::json::parse(r);
    c.expect(rep["convention"]["lag"] == 1, "lag-1 report does not record the convention");
    c.expect(hashes(root / "lag1").at("pnl.csv") != ha.at("pnl.csv"), "lag-1 PnL identical to lag-0 PnL");
    return c;
}

Check c9_allocation() {
    Check c;
    portfolio::BacktestConfig cfg;
    std::vector<std::string> names;
    for (int i = 0; i < 417; ++i) names.push_back("S" + std::to_string(1000 + i));
    const auto a = portfolio::allocate(names, cfg);
    c.expect(a && a->long_set.size() == 145 && a->short_set.size() == 145, "417 names did not give 145 per side");
    rng::Stream g(909);
    for (int t = 0; t < 500; ++t) {
        std::vector<std::string> u(names.begin(), names.begin() + 2 + static_cast<std::ptrdiff_t>(g.below(416)));
        g.shuffle(u);
        cfg.long_fraction = cfg.short_fraction = 0.01 + 0.49 * g.uniform();
        const auto b = portfolio::allocate(u, cfg);
        if (!b) {
            c.expect(false, "allocation skipped for " + std::to_string(u.size()) + " names");
            continue;
        }
        double net = 0, gross = 0;
        for (const auto& [k, w] : b->weights) net += w, gross += std::abs(w);
        c.expect(std::abs(net) <= 1e-12, "not dollar-neutral: " + format_double(net));
        c.expect(std::abs(gross - 2.0) <= 1e-12, "gross exposure " + format_double(gross));
    }
    return c;
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double limit_s;  // 0 = no runtime limit
        std::function<Check()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "DPO loss identity and finite-difference gradient", 1.0, c1_dpo_identity},
        {2, "DPO learning on a separable 200-pair set", 10.0, c2_dpo_learning},
        {3, "DPO vs SFT harness parity (weighted F1 > 0.95)", 0.0, c3_harness_parity},
        {4, "Temperature calibration recovers T* = 10", 5.0, c4_calibration},
        {5, "Backtest oracle and sign flip under negation", 5.0, c5_backtest_oracle},
        {6, "Cost monotonicity and straight-line cost model", 0.0, c6_cost_sweep},
        {7, "Metric oracles", 0.0, c7_metric_oracles},
        {8, "Pipeline determinism and lag convention", 0.0, c8_determinism},
        {9, "Allocation arithmetic", 0.0, c9_allocation},
    };
    int failures = 0;
    for (const auto& cr : criteria) {
        Check res;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            res = cr.run();
        } catch (const std::exception& e) {
            res.ok = false;
            res.why = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (res.ok && cr.limit_s > 0 && secs >= cr.limit_s) {
            res.ok = false;
            res.why = "runtime " + format_double(secs) + " s exceeds " + format_double(cr.limit_s) + " s";
        }
        failures += !res.ok;
        std::printf("[%s] criterion %d: %s (%.3f s)%s%s\n", res.ok ? "PASS" : "FAIL", cr.id, cr.name, secs,
                    res.ok ? "" : " -- ", res.why.c_str());
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
