// tools/findpo.cpp
//
// Command-line front end. Every subcommand reads files and writes files plus
// manifests; `run` chains all stages. A `--config` file holds `key=value`
// lines named after the long flags; flags given on the command line win.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "findpo/fixture.hpp"
#include "findpo/pipeline.hpp"

namespace fs = std::filesystem;
using namespace findpo;

namespace {

void log(std::string_view level, std::string_view stage, std::string_view msg) {
    nlohmann::ordered_json j{{"level", level}, {"stage", stage}, {"msg", msg}};
    std::cerr << j.dump() << '\n';
}

std::map<std::string, std::string> read_config(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw Error("cannot open config file '" + p.string() + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + ": expected key=value");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

std::string read_template(const std::optional<fs::path>& file) {
    if (!file) return std::string(prefdata::kDefaultTemplate);
    std::ifstream in(*file);
    if (!in) throw Error("cannot open template file '" + file->string() + "'");
    std::string t{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    while (!t.empty() && (t.back() == '\n' || t.back() == '\r')) t.pop_back();
    return t;
}

void add_dpo_flags(CLI::App* c, dpo::DpoConfig& d, std::size_t& dim) {
    c->add_option("--beta", d.beta, "Preference temperature beta");
    c->add_option("--lr", d.learning_rate, "AdamW learning rate");
    c->add_option("--epochs", d.epochs, "Training epochs");
    c->add_option("--batch-size", d.batch_size, "Minibatch size");
    c->add_option("--weight-decay", d.weight_decay, "Decoupled weight decay");
    c->add_option("--warmup", d.warmup_ratio, "Linear warm-up share of total steps");
    c->add_option("--dim", dim, "Hashed feature dimension");
}

void add_backtest_flags(CLI::App* c, portfolio::BacktestConfig& b, std::optional<double>& fraction) {
    c->add_option("--fraction", fraction, "Long and short fraction of ranked names");
    c->add_option("--long-fraction", b.long_fraction);
    c->add_option("--short-fraction", b.short_fraction);
    c->add_option("--costs", b.cost_bps_levels, "Cost levels in bps")->delimiter(',');
    c->add_option("--lag", b.lag, "Trading days between sentiment date and trade date");
    c->add_option("--min-names", b.min_names_per_side, "Minimum names per side");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Preference-optimized sentiment classifier and long-short backtester"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    std::optional<fs::path> config_path;
    std::uint64_t seed = 42;
    std::optional<fs::path> out;
    app.add_option("--config", config_path, "key=value config file");
    app.add_option("--seed", seed, "Root seed");
    app.add_option("--out", out, "Output file or directory");

    dpo::DpoConfig dcfg;
    std::size_t dim = FeatureExtractor::kDefaultDimension;
    portfolio::BacktestConfig bcfg;
    std::optional<double> fraction;
    std::optional<fs::path> template_file;

    // ingest
    fs::path articles, prices;
    double ner_threshold = 0.98;
    auto* c_ingest = app.add_subcommand("ingest", "Validate and NER-filter articles, load returns");
    c_ingest->add_option("--articles", articles)->required();
    c_ingest->add_option("--prices", prices)->required();
    c_ingest->add_option("--ner-threshold", ner_threshold);

    // predict (reference labels)
    fs::path samples;
    std::optional<fs::path> policy_opt;
    auto* c_predict = app.add_subcommand("predict", "Reference-model labels for a sample file");
    c_predict->add_option("--samples", samples)->required();
    c_predict->add_option("--policy", policy_opt, "Reference policy (zero policy if omitted)");
    c_predict->add_option("--dim", dim);
    c_predict->add_option("--template-file", template_file);

    // build-pairs
    fs::path ref_preds;
    std::optional<double> train_fraction;
    auto* c_pairs = app.add_subcommand("build-pairs", "Build preference pairs");
    c_pairs->add_option("--samples", samples)->required();
    c_pairs->add_option("--ref-preds", ref_preds)->required();
    c_pairs->add_option("--template-file", template_file);
    c_pairs->add_option("--train-fraction", train_fraction, "Also write seeded .train/.test splits");

    // train / train-sft
    fs::path pairs;
    std::optional<fs::path> init_policy;
    auto* c_train = app.add_subcommand("train", "DPO training");
    c_train->add_option("--pairs", pairs)->required();
    c_train->add_option("--init", init_policy, "Initial and reference policy");
    add_dpo_flags(c_train, dcfg, dim);
    auto* c_sft = app.add_subcommand("train-sft", "Cross-entropy baseline training");
    c_sft->add_option("--pairs", pairs)->required();
    add_dpo_flags(c_sft, dcfg, dim);

    // evaluate
    std::optional<fs::path> dpo_policy, sft_policy;
    auto* c_eval = app.add_subcommand("evaluate", "Weighted F1 on a test split");
    c_eval->add_option("--pairs", pairs)->required();
    c_eval->add_option("--dpo", dpo_policy);
    c_eval->add_option("--sft", sft_policy);
    c_eval->add_option("--policy", policy_opt);

    // calibrate
    fs::path policy;
    auto* c_cal = app.add_subcommand("calibrate", "Fit a softmax temperature");
    c_cal->add_option("--policy", policy)->required();
    c_cal->add_option("--eval", pairs)->required();

    // score
    std::string method = "policy";
    std::optional<fs::path> calib, lexicon;
    auto* c_score = app.add_subcommand("score", "Per-article sentiment scores");
    c_score->add_option("--articles", articles)->required();
    c_score->add_option("--method", method)->check(CLI::IsMember({"policy", "lexicon", "given"}));
    c_score->add_option("--policy", policy_opt);
    c_score->add_option("--calib", calib);
    c_score->add_option("--lexicon", lexicon);
    c_score->add_option("--template-file", template_file);

    // backtest
    fs::path sentiment;
    auto* c_bt = app.add_subcommand("backtest", "Daily long-short backtest");
    c_bt->add_option("--sentiment", sentiment)->required();
    c_bt->add_option("--prices", prices)->required();
    add_backtest_flags(c_bt, bcfg, fraction);

    // report
    fs::path pnl;
    std::optional<fs::path> benchmark, curves;
    double risk_free = 0.0;
    auto* c_rep = app.add_subcommand("report", "Performance metrics per cost level");
    c_rep->add_option("--pnl", pnl)->required();
    c_rep->add_option("--benchmark", benchmark);
    c_rep->add_option("--curves", curves);
    c_rep->add_option("--rf", risk_free, "Annual risk-free rate");

    // gen-fixture
    fixture::FixtureConfig fcfg;
    auto* c_fix = app.add_subcommand("gen-fixture", "Write a synthetic fixture");
    c_fix->add_option("--tickers", fcfg.n_tickers);
    c_fix->add_option("--days", fcfg.n_days);
    c_fix->add_option("--articles", fcfg.n_articles);
    c_fix->add_option("--samples", fcfg.n_samples);
    c_fix->add_option("--rho", fcfg.rho);
    c_fix->add_option("--dispersion", fcfg.dispersion);

    // verify
    auto* c_verify = app.add_subcommand("verify", "Re-hash every manifest in a directory");

    // run
    pipeline::RunConfig rcfg;
    auto* c_run = app.add_subcommand("run", "All stages end to end");
    c_run->add_option("--articles", rcfg.articles)->required();
    c_run->add_option("--prices", rcfg.prices)->required();
    c_run->add_option("--samples", rcfg.samples)->required();
    c_run->add_option("--lexicon", rcfg.lexicon);
    c_run->add_option("--benchmark", rcfg.benchmark);
    c_run->add_option("--method", method)->check(CLI::IsMember({"policy", "lexicon", "given"}));
    c_run->add_option("--ner-threshold", rcfg.ner_threshold);
    c_run->add_option("--train-fraction", rcfg.train_fraction);
    c_run->add_option("--template-file", template_file);
    add_dpo_flags(c_run, dcfg, dim);
    add_backtest_flags(c_run, bcfg, fraction);

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    // Config values are spliced in ahead of the user's flags so the latter take precedence.
    std::vector<std::string> args;
    for (int i = argc - 1; i >= 1; --i) args.emplace_back(argv[i]);
    try {
        std::optional<std::string> cfg_file, subname;
        for (int i = 1; i < argc; ++i) {
            std::string a = argv[i];
            if (a == "--config" && i + 1 < argc) cfg_file = argv[i + 1];
            else if (a.rfind("--config=", 0) == 0) cfg_file = a.substr(9);
            else if (!subname && app.get_subcommand_no_throw(a)) subname = a;
        }
        if (cfg_file && subname) {
            auto* sub = app.get_subcommand(*subname);
            std::vector<std::string> extra;
            for (const auto& [k, v] : read_config(*cfg_file)) {
                const std::string flag = "--" + k;
                if (sub->get_option_no_throw(flag) || (k != "config" && app.get_option_no_throw(flag)))
                    extra.push_back(flag + "=" + v);
                else
                    log("warn", "config", "ignoring key '" + k + "' not used by " + *subname);
            }
            // args is reversed (CLI11 convention); insert just after the subcommand name.
            std::vector<std::string> fwd(args.rbegin(), args.rend());
            auto pos = std::find(fwd.begin(), fwd.end(), *subname);
            fwd.insert(pos + 1, extra.begin(), extra.end());
            args.assign(fwd.rbegin(), fwd.rend());
        }
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        log("error", "config", e.what());
        return 2;
    }

    if (fraction) bcfg.long_fraction = bcfg.short_fraction = *fraction;
    dcfg.seed = seed;

    auto need_out = [&](const char* fallback) { return out ? *out : fs::path(fallback); };
    const std::string stage = app.get_subcommands().front()->get_name();
    try {
        if (*c_ingest) {
            const auto s = pipeline::stage_ingest(articles, prices, ner_threshold, need_out("."));
            log("info", stage, "kept " + std::to_string(s.articles_kept) + " of " + std::to_string(s.articles_read) +
                                   " articles; " + std::to_string(s.trading_days) + " trading days");
        } else if (*c_predict) {
            pipeline::stage_ref_predict(samples, policy_opt, dim, read_template(template_file), need_out("ref_preds.txt"));
        } else if (*c_pairs) {
            const auto f = pipeline::stage_build_pairs(samples, ref_preds, seed, read_template(template_file),
                                                       need_out("pairs.jsonl"), train_fraction,
                                                       rng::stage_seed(seed, "split"));
            log("info", stage, "wrote " + f.all.string());
        } else if (*c_train) {
            const auto r = pipeline::stage_train(pairs, dcfg, dim, need_out("policy.bin"), init_policy);
            log("info", stage, "final loss " + format_double(r.trace.epochs.back().loss));
        } else if (*c_sft) {
            const auto r = pipeline::stage_train_sft(pairs, dcfg, dim, need_out("policy_sft.bin"));
            log("info", stage, "final loss " + format_double(r.trace.epochs.back().loss));
        } else if (*c_eval) {
            std::vector<std::pair<std::string, fs::path>> pols;
            if (dpo_policy) pols.emplace_back("dpo", *dpo_policy);
            if (sft_policy) pols.emplace_back("sft", *sft_policy);
            if (policy_opt) pols.emplace_back("policy", *policy_opt);
            if (pols.empty()) throw Error("evaluate needs at least one of --dpo, --sft, --policy");
            const auto rep = pipeline::stage_evaluate(pols, pairs, need_out("evaluation.json"));
            for (const auto& [name, _] : pols)
                log("info", stage, name + " weighted F1 " +
                                       format_double(rep["policies"][name]["weighted_f1"].get<double>()));
        } else if (*c_cal) {
            const auto c = pipeline::stage_calibrate(policy, pairs, need_out("calib.json"));
            log("info", stage, "temperature " + format_double(c.temperature));
        } else if (*c_score) {
            pipeline::ScoreInputs si;
            si.method = pipeline::parse_score_method(method);
            si.policy = policy_opt;
            si.calib = calib;
            si.lexicon = lexicon;
            si.templ = read_template(template_file);
            const auto recs = pipeline::stage_score(si, articles, need_out("sentiment.csv"));
            log("info", stage, "scored " + std::to_string(recs.size()) + " articles");
        } else if (*c_bt) {
            bcfg.validate();
            const auto r = pipeline::stage_backtest(sentiment, prices, bcfg, need_out("pnl.csv"));
            log("info", stage, std::to_string(r.pnl.size()) + " trading days, " + std::to_string(r.skips.size()) +
                                   " skipped");
        } else if (*c_rep) {
            pipeline::stage_report(pnl, benchmark, need_out("report.json"), curves, risk_free);
        } else if (*c_fix) {
            fcfg.seed = seed;
            fixture::gen_fixture(fcfg, need_out("fixture"));
        } else if (*c_verify) {
            const auto issues = manifest::verify_directory(need_out("."));
            for (const auto& i : issues) log("error", stage, i.manifest + ": " + i.problem);
            if (!issues.empty()) return 1;
            log("info", stage, "all manifests verified");
        } else if (*c_run) {
            rcfg.out_dir = need_out("out");
            rcfg.seed = seed;
            rcfg.templ = read_template(template_file);
            rcfg.feature_dim = dim;
            rcfg.dpo = dcfg;
            rcfg.backtest = bcfg;
            rcfg.method = pipeline::parse_score_method(method);
            const auto r = pipeline::run_pipeline(rcfg);
            log("info", stage, "report written to " + r.report.string());
        }
    } catch (const pipeline::StageError& e) {
        log("error", e.stage(), e.cause());
        return 1;
    } catch (const std::exception& e) {
        log("error", stage, e.what());
        return 1;
    }
    return 0;
}
