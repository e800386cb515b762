#include <gtest/gtest.h>

#include <cmath>

#include "findpo/dpo.hpp"
#include "findpo/random.hpp"

using namespace findpo;
using namespace findpo::dpo;

namespace {

// Dense, loop-by-loop reference for the DPO objective.
double oracle_loss(const std::vector<double>& w, const std::vector<double>& wref, std::size_t dim,
                   const std::vector<EncodedPair>& batch, double beta) {
    auto logprobs = [&](const std::vector<double>& W, const SparseFeatures& phi) {
        std::array<double, 3> z{};
        for (std::size_t k = 0; k < 3; ++k)
            for (const auto& [j, x] : phi) z[k] += W[k * dim + j] * x;
        const double m = std::max({z[0], z[1], z[2]});
        const double lse = m + std::log(std::exp(z[0] - m) + std::exp(z[1] - m) + std::exp(z[2] - m));
        for (double& v : z) v -= lse;
        return z;
    };
    double total = 0;
    for (const auto& p : batch) {
        const auto lp = logprobs(w, p.phi), lr = logprobs(wref, p.phi);
        const auto a = index_of(p.preferred), b = index_of(p.dispreferred);
        const double z = beta * ((lp[a] - lr[a]) - (lp[b] - lr[b]));
        total += std::log1p(std::exp(-z));
    }
    return total / static_cast<double>(batch.size());
}

EncodedPair random_pair(rng::Stream& g, std::size_t dim) {
    EncodedPair p;
    for (std::size_t j = 0; j < dim; ++j)
        if (g.uniform() < 0.6) p.phi.emplace_back(static_cast<std::uint32_t>(j), 1.0 + static_cast<double>(g.below(3)));
    const auto w = g.below(3);
    p.preferred = kLabels[w];
    p.dispreferred = kLabels[(w + 1 + g.below(2)) % 3];
    return p;
}

LogLinearPolicy random_policy(rng::Stream& g, std::size_t dim, double scale) {
    LogLinearPolicy p(dim);
    for (double& w : p.weights()) w = scale * g.normal();
    return p;
}

/// 200 pairs whose label is announced by one class-specific token among noise.
std::vector<PreferencePair> separable_pairs(std::uint64_t seed, std::size_t n) {
    static const char* cue[] = {"upbeat", "gloomy", "steady"};
    rng::Stream g(seed);
    std::vector<PreferencePair> out;
    for (std::size_t i = 0; i < n; ++i) {
        const auto w = g.below(3);
        std::string prompt = "classify:";
        for (int k = 0; k < 4; ++k) prompt += " noise" + std::to_string(g.below(50));
        prompt += std::string(" ") + cue[w];
        out.push_back({prompt, kLabels[w], kLabels[(w + 1 + g.below(2)) % 3]});
    }
    return out;
}

}  // namespace

TEST(DpoLoss, EqualPolicyAndReferenceGiveLn2) {
    rng::Stream g(1);
    const auto pol = random_policy(g, 6, 1.0);
    std::vector<EncodedPair> batch;
    for (int i = 0; i < 100; ++i) batch.push_back(random_pair(g, 6));
    EXPECT_NEAR(dpo_loss(pol, pol, batch, 0.1), std::log(2.0), 1e-12);
}

TEST(DpoLoss, ScalarExample) {
    // Logits that are already normalised log-probabilities.
    LogLinearPolicy pol(1), ref(1);
    pol.at(0, 0) = -0.5;
    pol.at(1, 0) = -2.0;
    pol.at(2, 0) = std::log(1 - std::exp(-0.5) - std::exp(-2.0));
    ref.at(0, 0) = -1.0;
    ref.at(1, 0) = -1.5;
    ref.at(2, 0) = std::log(1 - std::exp(-1.0) - std::exp(-1.5));
    const std::vector<EncodedPair> b{{{{0, 1.0}}, Label::positive, Label::negative}};
    EXPECT_NEAR(mean_margin(pol, ref, b, 0.1), 0.1, 1e-12);
    EXPECT_NEAR(dpo_loss(pol, ref, b, 0.1), 0.644397, 1e-6);
    EXPECT_NEAR(dpo_loss(pol, ref, b, 0.1), std::log1p(std::exp(-0.1)), 1e-12);
}

TEST(DpoLoss, SaturatesTowardZeroFromAbove) {
    LogLinearPolicy pol(1), ref(1);
    const std::vector<EncodedPair> b{{{{0, 1.0}}, Label::positive, Label::negative}};
    double prev = dpo_loss(pol, ref, b, 0.1);
    for (double s : {10.0, 100.0, 1000.0, 1e5}) {
        pol.at(0, 0) = s;
        pol.at(1, 0) = -s;
        const double l = dpo_loss(pol, ref, b, 0.1);
        EXPECT_GE(l, 0.0);
        EXPECT_LE(l, prev);
        EXPECT_TRUE(std::isfinite(l));
        prev = l;
    }
    EXPECT_LT(prev, 1e-12);
}

TEST(DpoLoss, MatchesDenseOracle) {
    rng::Stream g(3);
    for (int t = 0; t < 50; ++t) {
        const std::size_t dim = 1 + g.below(8);
        const auto pol = random_policy(g, dim, 2.0), ref = random_policy(g, dim, 2.0);
        std::vector<EncodedPair> batch;
        for (std::uint64_t i = 0; i <= g.below(10); ++i) batch.push_back(random_pair(g, dim));
        const double beta = 0.05 + g.uniform();
        const std::vector<double> w(pol.weights().begin(), pol.weights().end());
        const std::vector<double> r(ref.weights().begin(), ref.weights().end());
        EXPECT_NEAR(dpo_loss(pol, ref, batch, beta), oracle_loss(w, r, dim, batch, beta), 1e-12);
    }
}

TEST(DpoLoss, InputErrors) {
    const LogLinearPolicy a(4), b(5);
    const std::vector<EncodedPair> one{{{{0, 1.0}}, Label::positive, Label::negative}};
    EXPECT_THROW(dpo_loss(a, a, std::span<const EncodedPair>{}, 0.1), Error);
    EXPECT_THROW(dpo_loss(a, a, one, 0.0), Error);
    EXPECT_THROW(dpo_loss(a, b, one, 0.1), Error);
}

TEST(DpoGrad, MatchesCentralFiniteDifferences) {
    rng::Stream g(2024);
    const double h = 1e-6;
    for (int t = 0; t < 20; ++t) {
        const std::size_t dim = 1 + g.below(8);
        auto pol = random_policy(g, dim, 0.5);
        const auto ref = random_policy(g, dim, 0.5);
        std::vector<EncodedPair> batch;
        for (std::uint64_t i = 0; i <= g.below(5); ++i) batch.push_back(random_pair(g, dim));
        const double beta = 0.5 + g.uniform();
        const auto grad = dpo_grad(pol, ref, batch, beta);
        std::vector<double> w(pol.weights().begin(), pol.weights().end());
        const std::vector<double> r(ref.weights().begin(), ref.weights().end());
        std::vector<double> fd(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double orig = w[i];
            w[i] = orig + h;
            const double up = oracle_loss(w, r, dim, batch, beta);
            w[i] = orig - h;
            const double down = oracle_loss(w, r, dim, batch, beta);
            w[i] = orig;
            fd[i] = (up - down) / (2 * h);
        }
        double num = 0, den = 0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            num += (grad[i] - fd[i]) * (grad[i] - fd[i]);
            den += fd[i] * fd[i];
        }
        ASSERT_GT(den, 0.0);
        EXPECT_LT(std::sqrt(num / den), 1e-5) << "instance " << t << " dim " << dim;
    }
}

TEST(DpoGrad, ZeroFeaturesGiveZeroGradient) {
    const LogLinearPolicy p(4);
    const std::vector<EncodedPair> b{{{}, Label::positive, Label::neutral}};
    for (double v : dpo_grad(p, p, b, 0.1)) EXPECT_EQ(v, 0.0);
}

TEST(DpoGrad, DuplicatedBatchKeepsTheMean) {
    rng::Stream g(6);
    const auto pol = random_policy(g, 5, 1.0), ref = random_policy(g, 5, 1.0);
    const auto p = random_pair(g, 5);
    const std::vector<EncodedPair> one{p}, many(7, p);
    const auto a = dpo_grad(pol, ref, one, 0.3), b = dpo_grad(pol, ref, many, 0.3);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
    EXPECT_NEAR(dpo_loss(pol, ref, one, 0.3), dpo_loss(pol, ref, many, 0.3), 1e-15);
}

TEST(Sft, LossValues) {
    const LogLinearPolicy zero(3);
    const std::vector<EncodedSample> s{{{{0, 1.0}}, Label::negative}};
    EXPECT_NEAR(sft_loss(zero, s), std::log(3.0), 1e-12);
    LogLinearPolicy p(3);
    p.at(1, 0) = 10.0;
    EXPECT_LT(sft_loss(p, s), 1e-4);
    const std::vector<EncodedSample> dup(4, s[0]);
    EXPECT_NEAR(sft_loss(p, s), sft_loss(p, dup), 1e-15);
}

TEST(Sft, GradientMatchesFiniteDifferences) {
    rng::Stream g(77);
    for (int t = 0; t < 10; ++t) {
        auto pol = random_policy(g, 4, 0.7);
        std::vector<EncodedSample> batch;
        for (int i = 0; i < 3; ++i) {
            auto p = random_pair(g, 4);
            batch.push_back({p.phi, p.preferred});
        }
        const auto grad = sft_grad(pol, batch);
        for (std::size_t i = 0; i < grad.size(); ++i) {
            const double orig = pol.weights()[i];
            pol.weights()[i] = orig + 1e-6;
            const double up = sft_loss(pol, batch);
            pol.weights()[i] = orig - 1e-6;
            const double down = sft_loss(pol, batch);
            pol.weights()[i] = orig;
            EXPECT_NEAR(grad[i], (up - down) / 2e-6, 1e-7);
        }
    }
}

TEST(Schedule, LinearWarmupThenConstant) {
    DpoConfig c;
    c.learning_rate = 0.1;
    c.warmup_ratio = 0.1;
    EXPECT_NEAR(scheduled_lr(c, 0, 100), 0.01, 1e-15);
    EXPECT_NEAR(scheduled_lr(c, 9, 100), 0.1, 1e-15);
    EXPECT_EQ(scheduled_lr(c, 50, 100), 0.1);
    c.warmup_ratio = 0.0;
    EXPECT_EQ(scheduled_lr(c, 0, 100), 0.1);
}

TEST(Train, ZeroEpochsReturnsInitialisationBitForBit) {
    rng::Stream g(5);
    auto init = random_policy(g, 64, 1.0);
    DpoConfig c;
    c.epochs = 0;
    const auto res = train_dpo(separable_pairs(1, 20), c, FeatureExtractor(64), init);
    EXPECT_EQ(res.policy, init);
    EXPECT_TRUE(res.trace.steps.empty());
    ASSERT_EQ(res.trace.epochs.size(), 1u);
    EXPECT_NEAR(res.trace.epochs[0].loss, std::log(2.0), 1e-12);
}

TEST(Train, SameSeedSameWeights) {
    DpoConfig c;
    c.learning_rate = 0.05;
    c.seed = 9;
    const auto pairs = separable_pairs(2, 60);
    const FeatureExtractor fx(128);
    const auto a = train_dpo(pairs, c, fx), b = train_dpo(pairs, c, fx);
    EXPECT_EQ(a.policy, b.policy);
    c.seed = 10;
    EXPECT_FALSE(train_dpo(pairs, c, fx).policy == a.policy);
}

TEST(Train, SeparableSetIsLearned) {
    DpoConfig c;
    c.learning_rate = 0.5;
    c.seed = 3;
    const auto pairs = separable_pairs(4, 200);
    const FeatureExtractor fx;
    const auto res = train_dpo(pairs, c, fx);
    ASSERT_EQ(res.trace.epochs.size(), 6u);
    EXPECT_NEAR(res.trace.epochs.front().loss, std::log(2.0), 1e-12);
    EXPECT_LT(res.trace.epochs.back().loss, 0.1);
    for (std::size_t e = 1; e < res.trace.epochs.size(); ++e)
        EXPECT_GE(res.trace.epochs[e].margin, res.trace.epochs[e - 1].margin);
    std::size_t correct = 0;
    for (const auto& p : pairs) correct += predict(res.policy, fx, p.prompt).label == p.preferred;
    EXPECT_GT(correct, 190u);
}

TEST(Train, ReferenceStaysFrozenWhenStartingFromWeights) {
    rng::Stream g(12);
    const auto init = random_policy(g, 32, 0.3);
    const auto fp = init.fingerprint();
    DpoConfig c;
    c.learning_rate = 0.05;
    const auto res = train_dpo(separable_pairs(7, 40), c, FeatureExtractor(32), init);
    EXPECT_EQ(init.fingerprint(), fp);
    EXPECT_FALSE(res.policy == init);
    EXPECT_NEAR(res.trace.epochs.front().loss, std::log(2.0), 1e-12);
}

TEST(Train, NonFiniteLossNamesTheStep) {
    DpoConfig c;
    c.learning_rate = 1e307;
    c.warmup_ratio = 0;
    c.weight_decay = 0;
    try {
        train_dpo(separable_pairs(1, 64), c, FeatureExtractor(16));
        FAIL() << "expected divergence";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("step"), std::string::npos) << e.what();
    }
}

TEST(TrainSft, LearnsSeparableLabels) {
    DpoConfig c;
    c.learning_rate = 0.1;
    const auto pairs = separable_pairs(5, 200);
    const auto samples = prefdata::as_labeled(pairs);
    const FeatureExtractor fx;
    const auto res = train_sft(samples, c, fx);
    EXPECT_NEAR(res.trace.epochs.front().loss, std::log(3.0), 1e-12);
    EXPECT_LT(res.trace.epochs.back().loss, res.trace.epochs.front().loss);
    std::size_t correct = 0;
    for (const auto& p : pairs) correct += predict(res.policy, fx, p.prompt).label == p.preferred;
    EXPECT_GT(correct, 190u);
}
