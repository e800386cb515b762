// include/findpo/dpo.hpp
#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "findpo/core.hpp"
#include "findpo/policy.hpp"
#include "findpo/prefdata.hpp"
#include "findpo/random.hpp"

namespace findpo::dpo {

using prefdata::LabeledSample;
using prefdata::PreferencePair;

/// Dense gradient laid out exactly like LogLinearPolicy::weights() (3 x D, row-major).
using Gradient = std::vector<double>;

struct DpoConfig {
    double beta = 0.1;
    double learning_rate = 1e-3;
    int epochs = 5;
    std::size_t batch_size = 16;
    double weight_decay = 0.01;
    double warmup_ratio = 0.1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(beta > 0.0)) throw Error("beta must be positive");
        if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
        if (epochs < 0) throw Error("epochs must be non-negative");
        if (batch_size == 0) throw Error("batch size must be positive");
        if (!(weight_decay >= 0.0)) throw Error("weight decay must be non-negative");
        if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw Error("warmup ratio must lie in [0,1)");
        if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
            throw Error("Adam moment decays must lie in [0,1)");
        if (!(adam_epsilon > 0.0)) throw Error("Adam epsilon must be positive");
    }
};

struct TraceStep {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double learning_rate = 0.0;
    double loss = 0.0;        // batch mean, before the update
    double margin = 0.0;      // batch mean of beta * (delta_w - delta_l); DPO only
    double grad_norm = 0.0;
};

/// Full-training-set statistics; entry 0 is the untrained policy.
struct EpochSummary {
    std::size_t epoch = 0;
    double loss = 0.0;
    double margin = 0.0;
};

struct TrainTrace {
    std::vector<TraceStep> steps;
    std::vector<EpochSummary> epochs;
};

struct TrainResult {
    LogLinearPolicy policy;
    TrainTrace trace;
};

// ---------------------------------------------------------------------------
// Log-probabilities and prediction
// ---------------------------------------------------------------------------

inline double policy_logprob(const LogLinearPolicy& policy, const SparseFeatures& phi, Label label) {
    if (!policy.all_finite()) throw Error("policy holds non-finite weights");
    return log_softmax(policy.logits(phi))[index_of(label)];
}

inline double policy_logprob(const LogLinearPolicy& policy, const FeatureExtractor& fx,
                             std::string_view prompt, Label label) {
    return policy_logprob(policy, fx.extract(prompt), label);
}

struct Prediction {
    Label label = Label::positive;
    Logits logits{};
};

/// Argmax; ties resolve to the earlier label (positive < negative < neutral).
inline Label argmax_label(const Logits& z) noexcept {
    std::size_t best = 0;
    for (std::size_t k = 1; k < kNumLabels; ++k)
        if (z[k] > z[best]) best = k;
    return kLabels[best];
}

inline Prediction predict(const LogLinearPolicy& policy, const SparseFeatures& phi) {
    const Logits z = policy.logits(phi);
    return {argmax_label(z), z};
}

inline Prediction predict(const LogLinearPolicy& policy, const FeatureExtractor& fx,
                          std::string_view prompt) {
    return predict(policy, fx.extract(prompt));
}

// ---------------------------------------------------------------------------
// DPO objective
// ---------------------------------------------------------------------------

struct EncodedPair {
    SparseFeatures phi;
    Label preferred;
    Label dispreferred;
};

inline std::vector<EncodedPair> encode(std::span<const PreferencePair> pairs, const FeatureExtractor& fx) {
    std::vector<EncodedPair> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back({fx.extract(p.prompt), p.preferred, p.dispreferred});
    return out;
}

namespace detail {

struct PairTerms {
    double z;                 // beta * (delta_w - delta_l)
    Logits policy_probs;
};

inline PairTerms pair_terms(const LogLinearPolicy& policy, const LogLinearPolicy& reference,
                            const EncodedPair& p, double beta) {
    const Logits lp = log_softmax(policy.logits(p.phi));
    const Logits lr = log_softmax(reference.logits(p.phi));
    const std::size_t w = index_of(p.preferred), l = index_of(p.dispreferred);
    const double z = beta * ((lp[w] - lr[w]) - (lp[l] - lr[l]));
    Logits probs{};
    for (std::size_t k = 0; k < kNumLabels; ++k) probs[k] = std::exp(lp[k]);
    return {z, probs};
}

inline void check_inputs(const LogLinearPolicy& policy, const LogLinearPolicy& reference,
                         std::size_t batch, double beta) {
    if (batch == 0) throw Error("DPO batch is empty");
    if (!(beta > 0.0)) throw Error("beta must be positive");
    if (policy.dimension() != reference.dimension())
        throw Error("policy and reference dimensions differ");
    if (!policy.all_finite() || !reference.all_finite())
        throw Error("policy or reference holds non-finite weights");
}

}  // namespace detail

/// Mean over the batch of -ln sigmoid(z) = softplus(-z).
inline double dpo_loss(const LogLinearPolicy& policy, const LogLinearPolicy& reference,
                       std::span<const EncodedPair> batch, double beta) {
    detail::check_inputs(policy, reference, batch.size(), beta);
    double sum = 0.0;
    for (const auto& p : batch) sum += softplus(-detail::pair_terms(policy, reference, p, beta).z);
    return sum / static_cast<double>(batch.size());
}

inline double dpo_loss(const LogLinearPolicy& policy, const LogLinearPolicy& reference,
                       std::span<const PreferencePair> batch, double beta, const FeatureExtractor& fx) {
    const auto enc = encode(batch, fx);
    return dpo_loss(policy, reference, enc, beta);
}

/// Mean implicit-reward margin beta * (delta_w - delta_l) over the batch.
inline double mean_margin(const LogLinearPolicy& policy, const LogLinearPolicy& reference,
                          std::span<const EncodedPair> batch, double beta) {
    detail::check_inputs(policy, reference, batch.size(), beta);
    double sum = 0.0;
    for (const auto& p : batch) sum += detail::pair_terms(policy, reference, p, beta).z;
    return sum / static_cast<double>(batch.size());
}

/// Analytic gradient of dpo_loss with respect to the policy weights:
/// per pair -beta * sigmoid(-z) * [grad log pi(y_w) - grad log pi(y_l)],
/// where grad log pi(y) = (onehot(y) - softmax) (x) phi.
inline Gradient dpo_grad(const LogLinearPolicy& policy, const LogLinearPolicy& reference,
                         std::span<const EncodedPair> batch, double beta) {
    detail::check_inputs(policy, reference, batch.size(), beta);
    const std::size_t dim = policy.dimension();
    Gradient g(kNumLabels * dim, 0.0);
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (const auto& p : batch) {
        const auto t = detail::pair_terms(policy, reference, p, beta);
        const double scale = -beta * sigmoid(-t.z) * inv_n;
        const std::size_t w = index_of(p.preferred), l = index_of(p.dispreferred);
        for (std::size_t k = 0; k < kNumLabels; ++k) {
            const double dw = (k == w ? 1.0 : 0.0) - t.policy_probs[k];
            const double dl = (k == l ? 1.0 : 0.0) - t.policy_probs[k];
            const double coef = scale * (dw - dl);
            if (coef == 0.0) continue;
            double* row = g.data() + k * dim;
            for (const auto& [j, x] : p.phi) row[j] += coef * x;
        }
    }
    return g;
}

inline Gradient dpo_grad(const LogLinearPolicy& policy, const LogLinearPolicy& reference,
                         std::span<const PreferencePair> batch, double beta, const FeatureExtractor& fx) {
    const auto enc = encode(batch, fx);
    return dpo_grad(policy, reference, enc, beta);
}

// ---------------------------------------------------------------------------
// Supervised cross-entropy baseline
// ---------------------------------------------------------------------------

struct EncodedSample {
    SparseFeatures phi;
    Label truth;
};

inline std::vector<EncodedSample> encode(std::span<const LabeledSample> samples, const FeatureExtractor& fx) {
    std::vector<EncodedSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back({fx.extract(s.raw_text), s.truth});
    return out;
}

inline double sft_loss(const LogLinearPolicy& policy, std::span<const EncodedSample> batch) {
    if (batch.empty()) throw Error("SFT batch is empty");
    if (!policy.all_finite()) throw Error("policy holds non-finite weights");
    double sum = 0.0;
    for (const auto& s : batch) sum -= log_softmax(policy.logits(s.phi))[index_of(s.truth)];
    return sum / static_cast<double>(batch.size());
}

/// Mean negative log-likelihood of the true label. The sample text is fed to
/// the extractor as-is, so callers pass already-formatted prompts.
inline double sft_loss(const LogLinearPolicy& policy, std::span<const LabeledSample> samples,
                       const FeatureExtractor& fx) {
    const auto enc = encode(samples, fx);
    return sft_loss(policy, enc);
}

inline Gradient sft_grad(const LogLinearPolicy& policy, std::span<const EncodedSample> batch) {
    if (batch.empty()) throw Error("SFT batch is empty");
    const std::size_t dim = policy.dimension();
    Gradient g(kNumLabels * dim, 0.0);
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (const auto& s : batch) {
        const Logits probs = softmax(policy.logits(s.phi));
        for (std::size_t k = 0; k < kNumLabels; ++k) {
            const double coef = (probs[k] - (k == index_of(s.truth) ? 1.0 : 0.0)) * inv_n;
            double* row = g.data() + k * dim;
            for (const auto& [j, x] : s.phi) row[j] += coef * x;
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// Adam with decoupled weight decay.
class AdamW {
public:
    AdamW(std::size_t size, const DpoConfig& cfg) : cfg_(cfg), m_(size, 0.0), v_(size, 0.0) {}

    void step(std::span<double> weights, std::span<const double> grad, double lr) {
        ++t_;
        const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        for (std::size_t i = 0; i < weights.size(); ++i) {
            m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
            v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
            const double mhat = m_[i] / c1;
            const double vhat = v_[i] / c2;
            weights[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.adam_epsilon) + cfg_.weight_decay * weights[i]);
        }
    }

private:
    DpoConfig cfg_;
    std::vector<double> m_, v_;
    std::size_t t_ = 0;
};

/// Linear warm-up over the first ceil(warmup_ratio * total) steps, constant afterwards.
inline double scheduled_lr(const DpoConfig& cfg, std::size_t step, std::size_t total_steps) {
    const auto warmup = static_cast<std::size_t>(std::ceil(cfg.warmup_ratio * static_cast<double>(total_steps)));
    if (warmup == 0 || step >= warmup) return cfg.learning_rate;
    return cfg.learning_rate * static_cast<double>(step + 1) / static_cast<double>(warmup);
}

namespace detail {

inline double l2_norm(std::span<const double> g) {
    double s = 0.0;
    for (double v : g) s += v * v;
    return std::sqrt(s);
}

inline std::size_t steps_per_epoch(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

/// Shared minibatch loop. `batch_fn(indices) -> {loss, margin, grad}`.
template <typename Item, typename BatchFn, typename SummaryFn>
TrainResult run_loop(std::span<const Item> items, const DpoConfig& cfg, LogLinearPolicy policy,
                     BatchFn&& batch_fn, SummaryFn&& summary_fn) {
    TrainResult res{std::move(policy), {}};
    res.trace.epochs.push_back(summary_fn(res.policy, 0));
    if (cfg.epochs == 0) return res;

    const std::size_t per_epoch = steps_per_epoch(items.size(), cfg.batch_size);
    const std::size_t total = per_epoch * static_cast<std::size_t>(cfg.epochs);
    AdamW opt(res.policy.weights().size(), cfg);
    std::vector<std::size_t> order(items.size());
    std::size_t step = 0;
    std::vector<Item> batch;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng::Stream(rng::derive(cfg.seed, static_cast<std::uint64_t>(epoch))).shuffle(order);
        for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
            batch.clear();
            const std::size_t lo = b * cfg.batch_size;
            const std::size_t hi = std::min(lo + cfg.batch_size, items.size());
            for (std::size_t i = lo; i < hi; ++i) batch.push_back(items[order[i]]);
            auto [loss, margin, grad] = batch_fn(res.policy, std::span<const Item>(batch));
            const double gnorm = l2_norm(grad);
            if (!std::isfinite(loss) || !std::isfinite(gnorm))
                throw Error("non-finite loss at optimizer step " + std::to_string(step));
            const double lr = scheduled_lr(cfg, step, total);
            res.trace.steps.push_back({step, static_cast<std::size_t>(epoch), lr, loss, margin, gnorm});
            opt.step(res.policy.weights(), grad, lr);
        }
        res.trace.epochs.push_back(summary_fn(res.policy, static_cast<std::size_t>(epoch)));
    }
    return res;
}

struct BatchEval {
    double loss;
    double margin;
    Gradient grad;
};

}  // namespace detail

/// DPO training. The reference is a frozen copy of `initial` (zero weights,
/// i.e. the uniform policy, unless the caller supplies pre-trained weights).
inline TrainResult train_dpo(std::span<const PreferencePair> pairs, const DpoConfig& cfg,
                             const FeatureExtractor& fx,
                             std::optional<LogLinearPolicy> initial = std::nullopt) {
    cfg.validate();
    if (pairs.empty()) throw Error("no preference pairs to train on");
    const LogLinearPolicy reference = initial ? *initial : LogLinearPolicy(fx.dimension());
    if (reference.dimension() != fx.dimension()) throw Error("initial policy dimension mismatch");
    const auto data = encode(pairs, fx);
    return detail::run_loop<EncodedPair>(
        data, cfg, reference,
        [&](const LogLinearPolicy& p, std::span<const EncodedPair> batch) {
            return detail::BatchEval{dpo_loss(p, reference, batch, cfg.beta),
                                     mean_margin(p, reference, batch, cfg.beta),
                                     dpo_grad(p, reference, batch, cfg.beta)};
        },
        [&](const LogLinearPolicy& p, std::size_t epoch) {
            return EpochSummary{epoch, dpo_loss(p, reference, data, cfg.beta),
                                mean_margin(p, reference, data, cfg.beta)};
        });
}

/// Cross-entropy baseline over the same optimizer, schedule and shuffle pathway.
inline TrainResult train_sft(std::span<const LabeledSample> samples, const DpoConfig& cfg,
                             const FeatureExtractor& fx,
                             std::optional<LogLinearPolicy> initial = std::nullopt) {
    cfg.validate();
    if (samples.empty()) throw Error("no samples to train on");
    LogLinearPolicy start = initial ? *initial : LogLinearPolicy(fx.dimension());
    if (start.dimension() != fx.dimension()) throw Error("initial policy dimension mismatch");
    const auto data = encode(samples, fx);
    return detail::run_loop<EncodedSample>(
        data, cfg, std::move(start),
        [&](const LogLinearPolicy& p, std::span<const EncodedSample> batch) {
            return detail::BatchEval{sft_loss(p, batch), 0.0, sft_grad(p, batch)};
        },
        [&](const LogLinearPolicy& p, std::size_t epoch) {
            return EpochSummary{epoch, sft_loss(p, data), 0.0};
        });
}

}  // namespace findpo::dpo
