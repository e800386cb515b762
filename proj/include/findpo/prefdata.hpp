// include/findpo/prefdata.hpp
#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "findpo/core.hpp"
#include "findpo/random.hpp"

namespace findpo::prefdata {

inline constexpr std::string_view kDefaultTemplate =
    "Classify the sentiment of this financial text as positive, negative, or neutral. {text}";
inline constexpr std::string_view kTextPlaceholder = "{text}";

enum class Source : std::uint8_t { FPB, TFNS, NWGI, OTHER };

inline std::string_view to_string(Source s) noexcept {
    switch (s) {
        case Source::FPB: return "FPB";
        case Source::TFNS: return "TFNS";
        case Source::NWGI: return "NWGI";
        case Source::OTHER: return "OTHER";
    }
    return "OTHER";
}

inline Source parse_source(std::string_view s) {
    for (Source v : {Source::FPB, Source::TFNS, Source::NWGI, Source::OTHER})
        if (to_string(v) == s) return v;
    throw Error("unknown dataset source '" + std::string(s) + "'");
}

struct LabeledSample {
    std::string raw_text;
    Label truth = Label::neutral;
    Source source = Source::OTHER;
};

struct PreferencePair {
    std::string prompt;
    Label preferred = Label::positive;
    Label dispreferred = Label::negative;

    bool operator==(const PreferencePair&) const = default;
};

/// Five-level sentiment labels (e.g. the GPT-labelled news set).
enum class FiveLevel : std::uint8_t {
    strongly_negative,
    mildly_negative,
    neutral,
    mildly_positive,
    strongly_positive
};

inline FiveLevel parse_five_level(std::string_view s) {
    // Accept both snake_case and the space-separated spelling used by the raw dataset.
    std::string norm(s);
    for (char& c : norm) c = (c == ' ' || c == '-') ? '_' : static_cast<char>(std::tolower(c));
    if (norm == "strongly_negative") return FiveLevel::strongly_negative;
    if (norm == "mildly_negative") return FiveLevel::mildly_negative;
    if (norm == "neutral") return FiveLevel::neutral;
    if (norm == "mildly_positive") return FiveLevel::mildly_positive;
    if (norm == "strongly_positive") return FiveLevel::strongly_positive;
    throw Error("unknown five-level label '" + std::string(s) + "'");
}

inline Label collapse_five_to_three(FiveLevel raw) {
    switch (raw) {
        case FiveLevel::strongly_negative:
        case FiveLevel::mildly_negative: return Label::negative;
        case FiveLevel::neutral: return Label::neutral;
        case FiveLevel::mildly_positive:
        case FiveLevel::strongly_positive: return Label::positive;
    }
    throw Error("unknown five-level label");
}

inline Label collapse_five_to_three(std::string_view raw) {
    return collapse_five_to_three(parse_five_level(raw));
}

/// Substitutes every `{text}` occurrence in `templ` with the sample's raw text.
inline std::string format_prompt(const LabeledSample& sample, std::string_view templ) {
    if (templ.find(kTextPlaceholder) == std::string_view::npos)
        throw Error("prompt template lacks the {text} placeholder");
    std::string out;
    std::size_t pos = 0;
    for (;;) {
        const std::size_t hit = templ.find(kTextPlaceholder, pos);
        if (hit == std::string_view::npos) break;
        out.append(templ.substr(pos, hit - pos));
        out.append(sample.raw_text);
        pos = hit + kTextPlaceholder.size();
    }
    out.append(templ.substr(pos));
    return out;
}

/// Preferred := ground truth. Dispreferred := the reference model's prediction
/// when it is wrong, otherwise a uniform draw over the two incorrect labels.
/// The draw for sample i depends only on (seed, i).
inline std::vector<PreferencePair> build_preference_pairs(std::span<const LabeledSample> samples,
                                                          std::span<const Label> ref_predictions,
                                                          std::uint64_t seed,
                                                          std::string_view templ = kDefaultTemplate) {
    if (samples.size() != ref_predictions.size())
        throw Error("samples (" + std::to_string(samples.size()) + ") and reference predictions (" +
                    std::to_string(ref_predictions.size()) + ") differ in length");
    std::vector<PreferencePair> pairs;
    pairs.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Label truth = samples[i].truth;
        Label loser = ref_predictions[i];
        if (loser == truth) {
            const std::uint64_t bit = rng::derive(seed, i) >> 63;
            const std::size_t t = index_of(truth);
            loser = label_at((t + 1 + bit) % kNumLabels);
        }
        pairs.push_back({format_prompt(samples[i], templ), truth, loser});
    }
    return pairs;
}

template <typename T>
struct Split {
    std::vector<T> train;
    std::vector<T> test;
};

/// Seeded shuffle, then the first floor(train_fraction * n) items train.
template <typename T>
Split<T> split_train_test(std::vector<T> items, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw Error("train fraction must lie strictly between 0 and 1");
    rng::Stream stream(seed);
    stream.shuffle(items);
    const auto n_train = static_cast<std::size_t>(
        std::floor(train_fraction * static_cast<double>(items.size()) + 1e-9));
    Split<T> out;
    out.train.assign(std::make_move_iterator(items.begin()),
                     std::make_move_iterator(items.begin() + static_cast<std::ptrdiff_t>(n_train)));
    out.test.assign(std::make_move_iterator(items.begin() + static_cast<std::ptrdiff_t>(n_train)),
                    std::make_move_iterator(items.end()));
    return out;
}

// ---------------------------------------------------------------------------
// JSONL I/O
// ---------------------------------------------------------------------------

inline void write_pairs(std::ostream& out, std::span<const PreferencePair> pairs) {
    for (const auto& p : pairs) {
        nlohmann::ordered_json j;
        j["prompt"] = p.prompt;
        j["preferred"] = std::string(to_string(p.preferred));
        j["dispreferred"] = std::string(to_string(p.dispreferred));
        out << j.dump() << '\n';
    }
}

inline std::vector<PreferencePair> read_pairs(std::istream& in) {
    std::vector<PreferencePair> pairs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            PreferencePair p{j.at("prompt").get<std::string>(),
                             parse_label(j.at("preferred").get<std::string>()),
                             parse_label(j.at("dispreferred").get<std::string>())};
            if (p.preferred == p.dispreferred) throw Error("preferred equals dispreferred");
            pairs.push_back(std::move(p));
        } catch (const std::exception& e) {
            throw Error("pairs line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return pairs;
}

inline std::vector<PreferencePair> read_pairs_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open pairs file '" + path + "'");
    return read_pairs(in);
}

/// Samples JSONL: `text`, `source` (optional), and either `label` (3-class)
/// or `label5` (five-level, collapsed on read).
inline std::vector<LabeledSample> read_samples(std::istream& in) {
    std::vector<LabeledSample> samples;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            LabeledSample s;
            s.raw_text = j.at("text").get<std::string>();
            if (j.contains("label5"))
                s.truth = collapse_five_to_three(j.at("label5").get<std::string>());
            else
                s.truth = parse_label(j.at("label").get<std::string>());
            if (j.contains("source")) s.source = parse_source(j.at("source").get<std::string>());
            samples.push_back(std::move(s));
        } catch (const std::exception& e) {
            throw Error("samples line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return samples;
}

inline std::vector<LabeledSample> read_samples_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open samples file '" + path + "'");
    return read_samples(in);
}

inline void write_samples(std::ostream& out, std::span<const LabeledSample> samples) {
    for (const auto& s : samples) {
        nlohmann::ordered_json j;
        j["text"] = s.raw_text;
        j["label"] = std::string(to_string(s.truth));
        j["source"] = std::string(to_string(s.source));
        out << j.dump() << '\n';
    }
}

/// One label name per line.
inline std::vector<Label> read_labels(std::istream& in) {
    std::vector<Label> labels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (line.empty()) continue;
        auto l = try_parse_label(line);
        if (!l) throw Error("predictions line " + std::to_string(lineno) + ": unknown label '" + line + "'");
        labels.push_back(*l);
    }
    return labels;
}

inline std::vector<Label> read_labels_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open predictions file '" + path + "'");
    return read_labels(in);
}

/// The labeled view of a pair set: prompt with its preferred (ground-truth) label.
inline std::vector<LabeledSample> as_labeled(std::span<const PreferencePair> pairs) {
    std::vector<LabeledSample> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back({p.prompt, p.preferred, Source::OTHER});
    return out;
}

}  // namespace findpo::prefdata
