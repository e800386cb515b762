// include/findpo/core.hpp
#pragma once

#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace findpo {

/// Base exception for every hard error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Label vocabulary. Every logit / probability array in the project uses this
// order: [positive, negative, neutral].
// ---------------------------------------------------------------------------

enum class Label : std::uint8_t { positive = 0, negative = 1, neutral = 2 };

inline constexpr std::size_t kNumLabels = 3;
inline constexpr std::array<Label, kNumLabels> kLabels = {Label::positive, Label::negative,
                                                          Label::neutral};

using Logits = std::array<double, kNumLabels>;

constexpr std::size_t index_of(Label l) noexcept { return static_cast<std::size_t>(l); }

inline Label label_at(std::size_t i) {
    if (i >= kNumLabels) throw Error("label index out of range: " + std::to_string(i));
    return kLabels[i];
}

constexpr std::string_view to_string(Label l) noexcept {
    switch (l) {
        case Label::positive: return "positive";
        case Label::negative: return "negative";
        case Label::neutral: return "neutral";
    }
    return "?";
}

inline std::optional<Label> try_parse_label(std::string_view s) noexcept {
    for (Label l : kLabels)
        if (to_string(l) == s) return l;
    return std::nullopt;
}

inline Label parse_label(std::string_view s) {
    if (auto l = try_parse_label(s)) return *l;
    throw Error("unknown sentiment label '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Calendar dates (ISO-8601, YYYY-MM-DD)
// ---------------------------------------------------------------------------

using Date = std::chrono::year_month_day;

inline std::optional<Date> try_parse_date(std::string_view s) noexcept {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    auto num = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
        int v = 0;
        auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, v);
        if (ec != std::errc{} || p != s.data() + pos + len) return std::nullopt;
        return v;
    };
    auto y = num(0, 4), m = num(5, 2), d = num(8, 2);
    if (!y || !m || !d) return std::nullopt;
    Date date{std::chrono::year{*y}, std::chrono::month{static_cast<unsigned>(*m)},
              std::chrono::day{static_cast<unsigned>(*d)}};
    if (!date.ok()) return std::nullopt;
    return date;
}

inline Date parse_date(std::string_view s) {
    if (auto d = try_parse_date(s)) return *d;
    throw Error("invalid ISO-8601 date '" + std::string(s) + "'");
}

inline std::string to_string(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                  static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
    return buf;
}

// ---------------------------------------------------------------------------
// Numbers
// ---------------------------------------------------------------------------

/// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

inline std::optional<double> try_parse_double(std::string_view s) noexcept {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

// Numerically stable pieces shared by the dpo and scoring modules.

/// ln(1 + e^x) without overflow.
inline double softplus(double x) noexcept {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double log_sum_exp(const Logits& z) noexcept {
    double m = z[0];
    for (double v : z) m = v > m ? v : m;
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    return m + std::log(s);
}

inline Logits log_softmax(const Logits& z) noexcept {
    const double lse = log_sum_exp(z);
    Logits out{};
    for (std::size_t k = 0; k < kNumLabels; ++k) out[k] = z[k] - lse;
    return out;
}

inline Logits softmax(const Logits& z) noexcept {
    Logits out = log_softmax(z);
    for (double& v : out) v = std::exp(v);
    return out;
}

}  // namespace findpo
