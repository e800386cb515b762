// include/findpo/policy.hpp
#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "findpo/core.hpp"
#include "findpo/random.hpp"

namespace findpo {

/// Sparse non-negative count vector, sorted by bucket, no duplicate buckets.
using SparseFeatures = std::vector<std::pair<std::uint32_t, double>>;

/// Hashed bag-of-words: lowercased alphanumeric tokens, FNV-1a into D buckets.
class FeatureExtractor {
public:
    static constexpr std::size_t kDefaultDimension = 4096;

    explicit FeatureExtractor(std::size_t dimension = kDefaultDimension) : dim_(dimension) {
        if (dim_ == 0) throw Error("feature dimension must be positive");
    }

    std::size_t dimension() const noexcept { return dim_; }

    static std::vector<std::string> tokenize(std::string_view text) {
        std::vector<std::string> tokens;
        std::string cur;
        for (char ch : text) {
            const auto c = static_cast<unsigned char>(ch);
            if (std::isalnum(c)) {
                cur.push_back(static_cast<char>(std::tolower(c)));
            } else if (!cur.empty()) {
                tokens.push_back(std::move(cur));
                cur.clear();
            }
        }
        if (!cur.empty()) tokens.push_back(std::move(cur));
        return tokens;
    }

    std::uint32_t bucket(std::string_view token) const noexcept {
        return static_cast<std::uint32_t>(rng::fnv1a64(token) % dim_);
    }

    SparseFeatures extract(std::string_view text) const {
        std::vector<std::uint32_t> buckets;
        for (const auto& tok : tokenize(text)) buckets.push_back(bucket(tok));
        std::sort(buckets.begin(), buckets.end());
        SparseFeatures out;
        for (std::uint32_t b : buckets) {
            if (!out.empty() && out.back().first == b)
                out.back().second += 1.0;
            else
                out.emplace_back(b, 1.0);
        }
        return out;
    }

private:
    std::size_t dim_;
};

/// Linear map from features to the three label logits; rows follow label order.
class LogLinearPolicy {
public:
    LogLinearPolicy() : LogLinearPolicy(FeatureExtractor::kDefaultDimension) {}
    explicit LogLinearPolicy(std::size_t dimension)
        : dim_(dimension), weights_(kNumLabels * dimension, 0.0) {
        if (dim_ == 0) throw Error("policy dimension must be positive");
    }

    std::size_t dimension() const noexcept { return dim_; }
    std::span<double> weights() noexcept { return weights_; }
    std::span<const double> weights() const noexcept { return weights_; }
    double& at(std::size_t label, std::size_t j) { return weights_[label * dim_ + j]; }
    double at(std::size_t label, std::size_t j) const { return weights_[label * dim_ + j]; }

    bool all_finite() const noexcept {
        return std::all_of(weights_.begin(), weights_.end(), [](double w) { return std::isfinite(w); });
    }

    Logits logits(const SparseFeatures& phi) const {
        Logits z{};
        for (std::size_t k = 0; k < kNumLabels; ++k) {
            const double* row = weights_.data() + k * dim_;
            double s = 0.0;
            for (const auto& [j, x] : phi) {
                if (j >= dim_) throw Error("feature bucket outside policy dimension");
                s += row[j] * x;
            }
            z[k] = s;
        }
        return z;
    }

    /// 64-bit digest of the weight bytes; used to check that a frozen copy stays frozen.
    std::uint64_t fingerprint() const noexcept {
        std::uint64_t h = rng::splitmix64(dim_);
        for (double w : weights_) h = rng::splitmix64(h ^ std::bit_cast<std::uint64_t>(w));
        return h;
    }

    bool operator==(const LogLinearPolicy& o) const noexcept {
        return dim_ == o.dim_ &&
               std::equal(weights_.begin(), weights_.end(), o.weights_.begin(), o.weights_.end(),
                          [](double a, double b) {
                              return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
                          });
    }

private:
    std::size_t dim_;
    std::vector<double> weights_;
};

// ---------------------------------------------------------------------------
// policy.bin: magic "FDPOLICY", u32 version, u32 label count, per label a u8
// length and its name, u64 D, then 3*D float64 row-major. All little-endian.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void put_le(std::ostream& out, T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    U u = std::bit_cast<U>(v);
    unsigned char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), sizeof buf);
}

template <typename T>
T get_le(std::istream& in) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    unsigned char buf[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof buf)) throw Error("truncated policy file");
    U u = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<U>(static_cast<U>(buf[i]) << (8 * i));
    return std::bit_cast<T>(u);
}

}  // namespace detail

inline constexpr char kPolicyMagic[8] = {'F', 'D', 'P', 'O', 'L', 'I', 'C', 'Y'};
inline constexpr std::uint32_t kPolicyVersion = 1;

inline void write_policy(std::ostream& out, const LogLinearPolicy& p) {
    out.write(kPolicyMagic, sizeof kPolicyMagic);
    detail::put_le<std::uint32_t>(out, kPolicyVersion);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(kNumLabels));
    for (Label l : kLabels) {
        const auto name = to_string(l);
        detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
    }
    detail::put_le<std::uint64_t>(out, p.dimension());
    for (double w : p.weights()) detail::put_le<double>(out, w);
}

inline LogLinearPolicy read_policy(std::istream& in) {
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kPolicyMagic, sizeof magic) != 0)
        throw Error("not a policy file (bad magic)");
    if (detail::get_le<std::uint32_t>(in) != kPolicyVersion) throw Error("unsupported policy version");
    if (detail::get_le<std::uint32_t>(in) != kNumLabels) throw Error("policy label count mismatch");
    for (Label l : kLabels) {
        const auto len = detail::get_le<std::uint8_t>(in);
        std::string name(len, '\0');
        if (!in.read(name.data(), len)) throw Error("truncated policy file");
        if (name != to_string(l)) throw Error("policy label order mismatch: '" + name + "'");
    }
    const auto dim = detail::get_le<std::uint64_t>(in);
    if (dim == 0 || dim > (std::uint64_t{1} << 28)) throw Error("implausible policy dimension");
    LogLinearPolicy p(static_cast<std::size_t>(dim));
    for (double& w : p.weights()) w = detail::get_le<double>(in);
    if (!p.all_finite()) throw Error("policy file holds non-finite weights");
    return p;
}

inline void save_policy(const std::string& path, const LogLinearPolicy& p) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write policy file '" + path + "'");
    write_policy(out, p);
}

inline LogLinearPolicy load_policy(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open policy file '" + path + "'");
    return read_policy(in);
}

}  // namespace findpo
