// include/findpo/manifest.hpp
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "findpo/core.hpp"

namespace findpo::manifest {

namespace fs = std::filesystem;

inline constexpr std::string_view kVersion = "findpo 0.1.0";
inline constexpr std::string_view kSuffix = ".manifest.json";
inline constexpr std::string_view kStaleMarker = "STALE";

inline std::string sha256_hex(std::string_view bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

inline std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot read '" + p.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string file_sha256(const fs::path& p) { return sha256_hex(read_bytes(p)); }

inline fs::path manifest_path(const fs::path& artifact) {
    return fs::path(artifact.string() + std::string(kSuffix));
}

/// Path of `target` as seen from `base_dir`; keeps manifests independent of
/// where the output tree lives.
inline std::string relative_to(const fs::path& target, const fs::path& base_dir) {
    const auto rel = fs::weakly_canonical(fs::absolute(target))
                         .lexically_relative(fs::weakly_canonical(fs::absolute(base_dir)));
    return rel.empty() ? target.generic_string() : rel.generic_string();
}

/// Writes `<artifact>.manifest.json` binding the artifact hash to its inputs,
/// seed and parameters.
inline void write_manifest(const fs::path& artifact, std::string_view stage, std::uint64_t seed,
                           const std::vector<fs::path>& inputs, const nlohmann::ordered_json& params = {}) {
    const fs::path dir = artifact.has_parent_path() ? artifact.parent_path() : fs::path(".");
    nlohmann::ordered_json j;
    j["artifact"] = artifact.filename().generic_string();
    j["sha256"] = file_sha256(artifact);
    j["stage"] = stage;
    j["version"] = kVersion;
    j["seed"] = seed;
    j["params"] = params.is_null() ? nlohmann::ordered_json::object() : params;
    j["inputs"] = nlohmann::ordered_json::array();
    for (const auto& in : inputs)
        j["inputs"].push_back({{"path", relative_to(in, dir)}, {"sha256", file_sha256(in)}});
    std::ofstream out(manifest_path(artifact), std::ios::trunc);
    if (!out) throw Error("cannot write manifest for '" + artifact.string() + "'");
    out << j.dump(2) << '\n';
}

inline nlohmann::json read_manifest(const fs::path& artifact) {
    std::ifstream in(manifest_path(artifact));
    if (!in) return nullptr;
    return nlohmann::json::parse(in);
}

struct VerifyIssue {
    std::string manifest;
    std::string problem;
};

/// Re-hashes every artifact and input named by the manifests under `dir`.
inline std::vector<VerifyIssue> verify_directory(const fs::path& dir) {
    std::vector<VerifyIssue> issues;
    if (fs::exists(dir / kStaleMarker))
        issues.push_back({std::string(kStaleMarker), "output directory is flagged stale: " +
                                                         read_bytes(dir / kStaleMarker)});
    std::vector<fs::path> manifests;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (name.size() > kSuffix.size() && name.ends_with(kSuffix)) manifests.push_back(e.path());
    }
    std::sort(manifests.begin(), manifests.end());
    if (manifests.empty()) issues.push_back({dir.string(), "no manifests found"});
    for (const auto& m : manifests) {
        const std::string mname = m.filename().string();
        try {
            std::ifstream in(m);
            const auto j = nlohmann::json::parse(in);
            const fs::path artifact = dir / j.at("artifact").get<std::string>();
            if (!fs::exists(artifact))
                issues.push_back({mname, "artifact missing"});
            else if (file_sha256(artifact) != j.at("sha256").get<std::string>())
                issues.push_back({mname, "artifact hash mismatch"});
            for (const auto& inp : j.at("inputs")) {
                const fs::path p = dir / inp.at("path").get<std::string>();
                if (!fs::exists(p))
                    issues.push_back({mname, "input missing: " + inp.at("path").get<std::string>()});
                else if (file_sha256(p) != inp.at("sha256").get<std::string>())
                    issues.push_back({mname, "input changed: " + inp.at("path").get<std::string>()});
            }
        } catch (const std::exception& e) {
            issues.push_back({mname, std::string("unreadable manifest: ") + e.what()});
        }
    }
    return issues;
}

}  // namespace findpo::manifest
