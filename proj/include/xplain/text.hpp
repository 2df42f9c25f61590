#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace xplain::text {

// ASCII lowercase; bytes >= 0x80 pass through untouched.
std::string to_lower(std::string_view s);

// Lowercase, map '_' to ' ', collapse runs of whitespace, trim.
std::string normalize_label(std::string_view label);

// Lowercased word tokens. A token is a maximal run of ASCII alphanumerics,
// apostrophes inside words, or non-ASCII bytes.
std::vector<std::string> tokenize(std::string_view s);

// Number of maximal whitespace-delimited runs.
std::size_t word_count(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::string trim(std::string_view s);

std::vector<std::string> split(std::string_view s, char delim);

// 64-bit FNV-1a.
constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t basis = kFnvOffset) {
    std::uint64_t h = basis;
    for (unsigned char c : s) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Maps a 64-bit value onto [-1, 1) using its top 53 bits.
constexpr double unit_symmetric(std::uint64_t x) {
    return static_cast<double>(x >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

std::string hex64(std::uint64_t v);

}  // namespace xplain::text
