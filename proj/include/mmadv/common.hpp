#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace mmadv {

/// Malformed or inconsistent input data (files, configs, shapes).
struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A numerical procedure failed: divergence, degenerate draw, solver breakdown.
struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Sub-seed derived from a parent seed and an index path. Order of the
/// indices matters; the result depends on nothing else.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t h = mix64(seed);
    for (auto v : path) h = mix64(h ^ mix64(v + 0x632be59bd9b4e019ULL));
    return h;
}

/// Labeled sub-seed, e.g. derive_seed(root, "dataset").
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return derive_seed(seed, {h});
}

inline std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

/// Shortest decimal text that parses back to exactly `v`.
inline std::string fmt_exact(double v) {
    std::array<char, 32> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc{}) throw data_error("number formatting failed");
    return std::string(buf.data(), end);
}

/// `digits` significant digits, general format.
inline std::string fmt_sig(double v, int digits) {
    std::array<char, 48> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, digits);
    if (ec != std::errc{}) throw data_error("number formatting failed");
    return std::string(buf.data(), end);
}

inline double parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw data_error("not a number: '" + std::string(s) + "'");
    return v;
}

inline long long parse_int(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw data_error("not an integer: '" + std::string(s) + "'");
    return v;
}

}  // namespace mmadv
