#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace leakaudit {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Named seed derivation: subcommand -> module -> round. Re-running a part of an
/// experiment with the same parent seed reproduces its sub-seeds exactly.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view name,
                                 std::uint64_t index = 0) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(splitmix64(parent ^ h) + index);
}

inline Rng make_rng(std::uint64_t seed) { return Rng{seed}; }

/// `k` distinct picks from `items`, order randomized.
template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> items, std::size_t k, Rng& rng) {
    std::shuffle(items.begin(), items.end(), rng);
    items.resize(std::min(k, items.size()));
    return items;
}

}  // namespace leakaudit
