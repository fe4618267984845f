#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ptcflow {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives a child seed from a root seed and a path of indices, e.g. (seed, stage, block, step).
/// Every random stream in the library comes from here, so results never depend on scheduling.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t s = mix64(root);
    for (std::uint64_t p : path) {
        s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
    }
    return s;
}

/// Stage tags used as the first element of derive_seed paths.
enum class SeedStage : std::uint64_t {
    chip = 1,
    calibrate = 2,
    map = 3,
    train = 4,
    init = 5,
    data = 6,
    pretrain = 7,
};

constexpr std::uint64_t tag(SeedStage s) noexcept { return static_cast<std::uint64_t>(s); }

}  // namespace ptcflow
