// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace lim {

/// SplitMix64 (Steele, Lea & Flood; reference constants from Vigna's
/// splitmix64.c). Portable across platforms, unlike the std distributions.
class SplitMix64 {
public:
    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t next() noexcept {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix(state_);
    }

    /// Stateless finalizer; also used to derive sub-seeds.
    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 24 bits of mantissa.
    constexpr float uniform01() noexcept {
        return static_cast<float>(next() >> 40) * (1.0f / 16777216.0f);
    }

    /// Uniform in [-1, 1).
    constexpr float uniform_signed() noexcept { return 2.0f * uniform01() - 1.0f; }

    /// Uniform integer in [0, bound) by multiply-shift. bound must be > 0.
    constexpr std::uint64_t below(std::uint64_t bound) noexcept {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * bound) >> 64);
    }

private:
    std::uint64_t state_;
};

/// Combine a base seed with a tag into an independent stream seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
    return SplitMix64::mix(seed ^ SplitMix64::mix(tag + 0x632BE59BD9B4E019ull));
}

} // namespace lim
