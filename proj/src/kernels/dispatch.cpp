// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#include "lim/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "kernels_internal.hpp"
#include "lim/errors.hpp"

namespace lim::kernels {

namespace {

constexpr KernelTable kScalar{Isa::Scalar, scalar::dot, scalar::axpy, scalar::matvec,
                              scalar::max, scalar::sum_squares};
#if defined(LIM_HAVE_AVX2)
constexpr KernelTable kAvx2{Isa::Avx2, avx2::dot, avx2::axpy, avx2::matvec, avx2::max,
                            avx2::sum_squares};
#endif
#if defined(LIM_HAVE_NEON)
constexpr KernelTable kNeon{Isa::Neon, neon::dot, neon::axpy, neon::matvec, neon::max,
                            neon::sum_squares};
#endif

const KernelTable* initial_table() noexcept {
    if (const char* env = std::getenv("LIM_ISA")) {
        if (auto isa = parse_isa(env); isa && isa_available(*isa)) {
            return &table(*isa);
        }
    }
    return &table(detect_isa());
}

std::atomic<const KernelTable*>& active_slot() noexcept {
    static std::atomic<const KernelTable*> slot{initial_table()};
    return slot;
}

} // namespace

std::string_view isa_name(Isa isa) noexcept {
    switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
    }
    return "unknown";
}

std::optional<Isa> parse_isa(std::string_view name) noexcept {
    if (name == "scalar") return Isa::Scalar;
    if (name == "avx2") return Isa::Avx2;
    if (name == "neon") return Isa::Neon;
    return std::nullopt;
}

bool isa_available(Isa isa) noexcept {
    switch (isa) {
    case Isa::Scalar:
        return true;
    case Isa::Avx2:
#if defined(LIM_HAVE_AVX2)
        return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
        return false;
#endif
    case Isa::Neon:
#if defined(LIM_HAVE_NEON)
        return true;
#else
        return false;
#endif
    }
    return false;
}

Isa detect_isa() noexcept {
    if (isa_available(Isa::Avx2)) return Isa::Avx2;
    if (isa_available(Isa::Neon)) return Isa::Neon;
    return Isa::Scalar;
}

const KernelTable& table(Isa isa) {
    if (!isa_available(isa)) {
        throw ConfigError("kernel ISA '" + std::string(isa_name(isa)) + "' is not available on this machine");
    }
    switch (isa) {
#if defined(LIM_HAVE_AVX2)
    case Isa::Avx2: return kAvx2;
#endif
#if defined(LIM_HAVE_NEON)
    case Isa::Neon: return kNeon;
#endif
    default: return kScalar;
    }
}

const KernelTable& active() noexcept {
    return *active_slot().load(std::memory_order_acquire);
}

void set_active(Isa isa) {
    active_slot().store(&table(isa), std::memory_order_release);
}

float dot(std::span<const float> a, std::span<const float> b) noexcept {
    return active().dot(a.data(), b.data(), a.size());
}

void axpy(float alpha, std::span<const float> x, std::span<float> y) noexcept {
    active().axpy(alpha, x.data(), y.data(), x.size());
}

void matvec(std::span<const float> w, std::span<const float> x, std::span<float> y) noexcept {
    active().matvec(w.data(), x.data(), y.data(), y.size(), x.size());
}

float max(std::span<const float> x) noexcept {
    return active().max(x.data(), x.size());
}

float sum_squares(std::span<const float> x) noexcept {
    return active().sum_squares(x.data(), x.size());
}

} // namespace lim::kernels
