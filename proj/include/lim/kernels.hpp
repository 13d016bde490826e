// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

namespace lim::kernels {

enum class Isa { Scalar, Avx2, Neon };

/// One implementation of every float inner loop. The scalar table is the
/// reference; SIMD tables must agree with it within rounding.
struct KernelTable {
    Isa isa;
    float (*dot)(const float* a, const float* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(float alpha, const float* x, float* y, std::size_t n);
    // y[r] = dot(w[r, :], x) for row-major w of shape rows x cols
    void (*matvec)(const float* w, const float* x, float* y, std::size_t rows, std::size_t cols);
    float (*max)(const float* x, std::size_t n);
    float (*sum_squares)(const float* x, std::size_t n);
};

std::string_view isa_name(Isa isa) noexcept;
std::optional<Isa> parse_isa(std::string_view name) noexcept;

/// True when the ISA was compiled in and the running CPU supports it.
bool isa_available(Isa isa) noexcept;

/// Best available ISA on this machine.
Isa detect_isa() noexcept;

/// Table for a specific ISA. Throws ConfigError when unavailable.
const KernelTable& table(Isa isa);

/// Table used by the library. Chosen at first use from LIM_ISA (if set)
/// or detect_isa().
const KernelTable& active() noexcept;

/// Override the active table (tests, --isa). Throws ConfigError when unavailable.
void set_active(Isa isa);

// Span conveniences over the active table.
float dot(std::span<const float> a, std::span<const float> b) noexcept;
void axpy(float alpha, std::span<const float> x, std::span<float> y) noexcept;
void matvec(std::span<const float> w, std::span<const float> x, std::span<float> y) noexcept;
float max(std::span<const float> x) noexcept;
float sum_squares(std::span<const float> x) noexcept;

} // namespace lim::kernels
