// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

// Included by ISA-specific translation units compiled with extra target
// flags. Keep it free of inline functions so no differently-compiled copies
// can leak through ODR.
#pragma once

#include <cstddef>

namespace lim::kernels {

#define LIM_DECLARE_KERNELS(ns)                                                              \
    namespace ns {                                                                           \
    float dot(const float* a, const float* b, std::size_t n);                                \
    void axpy(float alpha, const float* x, float* y, std::size_t n);                         \
    void matvec(const float* w, const float* x, float* y, std::size_t rows, std::size_t cols); \
    float max(const float* x, std::size_t n);                                                \
    float sum_squares(const float* x, std::size_t n);                                        \
    }

LIM_DECLARE_KERNELS(scalar)
LIM_DECLARE_KERNELS(avx2)
LIM_DECLARE_KERNELS(neon)

#undef LIM_DECLARE_KERNELS

} // namespace lim::kernels
