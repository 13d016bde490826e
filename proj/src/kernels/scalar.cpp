// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#include "kernels_internal.hpp"

namespace lim::kernels::scalar {

float dot(const float* a, const float* b, std::size_t n) {
    float acc = 0.0f;
    for (std::size_t i = 0; i < n; ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] += alpha * x[i];
    }
}

void matvec(const float* w, const float* x, float* y, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        y[r] = dot(w + r * cols, x, cols);
    }
}

float max(const float* x, std::size_t n) {
    float m = x[0];
    for (std::size_t i = 1; i < n; ++i) {
        if (x[i] > m) m = x[i];
    }
    return m;
}

float sum_squares(const float* x, std::size_t n) {
    return dot(x, x, n);
}

} // namespace lim::kernels::scalar
