// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations for tests. Nothing here calls into
// the library's selection or attention code.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "lim/rng.hpp"

namespace lim_test {

inline std::vector<float> random_floats(std::uint64_t seed, std::size_t n, float scale = 1.0f) {
    lim::SplitMix64 rng(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = scale * rng.uniform_signed();
    return v;
}

inline double dot_ref(std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

inline std::vector<double> softmax_ref(std::span<const double> x) {
    double m = -INFINITY;
    for (double v : x) m = std::max(m, v);
    std::vector<double> out(x.size());
    double z = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - m);
        z += out[i];
    }
    for (auto& v : out) v /= z;
    return out;
}

// keys/values: [n][d] for one KV head. Attends over `subset` (all if empty).
inline std::vector<double> naive_head(std::span<const float> q, std::span<const float> keys,
                                      std::span<const float> values, std::size_t d,
                                      const std::vector<std::size_t>& subset) {
    std::vector<std::size_t> idx = subset;
    if (idx.empty()) {
        for (std::size_t j = 0; j < keys.size() / d; ++j) idx.push_back(j);
    }
    std::vector<double> logits;
    for (std::size_t j : idx) logits.push_back(dot_ref(q, keys.subspan(j * d, d)) / std::sqrt(double(d)));
    const auto w = softmax_ref(logits);
    std::vector<double> out(d, 0.0);
    for (std::size_t t = 0; t < idx.size(); ++t) {
        for (std::size_t c = 0; c < d; ++c) out[c] += w[t] * values[idx[t] * d + c];
    }
    return out;
}

// Full ordering by (score desc, index asc) using a stable sort on a copy.
inline std::vector<std::size_t> topk_sort_oracle(std::span<const float> row, std::size_t k, std::size_t exclude_tail) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i + exclude_tail < row.size(); ++i) idx.push_back(i);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    idx.resize(std::min(k, idx.size()));
    return idx;
}

// Builds the flattened list by collecting (rank, head, token) triples,
// sorting them and dropping repeated tokens.
inline std::vector<std::size_t> union_flatten_oracle(const std::vector<std::vector<std::size_t>>& heads,
                                                     std::size_t limit) {
    struct Entry {
        std::size_t rank, head, token;
    };
    std::vector<Entry> all;
    for (std::size_t h = 0; h < heads.size(); ++h) {
        for (std::size_t r = 0; r < heads[h].size(); ++r) all.push_back({r, h, heads[h][r]});
    }
    std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) {
        return a.rank != b.rank ? a.rank < b.rank : a.head < b.head;
    });
    std::vector<std::size_t> out;
    std::set<std::size_t> seen;
    for (const auto& e : all) {
        if (out.size() >= limit) break;
        if (seen.insert(e.token).second) out.push_back(e.token);
    }
    return out;
}

struct OracleBudget {
    std::size_t total;
    double ratio;
    std::size_t sinks;
};

// Unified selection from first principles: returns the sorted index set.
inline std::vector<std::size_t> lessismore_oracle(const std::vector<std::vector<float>>& scores, std::size_t seq,
                                                  OracleBudget b) {
    std::vector<std::size_t> out;
    if (b.total >= seq) {
        for (std::size_t i = 0; i < seq; ++i) out.push_back(i);
        return out;
    }
    const std::size_t sinks = std::min(b.sinks, b.total);
    std::size_t recent = static_cast<std::size_t>(std::floor(double(b.total) * b.ratio + 1e-9));
    recent = std::min(recent, b.total - sinks);
    const std::size_t topk = b.total - sinks - recent;
    const std::size_t per_head = b.total - recent;

    std::vector<std::vector<std::size_t>> ranked;
    for (const auto& row : scores) ranked.push_back(topk_sort_oracle(row, per_head, recent));
    const auto unified = union_flatten_oracle(ranked, SIZE_MAX);

    std::set<std::size_t> chosen;
    for (std::size_t i = 0; i < sinks; ++i) chosen.insert(i);
    for (std::size_t i = seq - recent; i < seq; ++i) chosen.insert(i);
    std::size_t taken = 0;
    for (std::size_t t : unified) {
        if (taken == topk) break;
        if (chosen.count(t)) continue;
        chosen.insert(t);
        ++taken;
    }
    return {chosen.begin(), chosen.end()};
}

inline double recall_ref(std::span<const float> w, const std::vector<std::size_t>& sel) {
    double num = 0.0, den = 0.0;
    for (float v : w) den += v;
    for (std::size_t i : sel) num += w[i];
    return num / den;
}

} // namespace lim_test
