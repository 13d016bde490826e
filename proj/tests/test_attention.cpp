// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "lim/attention.hpp"
#include "lim/errors.hpp"
#include "lim/rng.hpp"
#include "oracles.hpp"

namespace {

using lim::HeadGeometry;
using lim::KeyValueCache;

// Fills a one-layer cache with n random tokens; returns flat per-KV-head
// copies [kv][n*d] for the oracle.
struct Filled {
    KeyValueCache cache;
    std::vector<std::vector<float>> keys, values;
};

Filled fill_cache(const HeadGeometry& g, std::size_t n, std::uint64_t seed) {
    Filled f{KeyValueCache(1, g.num_kv_heads, g.head_dim), {}, {}};
    f.keys.assign(g.num_kv_heads, {});
    f.values.assign(g.num_kv_heads, {});
    lim::SplitMix64 rng(seed);
    for (std::size_t t = 0; t < n; ++t) {
        std::vector<float> k(g.kv_width()), v(g.kv_width());
        for (auto& x : k) x = rng.uniform_signed();
        for (auto& x : v) x = rng.uniform_signed();
        f.cache.append(0, k, v);
        for (std::size_t kv = 0; kv < g.num_kv_heads; ++kv) {
            f.keys[kv].insert(f.keys[kv].end(), k.begin() + kv * g.head_dim, k.begin() + (kv + 1) * g.head_dim);
            f.values[kv].insert(f.values[kv].end(), v.begin() + kv * g.head_dim, v.begin() + (kv + 1) * g.head_dim);
        }
    }
    return f;
}

TEST(HeadGeometry, GroupMapping) {
    HeadGeometry g{8, 4, 32};
    EXPECT_EQ(g.group_size(), 2u);
    EXPECT_EQ(g.kv_head_for(0), 0u);
    EXPECT_EQ(g.kv_head_for(1), 0u);
    EXPECT_EQ(g.kv_head_for(7), 3u);
    EXPECT_NO_THROW(g.validate());
    EXPECT_THROW((HeadGeometry{6, 4, 8}.validate()), lim::ShapeError);
    EXPECT_THROW((HeadGeometry{4, 0, 8}.validate()), lim::ShapeError);
    EXPECT_THROW((HeadGeometry{4, 2, 0}.validate()), lim::ShapeError);
}

TEST(KeyValueCache, AppendAndErrors) {
    KeyValueCache c(2, 2, 4);
    std::vector<float> k(8, 1.0f), v(8, 2.0f);
    c.append(1, k, v);
    EXPECT_EQ(c.length(0), 0u);
    EXPECT_EQ(c.length(1), 1u);
    EXPECT_THROW(c.append(2, k, v), lim::IndexError);
    std::vector<float> short_k(7);
    EXPECT_THROW(c.append(0, short_k, v), lim::ShapeError);
    EXPECT_THROW(c.key(1, 0, 1), lim::IndexError);
    EXPECT_THROW(c.keys(1, 2), lim::IndexError);
}

TEST(ScaledDotScores, ZeroQuery) {
    std::vector<float> q(4, 0.0f);
    auto keys = lim_test::random_floats(1, 12);
    auto s = lim::scaled_dot_scores(q, keys, 4);
    ASSERT_EQ(s.size(), 3u);
    for (float v : s) EXPECT_EQ(v, 0.0f);
}

TEST(ScaledDotScores, UnitBasis) {
    std::vector<float> q{1, 0, 0, 0};
    std::vector<float> keys{1, 0, 0, 0, 0, 1, 0, 0};
    auto s = lim::scaled_dot_scores(q, keys, 4);
    EXPECT_EQ(s, (std::vector<float>{0.5f, 0.0f}));
}

TEST(ScaledDotScores, MatchesDoubleReference) {
    auto q = lim_test::random_floats(7, 8);
    auto keys = lim_test::random_floats(8, 16 * 8);
    auto s = lim::scaled_dot_scores(q, keys, 8);
    for (std::size_t j = 0; j < 16; ++j) {
        const double ref = lim_test::dot_ref(q, std::span(keys).subspan(j * 8, 8)) / std::sqrt(8.0);
        EXPECT_NEAR(s[j], ref, 1e-6);
    }
}

TEST(ScaledDotScores, Errors) {
    std::vector<float> q(4), keys(10);
    EXPECT_THROW(lim::scaled_dot_scores(q, keys, 4), lim::ShapeError);
    EXPECT_THROW(lim::scaled_dot_scores(std::vector<float>(3), std::vector<float>(8), 4), lim::ShapeError);
    EXPECT_THROW(lim::scaled_dot_scores(q, std::vector<float>{}, 4), lim::EmptyContextError);
}

TEST(Softmax, Uniform) {
    auto w = lim::softmax_normalize(std::vector<float>{0, 0, 0, 0});
    for (float v : w) EXPECT_EQ(v, 0.25f);
}

TEST(Softmax, LargeGapDoesNotOverflow) {
    for (float x : {-50.0f, 0.0f, 80.0f, 1e4f}) {
        auto w = lim::softmax_normalize(std::vector<float>{x, x + 100.0f});
        EXPECT_TRUE(std::isfinite(w[0]));
        EXPECT_GE(double(w[1]), 1.0 - 1e-30);
    }
}

TEST(Softmax, MatchesDoubleReference) {
    auto w = lim::softmax_normalize(std::vector<float>{1.0f, 2.0f, 3.0f});
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    EXPECT_NEAR(w[0], std::exp(1.0) / z, 1e-7);
    EXPECT_NEAR(w[1], std::exp(2.0) / z, 1e-7);
    EXPECT_NEAR(w[2], std::exp(3.0) / z, 1e-7);
}

TEST(Softmax, NonFiniteInputThrows) {
    EXPECT_THROW(lim::softmax_normalize(std::vector<float>{1.0f, NAN}), lim::NumericError);
    EXPECT_THROW(lim::softmax_normalize(std::vector<float>{INFINITY}), lim::NumericError);
    EXPECT_THROW(lim::softmax_normalize(std::vector<float>{-INFINITY, 0.0f}), lim::NumericError);
}

TEST(Softmax, PropertySumsToOne) {
    lim::SplitMix64 rng(99);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + rng.below(300);
        const float scale = std::pow(10.0f, float(rng.below(5)) - 1.0f);
        std::vector<float> x(n);
        for (auto& v : x) v = scale * rng.uniform_signed();
        auto w = lim::softmax_normalize(x);
        double sum = 0.0;
        for (float v : w) {
            ASSERT_GE(v, 0.0f);
            ASSERT_LE(v, 1.0f);
            sum += v;
        }
        ASSERT_NEAR(sum, 1.0, 1e-6);
    }
}

TEST(FullAttention, SingleTokenReturnsValue) {
    HeadGeometry g{4, 2, 8};
    auto f = fill_cache(g, 1, 5);
    auto q = lim_test::random_floats(6, g.query_width());
    auto out = lim::full_attention(q, f.cache, 0, g);
    for (std::size_t h = 0; h < 4; ++h) {
        const auto& v = f.values[g.kv_head_for(h)];
        for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(out[h * 8 + c], v[c]);
    }
}

TEST(FullAttention, IdenticalKeysAverageValues) {
    HeadGeometry g{2, 1, 4};
    KeyValueCache c(1, 1, 4);
    std::vector<float> k{0.3f, -0.2f, 0.9f, 0.1f};
    std::vector<std::vector<float>> vals{{1, 2, 3, 4}, {5, 6, 7, 8}, {-1, 0, 1, 2}, {2, 2, 2, 2}};
    for (const auto& v : vals) c.append(0, k, v);
    auto q = lim_test::random_floats(3, 8);
    auto out = lim::full_attention(q, c, 0, g);
    for (std::size_t h = 0; h < 2; ++h) {
        for (std::size_t col = 0; col < 4; ++col) {
            double mean = 0.0;
            for (const auto& v : vals) mean += v[col] / 4.0;
            EXPECT_NEAR(out[h * 4 + col], mean, 1e-6);
        }
    }
}

TEST(FullAttention, MatchesNaiveReference) {
    HeadGeometry g{8, 4, 16};
    auto f = fill_cache(g, 64, 3);
    auto q = lim_test::random_floats(33, g.query_width());
    auto out = lim::full_attention(q, f.cache, 0, g);
    for (std::size_t h = 0; h < 8; ++h) {
        const std::size_t kv = g.kv_head_for(h);
        auto ref = lim_test::naive_head(std::span(q).subspan(h * 16, 16), f.keys[kv], f.values[kv], 16, {});
        for (std::size_t c = 0; c < 16; ++c) EXPECT_NEAR(out[h * 16 + c], ref[c], 1e-5);
    }
}

TEST(FullAttention, Errors) {
    HeadGeometry g{4, 2, 8};
    KeyValueCache empty(1, 2, 8);
    std::vector<float> q(32);
    EXPECT_THROW(lim::full_attention(q, empty, 0, g), lim::EmptyContextError);
    auto f = fill_cache(g, 3, 1);
    EXPECT_THROW(lim::full_attention(std::vector<float>(31), f.cache, 0, g), lim::ShapeError);
    EXPECT_THROW(lim::full_attention(q, f.cache, 0, HeadGeometry{4, 1, 8}), lim::ShapeError);
}

TEST(FullAttention, ScoresOutputMatchesAttentionScores) {
    HeadGeometry g{4, 2, 8};
    auto f = fill_cache(g, 20, 12);
    auto q = lim_test::random_floats(13, g.query_width());
    lim::AttentionScores s;
    lim::full_attention(q, f.cache, 0, g, nullptr, &s);
    auto s2 = lim::attention_scores(q, f.cache, 0, g);
    EXPECT_EQ(s.raw, s2.raw);
    EXPECT_EQ(s.weights, s2.weights);
}

TEST(FullAttention, PermutationEquivariance) {
    HeadGeometry g{2, 1, 4};
    const std::size_t n = 8;
    auto f = fill_cache(g, n, 77);
    auto q = lim_test::random_floats(78, g.query_width());
    auto base = lim::full_attention(q, f.cache, 0, g);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    lim::SplitMix64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
        KeyValueCache c(1, 1, 4);
        for (std::size_t t : perm) {
            c.append(0, std::span(f.keys[0]).subspan(t * 4, 4), std::span(f.values[0]).subspan(t * 4, 4));
        }
        auto out = lim::full_attention(q, c, 0, g);
        for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], base[i], 1e-6);
    }
}

TEST(FullAttention, GroupedHeadsReadSameKeyValueData) {
    HeadGeometry g{8, 2, 4};
    auto f = fill_cache(g, 10, 8);
    auto q = lim_test::random_floats(9, g.query_width());
    lim::AttentionProbe probe;
    lim::full_attention(q, f.cache, 0, g, &probe);
    for (std::size_t h = 0; h < 8; ++h) {
        const std::size_t kv = g.kv_head_for(h);
        EXPECT_EQ(probe.kv_head_of_query[h], kv);
        EXPECT_EQ(probe.keys_of_query[h], f.cache.keys(0, kv).data());
        EXPECT_EQ(probe.values_of_query[h], f.cache.values(0, kv).data());
        const std::size_t first = h - h % g.group_size();
        EXPECT_EQ(probe.keys_of_query[h], probe.keys_of_query[first]);
    }
    EXPECT_EQ(probe.tokens_read_per_kv_head, (std::vector<std::size_t>{40, 40}));
    EXPECT_NE(probe.keys_of_query[0], probe.keys_of_query[4]);
}

TEST(SparseAttention, FullSelectionEqualsFull) {
    HeadGeometry g{8, 4, 16};
    auto f = fill_cache(g, 40, 21);
    auto q = lim_test::random_floats(22, g.query_width());
    std::vector<lim::TokenIndex> all(40);
    std::iota(all.begin(), all.end(), 0u);
    auto full = lim::full_attention(q, f.cache, 0, g);
    auto sparse = lim::sparse_attention(q, f.cache, 0, g, all);
    for (std::size_t i = 0; i < full.size(); ++i) EXPECT_NEAR(sparse[i], full[i], 1e-6);
}

TEST(SparseAttention, SingletonReturnsValue) {
    HeadGeometry g{4, 2, 8};
    auto f = fill_cache(g, 12, 4);
    auto q = lim_test::random_floats(6, g.query_width());
    std::vector<lim::TokenIndex> sel{5};
    auto out = lim::sparse_attention(q, f.cache, 0, g, sel);
    for (std::size_t h = 0; h < 4; ++h) {
        const auto& v = f.values[g.kv_head_for(h)];
        for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(out[h * 8 + c], v[5 * 8 + c]);
    }
}

TEST(SparseAttention, MatchesGatherThenNaive) {
    HeadGeometry g{8, 4, 16};
    auto f = fill_cache(g, 64, 17);
    auto q = lim_test::random_floats(18, g.query_width());
    lim::SplitMix64 rng(19);
    std::vector<std::size_t> pool(64);
    std::iota(pool.begin(), pool.end(), 0u);
    for (std::size_t i = 63; i > 0; --i) std::swap(pool[i], pool[rng.below(i + 1)]);
    std::vector<std::size_t> sel(pool.begin(), pool.begin() + 16);
    std::sort(sel.begin(), sel.end());
    auto out = lim::sparse_attention(q, f.cache, 0, g, sel);
    for (std::size_t h = 0; h < 8; ++h) {
        const std::size_t kv = g.kv_head_for(h);
        auto ref = lim_test::naive_head(std::span(q).subspan(h * 16, 16), f.keys[kv], f.values[kv], 16, sel);
        for (std::size_t c = 0; c < 16; ++c) EXPECT_NEAR(out[h * 16 + c], ref[c], 1e-5);
    }
}

TEST(SparseAttention, PerHeadSelections) {
    HeadGeometry g{4, 2, 8};
    auto f = fill_cache(g, 30, 40);
    auto q = lim_test::random_floats(41, g.query_width());
    std::vector<std::vector<lim::TokenIndex>> sels{{0, 3}, {1, 2, 29}, {7}, {4, 5, 6, 10}};
    std::vector<std::span<const lim::TokenIndex>> spans(sels.begin(), sels.end());
    lim::AttentionProbe probe;
    auto out = lim::sparse_attention(q, f.cache, 0, g, spans, &probe);
    for (std::size_t h = 0; h < 4; ++h) {
        const std::size_t kv = g.kv_head_for(h);
        auto ref = lim_test::naive_head(std::span(q).subspan(h * 8, 8), f.keys[kv], f.values[kv], 8,
                                        std::vector<std::size_t>(sels[h].begin(), sels[h].end()));
        for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(out[h * 8 + c], ref[c], 1e-5);
    }
    EXPECT_EQ(probe.tokens_read_per_kv_head, (std::vector<std::size_t>{5, 5}));
}

TEST(SparseAttention, Errors) {
    HeadGeometry g{4, 2, 8};
    auto f = fill_cache(g, 5, 2);
    std::vector<float> q(32);
    EXPECT_THROW(lim::sparse_attention(q, f.cache, 0, g, std::vector<lim::TokenIndex>{}), lim::EmptyContextError);
    EXPECT_THROW(lim::sparse_attention(q, f.cache, 0, g, std::vector<lim::TokenIndex>{5}), lim::IndexError);
    std::vector<std::span<const lim::TokenIndex>> two(2);
    EXPECT_THROW(lim::sparse_attention(q, f.cache, 0, g, two), lim::ShapeError);
}

} // namespace
