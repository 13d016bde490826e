// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lim/trace.hpp"

namespace lim {

struct RandomTraceOptions {
    std::uint32_t num_layers = 4;
    std::vector<std::uint32_t> recorded_layers{0, 1, 2, 3};
    std::uint32_t num_query_heads = 4;
    std::uint32_t num_kv_heads = 2;
    std::uint32_t head_dim = 16;
    std::uint32_t prompt_len = 8;
    std::uint32_t steps = 16;
    std::uint64_t seed = 0;
};

/// Queries and keys with i.i.d. uniform entries in [-1, 1).
Trace make_random_trace(const RandomTraceOptions& options);

/// Attention shape of one recorded layer of a crafted trace, in logit units.
struct CraftedLayer {
    float recent_logit = 0.0f;      // boost of the last `recent_span` positions
    float favorite_logit = 0.0f;    // boost of each head's private picks
    std::size_t favorites_per_head = 0;
};

/// A trace whose logits are planted directly: every position owns a one-hot
/// key dimension, so each query can boost exactly the positions it wants.
/// Tokens at `plant_offset mod plant_period` carry importance shared by all
/// heads at all layers; recent positions get a per-layer boost; each head adds
/// randomly chosen private favorites; small dense noise sits on top.
struct CraftedTraceOptions {
    std::uint32_t num_query_heads = 8;
    std::uint32_t num_kv_heads = 2;
    std::uint32_t prompt_len = 64;
    std::uint32_t steps = 160;
    std::uint32_t noise_dims = 16;
    float noise_logit_std = 0.25f;
    std::uint32_t plant_period = 16;
    std::uint32_t plant_offset = 7;
    float plant_logit = 5.0f;
    std::uint32_t recent_span = 8;
    /// First entry is the layer that selects; the rest only consume.
    std::vector<CraftedLayer> layers{{0.5f, 4.0f, 14}, {5.0f, 3.0f, 6}, {5.0f, 3.0f, 6}, {5.0f, 3.0f, 6}};
    std::uint64_t seed = 2024;
};

Trace make_crafted_trace(const CraftedTraceOptions& options);

} // namespace lim
