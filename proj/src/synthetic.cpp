// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#include "lim/synthetic.hpp"

#include <cmath>

#include "lim/errors.hpp"
#include "lim/rng.hpp"

namespace lim {

Trace make_random_trace(const RandomTraceOptions& o) {
    Trace t;
    TraceHeader& h = t.header;
    h.num_layers = o.num_layers;
    h.num_query_heads = o.num_query_heads;
    h.num_kv_heads = o.num_kv_heads;
    h.head_dim = o.head_dim;
    h.prompt_len = o.prompt_len;
    h.recorded_layers = o.recorded_layers;
    SplitMix64 rng(o.seed);
    h.prompt_keys.resize(o.recorded_layers.size() * o.num_kv_heads * o.prompt_len * o.head_dim);
    for (float& v : h.prompt_keys) v = rng.uniform_signed();
    h.validate();
    for (std::uint32_t s = 0; s < o.steps; ++s) {
        StepRecord r;
        r.step = s;
        r.queries.resize(h.query_floats());
        r.keys.resize(h.key_floats());
        for (float& v : r.queries) v = rng.uniform_signed();
        for (float& v : r.keys) v = rng.uniform_signed();
        t.steps.push_back(std::move(r));
    }
    return t;
}

Trace make_crafted_trace(const CraftedTraceOptions& o) {
    if (o.layers.empty() || o.plant_period == 0) {
        throw ConfigError("crafted trace needs at least one layer and a non-zero plant period");
    }
    const std::uint32_t positions = o.prompt_len + o.steps;
    const std::uint32_t plant_dim = o.noise_dims;
    const std::uint32_t onehot_base = o.noise_dims + 1;
    const std::uint32_t d = onehot_base + positions;
    // Queries are pre-scaled so q.k / sqrt(d) lands on the intended logit.
    const float s = std::sqrt(static_cast<float>(d));
    // Uniform[-1,1) keys times uniform queries: each term has variance c^2/9.
    const float noise_gain =
        o.noise_dims == 0 ? 0.0f : o.noise_logit_std * 3.0f * s / std::sqrt(static_cast<float>(o.noise_dims));

    Trace t;
    TraceHeader& h = t.header;
    h.num_layers = static_cast<std::uint32_t>(o.layers.size());
    h.num_query_heads = o.num_query_heads;
    h.num_kv_heads = o.num_kv_heads;
    h.head_dim = d;
    h.prompt_len = o.prompt_len;
    h.recorded_layers.clear();
    for (std::uint32_t l = 0; l < h.num_layers; ++l) h.recorded_layers.push_back(l);

    SplitMix64 rng(o.seed);
    auto make_key = [&](std::uint32_t pos, float* out) {
        for (std::uint32_t i = 0; i < o.noise_dims; ++i) out[i] = rng.uniform_signed();
        out[plant_dim] = (pos % o.plant_period == o.plant_offset) ? 1.0f : 0.0f;
        for (std::uint32_t i = 0; i < positions; ++i) out[onehot_base + i] = 0.0f;
        out[onehot_base + pos] = 1.0f;
    };

    h.prompt_keys.resize(static_cast<std::size_t>(h.num_layers) * o.num_kv_heads * o.prompt_len * d);
    for (std::uint32_t r = 0; r < h.num_layers; ++r) {
        for (std::uint32_t kv = 0; kv < o.num_kv_heads; ++kv) {
            for (std::uint32_t p = 0; p < o.prompt_len; ++p) {
                make_key(p, h.prompt_keys.data() + ((static_cast<std::size_t>(r) * o.num_kv_heads + kv) * o.prompt_len + p) * d);
            }
        }
    }
    h.validate();

    for (std::uint32_t step = 0; step < o.steps; ++step) {
        const std::uint32_t pos = o.prompt_len + step;
        const std::uint32_t seq_len = pos + 1;
        StepRecord rec;
        rec.step = step;
        rec.queries.assign(h.query_floats(), 0.0f);
        rec.keys.assign(h.key_floats(), 0.0f);
        for (std::uint32_t r = 0; r < h.num_layers; ++r) {
            const CraftedLayer& L = o.layers[r];
            for (std::uint32_t kv = 0; kv < o.num_kv_heads; ++kv) {
                make_key(pos, rec.keys.data() + (static_cast<std::size_t>(r) * o.num_kv_heads + kv) * d);
            }
            for (std::uint32_t head = 0; head < o.num_query_heads; ++head) {
                float* q = rec.queries.data() + (static_cast<std::size_t>(r) * o.num_query_heads + head) * d;
                for (std::uint32_t i = 0; i < o.noise_dims; ++i) q[i] = noise_gain * rng.uniform_signed();
                q[plant_dim] = o.plant_logit * s;
                const std::uint32_t span = std::min(o.recent_span, seq_len);
                for (std::uint32_t p = seq_len - span; p < seq_len; ++p) q[onehot_base + p] += L.recent_logit * s;
                for (std::size_t f = 0; f < L.favorites_per_head; ++f) {
                    const auto p = static_cast<std::uint32_t>(rng.below(seq_len));
                    q[onehot_base + p] += L.favorite_logit * s;
                }
            }
        }
        t.steps.push_back(std::move(rec));
    }
    return t;
}

} // namespace lim
