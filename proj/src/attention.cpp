// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#include "lim/attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lim/errors.hpp"
#include "lim/kernels.hpp"

namespace lim {

void HeadGeometry::validate() const {
    if (num_query_heads == 0 || num_kv_heads == 0) {
        throw ShapeError("head counts must be >= 1");
    }
    if (head_dim == 0) {
        throw ShapeError("head_dim must be >= 1");
    }
    if (num_query_heads % num_kv_heads != 0) {
        throw ShapeError("num_kv_heads (" + std::to_string(num_kv_heads) + ") must divide num_query_heads (" +
                         std::to_string(num_query_heads) + ")");
    }
}

KeyValueCache::KeyValueCache(std::size_t num_layers, std::size_t num_kv_heads, std::size_t head_dim)
    : num_kv_heads_(num_kv_heads), head_dim_(head_dim), lengths_(num_layers, 0), blocks_(num_layers * num_kv_heads) {
    if (num_layers == 0 || num_kv_heads == 0 || head_dim == 0) {
        throw ShapeError("cache dimensions must be >= 1");
    }
}

void KeyValueCache::append(std::size_t layer, std::span<const float> keys, std::span<const float> values) {
    if (layer >= lengths_.size()) {
        throw IndexError("layer " + std::to_string(layer) + " out of range");
    }
    const std::size_t width = num_kv_heads_ * head_dim_;
    if (keys.size() != width || values.size() != width) {
        throw ShapeError("append expects " + std::to_string(width) + " floats per key/value");
    }
    for (std::size_t h = 0; h < num_kv_heads_; ++h) {
        Block& b = blocks_[layer * num_kv_heads_ + h];
        auto k = keys.subspan(h * head_dim_, head_dim_);
        auto v = values.subspan(h * head_dim_, head_dim_);
        b.keys.insert(b.keys.end(), k.begin(), k.end());
        b.values.insert(b.values.end(), v.begin(), v.end());
    }
    ++lengths_[layer];
}

std::size_t KeyValueCache::length(std::size_t layer) const {
    if (layer >= lengths_.size()) {
        throw IndexError("layer " + std::to_string(layer) + " out of range");
    }
    return lengths_[layer];
}

const KeyValueCache::Block& KeyValueCache::block(std::size_t layer, std::size_t kv_head) const {
    if (layer >= lengths_.size()) {
        throw IndexError("layer " + std::to_string(layer) + " out of range");
    }
    if (kv_head >= num_kv_heads_) {
        throw IndexError("kv head " + std::to_string(kv_head) + " out of range");
    }
    return blocks_[layer * num_kv_heads_ + kv_head];
}

std::span<const float> KeyValueCache::keys(std::size_t layer, std::size_t kv_head) const {
    return block(layer, kv_head).keys;
}

std::span<const float> KeyValueCache::values(std::size_t layer, std::size_t kv_head) const {
    return block(layer, kv_head).values;
}

std::span<const float> KeyValueCache::key(std::size_t layer, std::size_t kv_head, TokenIndex pos) const {
    if (pos >= length(layer)) {
        throw IndexError("token " + std::to_string(pos) + " out of range");
    }
    return keys(layer, kv_head).subspan(pos * head_dim_, head_dim_);
}

std::vector<float> scaled_dot_scores(std::span<const float> query, std::span<const float> keys, std::size_t head_dim) {
    if (head_dim == 0 || query.size() != head_dim || keys.size() % head_dim != 0) {
        throw ShapeError("query/key dimension mismatch");
    }
    if (keys.empty()) {
        throw EmptyContextError("no keys to score against");
    }
    const std::size_t n = keys.size() / head_dim;
    const float scale = 1.0f / std::sqrt(static_cast<float>(head_dim));
    const auto& k = kernels::active();
    std::vector<float> out(n);
    for (std::size_t j = 0; j < n; ++j) {
        out[j] = k.dot(query.data(), keys.data() + j * head_dim, head_dim) * scale;
    }
    return out;
}

void softmax_normalize(std::span<const float> logits, std::span<float> out) {
    if (out.size() != logits.size()) {
        throw ShapeError("softmax output size mismatch");
    }
    if (logits.empty()) {
        return;
    }
    for (float x : logits) {
        if (!std::isfinite(x)) {
            throw NumericError("non-finite attention logit");
        }
    }
    const float m = kernels::max(logits);
    float total = 0.0f;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        total += out[i];
    }
    const float inv = 1.0f / total;
    for (float& v : out) {
        v *= inv;
    }
}

std::vector<float> softmax_normalize(std::span<const float> logits) {
    std::vector<float> out(logits.size());
    softmax_normalize(logits, out);
    return out;
}

namespace {

void check_queries(std::span<const float> queries, const KeyValueCache& cache, std::size_t layer,
                   const HeadGeometry& geometry) {
    geometry.validate();
    if (queries.size() != geometry.query_width()) {
        throw ShapeError("queries must hold num_query_heads * head_dim floats");
    }
    if (cache.head_dim() != geometry.head_dim || cache.num_kv_heads() != geometry.num_kv_heads) {
        throw ShapeError("cache geometry does not match head geometry");
    }
    if (cache.length(layer) == 0) {
        throw EmptyContextError("cache is empty at layer " + std::to_string(layer));
    }
}

void check_selection(std::span<const TokenIndex> selection, std::size_t length) {
    if (selection.empty()) {
        throw EmptyContextError("empty token selection");
    }
    for (TokenIndex idx : selection) {
        if (idx >= length) {
            throw IndexError("selected token " + std::to_string(idx) + " >= cached length " + std::to_string(length));
        }
    }
}

// One head of attention. `indices` empty means every cached token in order;
// the arithmetic is the same either way so a full selection reproduces full
// attention bit for bit.
void attend_head(std::span<const float> q, std::span<const float> keys, std::span<const float> values,
                 std::size_t length, std::size_t d, std::span<const TokenIndex> indices, std::span<float> out,
                 std::span<float> raw_out, std::span<float> weights_out) {
    const auto& k = kernels::active();
    const float scale = 1.0f / std::sqrt(static_cast<float>(d));
    const std::size_t n = indices.empty() ? length : indices.size();
    std::vector<float> logits(n);
    for (std::size_t j = 0; j < n; ++j) {
        const TokenIndex t = indices.empty() ? j : indices[j];
        logits[j] = k.dot(q.data(), keys.data() + t * d, d) * scale;
    }
    std::vector<float> weights(n);
    softmax_normalize(logits, weights);
    std::fill(out.begin(), out.end(), 0.0f);
    for (std::size_t j = 0; j < n; ++j) {
        const TokenIndex t = indices.empty() ? j : indices[j];
        k.axpy(weights[j], values.data() + t * d, out.data(), d);
    }
    if (!raw_out.empty()) {
        std::copy(logits.begin(), logits.end(), raw_out.begin());
        std::copy(weights.begin(), weights.end(), weights_out.begin());
    }
}

void init_probe(AttentionProbe* probe, const HeadGeometry& g) {
    if (!probe) return;
    probe->kv_head_of_query.assign(g.num_query_heads, 0);
    probe->keys_of_query.assign(g.num_query_heads, nullptr);
    probe->values_of_query.assign(g.num_query_heads, nullptr);
    probe->tokens_read_per_kv_head.assign(g.num_kv_heads, 0);
}

void record_probe(AttentionProbe* probe, std::size_t head, std::size_t kv, std::span<const float> keys,
                  std::span<const float> values, std::size_t tokens) {
    if (!probe) return;
    probe->kv_head_of_query[head] = kv;
    probe->keys_of_query[head] = keys.data();
    probe->values_of_query[head] = values.data();
    probe->tokens_read_per_kv_head[kv] += tokens;
}

} // namespace

AttentionScores attention_scores(std::span<const float> queries, const KeyValueCache& cache, std::size_t layer,
                                 const HeadGeometry& geometry) {
    check_queries(queries, cache, layer, geometry);
    const std::size_t n = cache.length(layer);
    const std::size_t d = geometry.head_dim;
    AttentionScores s{Matrix<float>(geometry.num_query_heads, n), Matrix<float>(geometry.num_query_heads, n)};
    for (std::size_t h = 0; h < geometry.num_query_heads; ++h) {
        auto raw = scaled_dot_scores(queries.subspan(h * d, d), cache.keys(layer, geometry.kv_head_for(h)), d);
        std::copy(raw.begin(), raw.end(), s.raw.row(h).begin());
        softmax_normalize(s.raw.row(h), s.weights.row(h));
    }
    return s;
}

std::vector<float> full_attention(std::span<const float> queries, const KeyValueCache& cache, std::size_t layer,
                                  const HeadGeometry& geometry, AttentionProbe* probe, AttentionScores* scores) {
    check_queries(queries, cache, layer, geometry);
    const std::size_t n = cache.length(layer);
    const std::size_t d = geometry.head_dim;
    if (scores) {
        *scores = AttentionScores{Matrix<float>(geometry.num_query_heads, n), Matrix<float>(geometry.num_query_heads, n)};
    }
    init_probe(probe, geometry);
    std::vector<float> out(geometry.query_width());
    for (std::size_t h = 0; h < geometry.num_query_heads; ++h) {
        const std::size_t kv = geometry.kv_head_for(h);
        auto keys = cache.keys(layer, kv);
        auto values = cache.values(layer, kv);
        record_probe(probe, h, kv, keys, values, n);
        attend_head(queries.subspan(h * d, d), keys, values, n, d, {}, std::span(out).subspan(h * d, d),
                    scores ? scores->raw.row(h) : std::span<float>{},
                    scores ? scores->weights.row(h) : std::span<float>{});
    }
    return out;
}

std::vector<float> sparse_attention(std::span<const float> queries, const KeyValueCache& cache, std::size_t layer,
                                    const HeadGeometry& geometry, std::span<const TokenIndex> selection,
                                    AttentionProbe* probe) {
    std::vector<std::span<const TokenIndex>> per_head(geometry.num_query_heads, selection);
    return sparse_attention(queries, cache, layer, geometry, per_head, probe);
}

std::vector<float> sparse_attention(std::span<const float> queries, const KeyValueCache& cache, std::size_t layer,
                                    const HeadGeometry& geometry,
                                    std::span<const std::span<const TokenIndex>> per_head_selection,
                                    AttentionProbe* probe) {
    check_queries(queries, cache, layer, geometry);
    if (per_head_selection.size() != geometry.num_query_heads) {
        throw ShapeError("need one selection per query head");
    }
    const std::size_t n = cache.length(layer);
    const std::size_t d = geometry.head_dim;
    for (auto sel : per_head_selection) {
        check_selection(sel, n);
    }
    init_probe(probe, geometry);
    std::vector<float> out(geometry.query_width());
    for (std::size_t h = 0; h < geometry.num_query_heads; ++h) {
        const std::size_t kv = geometry.kv_head_for(h);
        auto keys = cache.keys(layer, kv);
        auto values = cache.values(layer, kv);
        record_probe(probe, h, kv, keys, values, per_head_selection[h].size());
        attend_head(queries.subspan(h * d, d), keys, values, n, d, per_head_selection[h],
                    std::span(out).subspan(h * d, d), {}, {});
    }
    return out;
}

} // namespace lim
