// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lim/tensor.hpp"

namespace lim {

using TokenIndex = std::size_t;

/// Query/KV head layout of a grouped-query attention layer.
struct HeadGeometry {
    std::size_t num_query_heads = 1;
    std::size_t num_kv_heads = 1;
    std::size_t head_dim = 1;

    std::size_t group_size() const noexcept { return num_query_heads / num_kv_heads; }
    /// KV head read by a query head: head / group_size.
    std::size_t kv_head_for(std::size_t query_head) const noexcept { return query_head / group_size(); }
    std::size_t query_width() const noexcept { return num_query_heads * head_dim; }
    std::size_t kv_width() const noexcept { return num_kv_heads * head_dim; }

    /// Throws ShapeError unless heads >= 1, head_dim >= 1 and KV heads divide query heads.
    void validate() const;

    friend bool operator==(const HeadGeometry&, const HeadGeometry&) = default;
};

/// Append-only key/value store, one contiguous [tokens x head_dim] block per
/// (layer, KV head). Entries never move relative to each other, so a gathered
/// key is bit-identical to the one written.
class KeyValueCache {
public:
    KeyValueCache(std::size_t num_layers, std::size_t num_kv_heads, std::size_t head_dim);

    /// Append one token at `layer`; keys/values hold num_kv_heads * head_dim floats.
    void append(std::size_t layer, std::span<const float> keys, std::span<const float> values);

    std::size_t length(std::size_t layer) const;
    std::size_t num_layers() const noexcept { return lengths_.size(); }
    std::size_t num_kv_heads() const noexcept { return num_kv_heads_; }
    std::size_t head_dim() const noexcept { return head_dim_; }

    /// All keys of one KV head, [length x head_dim] row-major.
    std::span<const float> keys(std::size_t layer, std::size_t kv_head) const;
    std::span<const float> values(std::size_t layer, std::size_t kv_head) const;
    std::span<const float> key(std::size_t layer, std::size_t kv_head, TokenIndex pos) const;

private:
    struct Block {
        std::vector<float> keys;
        std::vector<float> values;
    };
    const Block& block(std::size_t layer, std::size_t kv_head) const;

    std::size_t num_kv_heads_;
    std::size_t head_dim_;
    std::vector<std::size_t> lengths_;
    std::vector<Block> blocks_;
};

/// Raw logits and softmax weights for every query head at one layer.
struct AttentionScores {
    Matrix<float> raw;      // [query heads x tokens]
    Matrix<float> weights;  // softmax(raw) per row
};

/// Records which KV data each query head read during an attention call.
struct AttentionProbe {
    std::vector<std::size_t> kv_head_of_query;
    std::vector<const float*> keys_of_query;
    std::vector<const float*> values_of_query;
    std::vector<std::size_t> tokens_read_per_kv_head;
};

/// dot(query, keys[j]) / sqrt(d) for each of the n rows in `keys` ([n x d] flat).
std::vector<float> scaled_dot_scores(std::span<const float> query, std::span<const float> keys, std::size_t head_dim);

/// Max-subtracted softmax. Throws NumericError on NaN/Inf input.
std::vector<float> softmax_normalize(std::span<const float> logits);
void softmax_normalize(std::span<const float> logits, std::span<float> out);

/// Scores of all cached tokens at `layer` for every query head.
AttentionScores attention_scores(std::span<const float> queries, const KeyValueCache& cache, std::size_t layer,
                                 const HeadGeometry& geometry);

/// Attention over every cached token. `queries` is [num_query_heads x head_dim]
/// flat; returns the same shape. If `scores` is given it receives the logits
/// and weights used.
std::vector<float> full_attention(std::span<const float> queries, const KeyValueCache& cache, std::size_t layer,
                                  const HeadGeometry& geometry, AttentionProbe* probe = nullptr,
                                  AttentionScores* scores = nullptr);

/// Attention restricted to `selection`, shared by all query heads. Softmax is
/// renormalized over the selected tokens only.
std::vector<float> sparse_attention(std::span<const float> queries, const KeyValueCache& cache, std::size_t layer,
                                    const HeadGeometry& geometry, std::span<const TokenIndex> selection,
                                    AttentionProbe* probe = nullptr);

/// Per-query-head selections (one span per query head).
std::vector<float> sparse_attention(std::span<const float> queries, const KeyValueCache& cache, std::size_t layer,
                                    const HeadGeometry& geometry,
                                    std::span<const std::span<const TokenIndex>> per_head_selection,
                                    AttentionProbe* probe = nullptr);

} // namespace lim
