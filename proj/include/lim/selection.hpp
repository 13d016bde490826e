// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "lim/attention.hpp"
#include "lim/tensor.hpp"

namespace lim {

/// Per-layer, per-head logits (rows = query heads, cols = tokens).
using ScoreMatrix = Matrix<float>;

/// Token budget K, recency ratio r and the always-kept sink prefix.
struct TokenBudget {
    std::size_t total = 1;
    double recency_ratio = 0.25;
    std::size_t sink_count = 0;

    /// Throws BudgetError unless total >= 1 and 0 <= ratio <= 1.
    void validate() const;
    /// floor(K * r), tolerant of representation error in r (0.8 * 5 is 4).
    std::size_t recent_count() const noexcept;
};

/// How a budget is spent for a context of a given length.
struct BudgetSplit {
    std::size_t sinks = 0;
    std::size_t recent = 0;
    std::size_t topk = 0;
};

/// Sinks are taken from the top-k share; the recency window shrinks only when
/// sinks plus window would exceed K.
BudgetSplit split_budget(const TokenBudget& budget, std::size_t seq_len);

/// Per query head, token indices best-first (descending score, ties by index).
struct RankedHeadSelection {
    std::vector<std::vector<TokenIndex>> heads;
};

enum class Provenance : std::uint8_t { Sink, TopK, Recent };

/// Sorted, distinct token positions plus where each came from.
class SelectionSet {
public:
    SelectionSet() = default;
    /// Throws IndexError unless indices are strictly increasing; sizes must match.
    SelectionSet(std::vector<TokenIndex> indices, std::vector<Provenance> provenance);

    /// [0, seq_len), tagged by role under `split` (sinks first, window last).
    static SelectionSet full_range(std::size_t seq_len, const BudgetSplit& split = {});

    std::span<const TokenIndex> indices() const noexcept { return indices_; }
    std::span<const Provenance> provenance() const noexcept { return provenance_; }
    std::size_t size() const noexcept { return indices_.size(); }
    bool empty() const noexcept { return indices_.empty(); }
    bool contains(TokenIndex idx) const noexcept;
    /// True when the set is exactly [0, seq_len).
    bool covers(std::size_t seq_len) const noexcept;
    std::uint64_t fingerprint() const noexcept;

    friend bool operator==(const SelectionSet&, const SelectionSet&) = default;

private:
    std::vector<TokenIndex> indices_;
    std::vector<Provenance> provenance_;
};

/// Top-k per head over positions [0, seq_len - exclude_tail).
/// Throws BudgetError if k exceeds the eligible length, NumericError on non-finite scores.
RankedHeadSelection per_head_topk(const ScoreMatrix& scores, std::size_t k, std::size_t exclude_tail);

/// Rank-tier interleave (rank 0 of every head in head order, then rank 1, ...),
/// keeping the first occurrence of each index, truncated to `limit` entries.
std::vector<TokenIndex> union_flatten(const RankedHeadSelection& ranked, std::size_t limit);

/// Last min(n, seq_len) positions, ascending.
std::vector<TokenIndex> recent_window(std::size_t seq_len, std::size_t n);

/// sinks + first unified candidates not already taken + recency window.
/// K >= seq_len yields the full range.
SelectionSet assemble_selection(std::span<const TokenIndex> unified, std::size_t seq_len, const TokenBudget& budget);

/// Unified cross-head selection with a stable recency window.
SelectionSet select_lessismore(const ScoreMatrix& scores, std::size_t seq_len, const TokenBudget& budget);

/// Each query head keeps its own top-K.
std::vector<SelectionSet> select_head_to_head(const ScoreMatrix& scores, std::size_t seq_len,
                                              const TokenBudget& budget);

struct GroupSelection {
    std::vector<SelectionSet> sets;       // one per KV group
    std::vector<std::size_t> chosen_heads; // query head whose top-K each group uses
};

/// Per KV group, one member head chosen uniformly from `rng_seed` donates its top-K.
GroupSelection select_randomized_group(const ScoreMatrix& scores, std::size_t seq_len, const TokenBudget& budget,
                                       const HeadGeometry& geometry, std::uint64_t rng_seed);

/// Sinks plus the last K - sinks tokens.
SelectionSet select_recency_only(std::size_t seq_len, const TokenBudget& budget);

enum class PolicyKind { Full, LessIsMore, HeadToHead, RandomizedGroup, RecencyOnly };

std::string_view policy_name(PolicyKind kind) noexcept;
std::optional<PolicyKind> parse_policy(std::string_view name) noexcept;

struct SelectionPolicy {
    PolicyKind kind = PolicyKind::LessIsMore;
    TokenBudget budget{};
    std::uint64_t seed = 0;
};

/// The selection in force at a layer, resolved per query head.
struct LayerSelection {
    std::vector<SelectionSet> sets;
    std::vector<std::size_t> set_of_head;

    const SelectionSet& for_head(std::size_t head) const { return sets.at(set_of_head.at(head)); }
    bool shared() const noexcept { return sets.size() == 1; }
    std::uint64_t fingerprint() const noexcept;

    static LayerSelection uniform(SelectionSet set, std::size_t num_query_heads);
};

/// Run `policy` on one layer's scores. `salt` distinguishes (step, layer)
/// for the randomized policy. Contexts no longer than K fall back to the full range.
LayerSelection apply_policy(const SelectionPolicy& policy, const ScoreMatrix& scores, std::size_t seq_len,
                            const HeadGeometry& geometry, std::uint64_t salt = 0);

} // namespace lim
