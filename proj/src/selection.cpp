// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#include "lim/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "lim/errors.hpp"
#include "lim/rng.hpp"

namespace lim {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

std::uint64_t fnv_mix(std::uint64_t h, std::uint64_t v) noexcept {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffu;
        h *= kFnvPrime;
    }
    return h;
}

// Best-first order: higher score wins, equal scores go to the lower index.
std::vector<TokenIndex> topk_row(std::span<const float> row, std::size_t k, std::size_t eligible) {
    std::vector<TokenIndex> idx(eligible);
    std::iota(idx.begin(), idx.end(), TokenIndex{0});
    auto better = [row](TokenIndex a, TokenIndex b) {
        return row[a] > row[b] || (row[a] == row[b] && a < b);
    };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
    idx.resize(k);
    return idx;
}

SelectionSet sorted_topk_set(std::vector<TokenIndex> idx) {
    std::sort(idx.begin(), idx.end());
    std::vector<Provenance> prov(idx.size(), Provenance::TopK);
    return SelectionSet(std::move(idx), std::move(prov));
}

void check_scores(const ScoreMatrix& scores, std::size_t seq_len) {
    if (scores.cols() != seq_len) {
        throw ShapeError("score matrix has " + std::to_string(scores.cols()) + " columns, expected " +
                         std::to_string(seq_len));
    }
    if (scores.rows() == 0) {
        throw ShapeError("score matrix has no heads");
    }
}

} // namespace

void TokenBudget::validate() const {
    if (total == 0) {
        throw BudgetError("token budget must be >= 1");
    }
    if (!(recency_ratio >= 0.0 && recency_ratio <= 1.0)) {
        throw BudgetError("recency ratio must lie in [0, 1]");
    }
}

std::size_t TokenBudget::recent_count() const noexcept {
    const double exact = static_cast<double>(total) * recency_ratio;
    const auto n = static_cast<std::size_t>(std::floor(exact + 1e-9));
    return std::min(n, total);
}

BudgetSplit split_budget(const TokenBudget& budget, std::size_t seq_len) {
    budget.validate();
    BudgetSplit s;
    s.sinks = std::min({budget.sink_count, budget.total, seq_len});
    s.recent = std::min(budget.recent_count(), budget.total - s.sinks);
    s.topk = budget.total - s.sinks - s.recent;
    return s;
}

SelectionSet::SelectionSet(std::vector<TokenIndex> indices, std::vector<Provenance> provenance)
    : indices_(std::move(indices)), provenance_(std::move(provenance)) {
    if (indices_.size() != provenance_.size()) {
        throw ShapeError("selection provenance size mismatch");
    }
    for (std::size_t i = 1; i < indices_.size(); ++i) {
        if (indices_[i] <= indices_[i - 1]) {
            throw IndexError("selection indices must be strictly increasing");
        }
    }
}

SelectionSet SelectionSet::full_range(std::size_t seq_len, const BudgetSplit& split) {
    std::vector<TokenIndex> idx(seq_len);
    std::iota(idx.begin(), idx.end(), TokenIndex{0});
    std::vector<Provenance> prov(seq_len, Provenance::TopK);
    const std::size_t window_start = seq_len - std::min(split.recent, seq_len);
    for (std::size_t i = 0; i < seq_len; ++i) {
        if (i < split.sinks) {
            prov[i] = Provenance::Sink;
        } else if (i >= window_start) {
            prov[i] = Provenance::Recent;
        }
    }
    return SelectionSet(std::move(idx), std::move(prov));
}

bool SelectionSet::contains(TokenIndex idx) const noexcept {
    return std::binary_search(indices_.begin(), indices_.end(), idx);
}

bool SelectionSet::covers(std::size_t seq_len) const noexcept {
    // Strictly increasing and in range, so size alone decides.
    return indices_.size() == seq_len && (seq_len == 0 || indices_.back() == seq_len - 1);
}

std::uint64_t SelectionSet::fingerprint() const noexcept {
    std::uint64_t h = kFnvOffset;
    for (TokenIndex i : indices_) {
        h = fnv_mix(h, i);
    }
    return fnv_mix(h, indices_.size());
}

RankedHeadSelection per_head_topk(const ScoreMatrix& scores, std::size_t k, std::size_t exclude_tail) {
    const std::size_t seq_len = scores.cols();
    if (exclude_tail > seq_len || k > seq_len - exclude_tail) {
        throw BudgetError("top-k of " + std::to_string(k) + " exceeds eligible length " +
                          std::to_string(exclude_tail > seq_len ? 0 : seq_len - exclude_tail));
    }
    for (float v : scores.flat()) {
        if (!std::isfinite(v)) {
            throw NumericError("non-finite score passed to top-k");
        }
    }
    RankedHeadSelection out;
    out.heads.reserve(scores.rows());
    for (std::size_t h = 0; h < scores.rows(); ++h) {
        out.heads.push_back(topk_row(scores.row(h), k, seq_len - exclude_tail));
    }
    return out;
}

std::vector<TokenIndex> union_flatten(const RankedHeadSelection& ranked, std::size_t limit) {
    std::size_t depth = 0;
    TokenIndex largest = 0;
    for (const auto& head : ranked.heads) {
        depth = std::max(depth, head.size());
        for (TokenIndex t : head) largest = std::max(largest, t);
    }
    std::vector<TokenIndex> out;
    if (limit == 0 || depth == 0) {
        return out;
    }
    std::vector<bool> seen(largest + 1, false);
    for (std::size_t rank = 0; rank < depth; ++rank) {
        for (const auto& head : ranked.heads) {
            if (rank >= head.size() || seen[head[rank]]) continue;
            seen[head[rank]] = true;
            out.push_back(head[rank]);
            if (out.size() == limit) return out;
        }
    }
    return out;
}

std::vector<TokenIndex> recent_window(std::size_t seq_len, std::size_t n) {
    const std::size_t count = std::min(n, seq_len);
    std::vector<TokenIndex> out(count);
    std::iota(out.begin(), out.end(), seq_len - count);
    return out;
}

SelectionSet assemble_selection(std::span<const TokenIndex> unified, std::size_t seq_len, const TokenBudget& budget) {
    const BudgetSplit split = split_budget(budget, seq_len);
    if (budget.total >= seq_len) {
        return SelectionSet::full_range(seq_len, split);
    }
    constexpr std::uint8_t kFree = 0xff;
    std::vector<std::uint8_t> role(seq_len, kFree);
    for (std::size_t i = 0; i < split.sinks; ++i) {
        role[i] = static_cast<std::uint8_t>(Provenance::Sink);
    }
    for (TokenIndex i : recent_window(seq_len, split.recent)) {
        role[i] = static_cast<std::uint8_t>(Provenance::Recent);
    }
    std::size_t taken = 0;
    for (TokenIndex idx : unified) {
        if (taken == split.topk) break;
        if (idx >= seq_len) {
            throw IndexError("unified candidate " + std::to_string(idx) + " >= sequence length " +
                             std::to_string(seq_len));
        }
        if (role[idx] != kFree) continue;
        role[idx] = static_cast<std::uint8_t>(Provenance::TopK);
        ++taken;
    }
    std::vector<TokenIndex> idx;
    std::vector<Provenance> prov;
    idx.reserve(budget.total);
    prov.reserve(budget.total);
    for (std::size_t i = 0; i < seq_len; ++i) {
        if (role[i] == kFree) continue;
        idx.push_back(i);
        prov.push_back(static_cast<Provenance>(role[i]));
    }
    return SelectionSet(std::move(idx), std::move(prov));
}

SelectionSet select_lessismore(const ScoreMatrix& scores, std::size_t seq_len, const TokenBudget& budget) {
    budget.validate();
    check_scores(scores, seq_len);
    if (budget.total >= seq_len) {
        return SelectionSet::full_range(seq_len, split_budget(budget, seq_len));
    }
    const BudgetSplit split = split_budget(budget, seq_len);
    const std::size_t per_head = budget.total - split.recent;
    const RankedHeadSelection ranked = per_head_topk(scores, per_head, split.recent);
    const std::vector<TokenIndex> unified = union_flatten(ranked, std::numeric_limits<std::size_t>::max());
    return assemble_selection(unified, seq_len, budget);
}

std::vector<SelectionSet> select_head_to_head(const ScoreMatrix& scores, std::size_t seq_len,
                                              const TokenBudget& budget) {
    budget.validate();
    check_scores(scores, seq_len);
    std::vector<SelectionSet> out;
    out.reserve(scores.rows());
    if (budget.total >= seq_len) {
        out.assign(scores.rows(), SelectionSet::full_range(seq_len));
        return out;
    }
    RankedHeadSelection ranked = per_head_topk(scores, budget.total, 0);
    for (auto& head : ranked.heads) {
        out.push_back(sorted_topk_set(std::move(head)));
    }
    return out;
}

GroupSelection select_randomized_group(const ScoreMatrix& scores, std::size_t seq_len, const TokenBudget& budget,
                                       const HeadGeometry& geometry, std::uint64_t rng_seed) {
    budget.validate();
    geometry.validate();
    check_scores(scores, seq_len);
    if (scores.rows() != geometry.num_query_heads) {
        throw ShapeError("score rows must equal num_query_heads");
    }
    for (float v : scores.flat()) {
        if (!std::isfinite(v)) {
            throw NumericError("non-finite score passed to top-k");
        }
    }
    SplitMix64 rng(rng_seed);
    const std::size_t group = geometry.group_size();
    GroupSelection out;
    for (std::size_t g = 0; g < geometry.num_kv_heads; ++g) {
        const std::size_t head = g * group + static_cast<std::size_t>(rng.below(group));
        out.chosen_heads.push_back(head);
        if (budget.total >= seq_len) {
            out.sets.push_back(SelectionSet::full_range(seq_len));
        } else {
            out.sets.push_back(sorted_topk_set(topk_row(scores.row(head), budget.total, seq_len)));
        }
    }
    return out;
}

SelectionSet select_recency_only(std::size_t seq_len, const TokenBudget& budget) {
    budget.validate();
    const std::size_t sinks = std::min(budget.sink_count, budget.total);
    if (budget.total >= seq_len) {
        return SelectionSet::full_range(seq_len, BudgetSplit{std::min(sinks, seq_len), seq_len, 0});
    }
    std::vector<TokenIndex> idx;
    std::vector<Provenance> prov;
    for (std::size_t i = 0; i < sinks; ++i) {
        idx.push_back(i);
        prov.push_back(Provenance::Sink);
    }
    for (TokenIndex i : recent_window(seq_len, budget.total - sinks)) {
        idx.push_back(i);
        prov.push_back(Provenance::Recent);
    }
    return SelectionSet(std::move(idx), std::move(prov));
}

std::string_view policy_name(PolicyKind kind) noexcept {
    switch (kind) {
    case PolicyKind::Full: return "full";
    case PolicyKind::LessIsMore: return "lessismore";
    case PolicyKind::HeadToHead: return "head2head";
    case PolicyKind::RandomizedGroup: return "randgroup";
    case PolicyKind::RecencyOnly: return "recency";
    }
    return "unknown";
}

std::optional<PolicyKind> parse_policy(std::string_view name) noexcept {
    for (PolicyKind k : {PolicyKind::Full, PolicyKind::LessIsMore, PolicyKind::HeadToHead,
                         PolicyKind::RandomizedGroup, PolicyKind::RecencyOnly}) {
        if (policy_name(k) == name) return k;
    }
    return std::nullopt;
}

std::uint64_t LayerSelection::fingerprint() const noexcept {
    std::uint64_t h = kFnvOffset;
    for (const auto& s : sets) {
        h = fnv_mix(h, s.fingerprint());
    }
    for (std::size_t i : set_of_head) {
        h = fnv_mix(h, i);
    }
    return h;
}

LayerSelection LayerSelection::uniform(SelectionSet set, std::size_t num_query_heads) {
    LayerSelection out;
    out.sets.push_back(std::move(set));
    out.set_of_head.assign(num_query_heads, 0);
    return out;
}

LayerSelection apply_policy(const SelectionPolicy& policy, const ScoreMatrix& scores, std::size_t seq_len,
                            const HeadGeometry& geometry, std::uint64_t salt) {
    const std::size_t heads = geometry.num_query_heads;
    switch (policy.kind) {
    case PolicyKind::Full:
        return LayerSelection::uniform(SelectionSet::full_range(seq_len), heads);
    case PolicyKind::LessIsMore:
        return LayerSelection::uniform(select_lessismore(scores, seq_len, policy.budget), heads);
    case PolicyKind::RecencyOnly:
        return LayerSelection::uniform(select_recency_only(seq_len, policy.budget), heads);
    case PolicyKind::HeadToHead: {
        LayerSelection out;
        out.sets = select_head_to_head(scores, seq_len, policy.budget);
        out.set_of_head.resize(heads);
        std::iota(out.set_of_head.begin(), out.set_of_head.end(), std::size_t{0});
        return out;
    }
    case PolicyKind::RandomizedGroup: {
        GroupSelection g =
            select_randomized_group(scores, seq_len, policy.budget, geometry, derive_seed(policy.seed, salt));
        LayerSelection out;
        out.sets = std::move(g.sets);
        out.set_of_head.resize(heads);
        for (std::size_t h = 0; h < heads; ++h) out.set_of_head[h] = geometry.kv_head_for(h);
        return out;
    }
    }
    throw ConfigError("unknown selection policy");
}

} // namespace lim
