// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lim/model.hpp"
#include "lim/pipeline.hpp"
#include "lim/recall.hpp"
#include "lim/selection.hpp"
#include "lim/trace.hpp"

namespace lim {

struct ReplayOptions {
    SelectionPolicy policy{};
    /// Model layer ids (must be recorded) that recompute the selection.
    /// Empty means the first recorded layer.
    std::vector<std::uint32_t> select_layers;
};

/// Offline policy evaluation over a recorded trace. Each step recomputes the
/// logits from stored queries and keys, re-selects at select layers and scores
/// every recorded layer from the first select layer on against full softmax.
class ReplayEngine {
public:
    ReplayEngine(const TraceHeader& header, ReplayOptions options);

    /// Steps must arrive contiguously from 0.
    const StepRecall& step(const StepRecord& record);
    const RecallReport& report() const noexcept { return report_; }

private:
    TraceHeader header_;
    ReplayOptions options_;
    std::vector<bool> is_select_;
    std::vector<std::vector<float>> keys_;  // [recorded * kv] -> [tokens x d]
    RecallReport report_;
};

RecallReport replay_policy(const Trace& trace, const ReplayOptions& options);
RecallReport replay_policy(TraceReader& reader, const ReplayOptions& options);

struct OverlapEntry {
    std::size_t step = 0;
    std::uint32_t layer = 0;
    OverlapMatrix jaccard;
};

/// Jaccard overlap of the true per-head top-K sets at every step and recorded layer.
std::vector<OverlapEntry> overlap_analysis(TraceReader& reader, std::size_t top_k);
std::vector<OverlapEntry> overlap_analysis(const Trace& trace, std::size_t top_k);

/// Package a decode run (made with record_queries) as a trace of `layers`.
Trace trace_from_run(const DecodeState& state, const ModelConfig& config, std::span<const std::uint32_t> layers);

} // namespace lim
