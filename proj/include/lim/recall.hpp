// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lim/selection.hpp"
#include "lim/tensor.hpp"

namespace lim {

/// Fraction of one head's softmax mass that falls on `selection`.
/// A selection covering every token returns exactly 1.0.
double attention_recall(std::span<const float> weights, std::span<const TokenIndex> selection);

/// Recall of every query head against the selection in force for it.
std::vector<double> head_recalls(const Matrix<float>& weights, const LayerSelection& selection);

/// Running mean: element t is the mean of series[0..t].
std::vector<double> cumulative_recall(std::span<const double> series);

/// Pairwise Jaccard similarity of per-head top-k sets. Symmetric, unit diagonal.
using OverlapMatrix = Matrix<double>;
OverlapMatrix head_overlap(const RankedHeadSelection& ranked);

/// Fraction of `topk` lying in the last `window` positions of the context.
double recency_coverage(std::span<const TokenIndex> topk, std::size_t seq_len, std::size_t window);

struct LayerRecall {
    std::size_t layer = 0;
    std::vector<double> heads;
    double mean = 1.0;
};

struct StepRecall {
    std::size_t step = 0;
    std::size_t seq_len = 0;
    std::vector<LayerRecall> layers;
    // Mean over layers of per-layer head means; 1.0 when nothing was measured.
    double mean = 1.0;
};

/// Builds a LayerRecall / StepRecall with the means filled in.
LayerRecall make_layer_recall(std::size_t layer, std::vector<double> heads);
StepRecall make_step_recall(std::size_t step, std::size_t seq_len, std::vector<LayerRecall> layers);

/// Recall measurements of one run (a generation or a trace replay).
struct RecallReport {
    std::string policy;
    TokenBudget budget{};
    std::vector<StepRecall> steps;
    std::size_t generation_length = 0;

    std::vector<double> step_means() const;
    std::vector<double> cumulative() const;
    /// Mean of per-step means; 1.0 for an empty report.
    double mean_recall() const;
    double final_cumulative() const;
};

} // namespace lim
