// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#include "lim/recall.hpp"

#include <algorithm>
#include <string>

#include "lim/errors.hpp"

namespace lim {

double attention_recall(std::span<const float> weights, std::span<const TokenIndex> selection) {
    for (TokenIndex i : selection) {
        if (i >= weights.size()) {
            throw IndexError("selection index " + std::to_string(i) + " outside " + std::to_string(weights.size()) +
                             " weights");
        }
    }
    if (selection.size() == weights.size() && std::is_sorted(selection.begin(), selection.end()) &&
        std::adjacent_find(selection.begin(), selection.end()) == selection.end()) {
        return 1.0;
    }
    double total = 0.0;
    for (float w : weights) total += w;
    if (total <= 0.0) {
        return 0.0;
    }
    double picked = 0.0;
    for (TokenIndex i : selection) picked += weights[i];
    return std::clamp(picked / total, 0.0, 1.0);
}

std::vector<double> head_recalls(const Matrix<float>& weights, const LayerSelection& selection) {
    if (selection.set_of_head.size() != weights.rows()) {
        throw ShapeError("selection does not cover every head");
    }
    std::vector<double> out(weights.rows());
    for (std::size_t h = 0; h < weights.rows(); ++h) {
        out[h] = attention_recall(weights.row(h), selection.for_head(h).indices());
    }
    return out;
}

std::vector<double> cumulative_recall(std::span<const double> series) {
    std::vector<double> out(series.size());
    double sum = 0.0;
    for (std::size_t t = 0; t < series.size(); ++t) {
        sum += series[t];
        out[t] = sum / static_cast<double>(t + 1);
    }
    return out;
}

OverlapMatrix head_overlap(const RankedHeadSelection& ranked) {
    const std::size_t n = ranked.heads.size();
    std::vector<std::vector<TokenIndex>> sorted(ranked.heads);
    for (auto& s : sorted) {
        std::sort(s.begin(), s.end());
        s.erase(std::unique(s.begin(), s.end()), s.end());
    }
    OverlapMatrix m(n, n, 1.0);
    std::vector<TokenIndex> scratch;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            scratch.clear();
            std::set_intersection(sorted[i].begin(), sorted[i].end(), sorted[j].begin(), sorted[j].end(),
                                  std::back_inserter(scratch));
            const std::size_t inter = scratch.size();
            const std::size_t uni = sorted[i].size() + sorted[j].size() - inter;
            const double jac = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
            m(i, j) = jac;
            m(j, i) = jac;
        }
    }
    return m;
}

double recency_coverage(std::span<const TokenIndex> topk, std::size_t seq_len, std::size_t window) {
    if (topk.empty()) {
        return 0.0;
    }
    const std::size_t start = seq_len - std::min(window, seq_len);
    std::size_t inside = 0;
    for (TokenIndex i : topk) {
        if (i >= seq_len) {
            throw IndexError("top-k index " + std::to_string(i) + " outside context");
        }
        if (i >= start) ++inside;
    }
    return static_cast<double>(inside) / static_cast<double>(topk.size());
}

LayerRecall make_layer_recall(std::size_t layer, std::vector<double> heads) {
    LayerRecall r{layer, std::move(heads), 1.0};
    if (!r.heads.empty()) {
        double s = 0.0;
        for (double v : r.heads) s += v;
        r.mean = s / static_cast<double>(r.heads.size());
    }
    return r;
}

StepRecall make_step_recall(std::size_t step, std::size_t seq_len, std::vector<LayerRecall> layers) {
    StepRecall r{step, seq_len, std::move(layers), 1.0};
    if (!r.layers.empty()) {
        double s = 0.0;
        for (const auto& l : r.layers) s += l.mean;
        r.mean = s / static_cast<double>(r.layers.size());
    }
    return r;
}

std::vector<double> RecallReport::step_means() const {
    std::vector<double> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(s.mean);
    return out;
}

std::vector<double> RecallReport::cumulative() const {
    return cumulative_recall(step_means());
}

double RecallReport::mean_recall() const {
    if (steps.empty()) return 1.0;
    return cumulative().back();
}

double RecallReport::final_cumulative() const {
    return mean_recall();
}

} // namespace lim
