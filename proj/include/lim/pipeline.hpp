// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lim/attention.hpp"
#include "lim/model.hpp"
#include "lim/recall.hpp"
#include "lim/selection.hpp"

namespace lim {

enum class LayerRole : std::uint8_t { Full, Select, Sparse };

/// Role of every decoder layer within one decode step.
class LayerSchedule {
public:
    /// Throws ConfigError if a Sparse layer has no Select layer before it.
    explicit LayerSchedule(std::vector<LayerRole> roles);

    static LayerSchedule all_full(std::size_t num_layers);
    /// Full before the first select layer, Sparse after it except at the select layers.
    static LayerSchedule with_select_layers(std::size_t num_layers, std::span<const std::size_t> select_layers);
    /// Select at layer 2 and at num_layers / 2; layers 0-1 Full.
    static LayerSchedule default_for(std::size_t num_layers);
    /// "default", "full", "select:2,6", or one letter per layer from {F, S, P}.
    static LayerSchedule parse(std::string_view spec, std::size_t num_layers);

    std::size_t size() const noexcept { return roles_.size(); }
    LayerRole role(std::size_t layer) const { return roles_.at(layer); }
    std::span<const LayerRole> roles() const noexcept { return roles_; }
    std::vector<std::size_t> select_layers() const;
    std::string to_string() const;

private:
    std::vector<LayerRole> roles_;
};

struct DecodeOptions {
    SelectionPolicy policy{};
    /// Score every Select/Sparse layer against full-softmax weights.
    bool measure_recall = true;
    /// Keep each step's queries so the run can be exported as a trace.
    bool record_queries = false;
};

struct StepLog {
    /// Fingerprint of the selection each layer attended with; 0 for full attention.
    std::vector<std::uint64_t> selection_fingerprint;
    StepRecall recall;
};

/// Everything a single decode stream owns.
class DecodeState {
public:
    explicit DecodeState(const ModelConfig& config);

    KeyValueCache cache;
    /// Token buffer for the current step; reset at the start of each step.
    std::optional<LayerSelection> selection;
    std::size_t prompt_len = 0;
    std::size_t steps_decoded = 0;
    std::vector<StepLog> log;
    /// Per decode step, [num_layers x H*d] queries (only with record_queries).
    std::vector<Matrix<float>> recorded_queries;
};

/// Full attention over the prompt, one position at a time. Returns the
/// logits at the last prompt position. Throws EmptyContextError on an empty prompt.
std::vector<float> prefill(std::span<const std::uint32_t> prompt, const ModelWeights& model, DecodeState& state);

/// One decode step for `token` at the next position.
std::vector<float> decode_step(std::uint32_t token, const ModelWeights& model, const LayerSchedule& schedule,
                               DecodeState& state, const DecodeOptions& options);

struct GenerationResult {
    std::vector<std::uint32_t> tokens;  // newly generated ids
    bool stopped_on_eos = false;
    RecallReport report;
    DecodeState state;
};

/// Greedy decoding until EOS or max_new_tokens.
GenerationResult generate(std::span<const std::uint32_t> prompt, const ModelWeights& model,
                          const LayerSchedule& schedule, const DecodeOptions& options, std::size_t max_new_tokens);

} // namespace lim
