// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#include "lim/replay.hpp"

#include <algorithm>
#include <string>

#include "lim/errors.hpp"

namespace lim {

namespace {

// Logits and weights of every query head of one recorded layer.
AttentionScores layer_scores(const TraceHeader& h, const StepRecord& rec, std::size_t r,
                             const std::vector<std::vector<float>>& keys) {
    const HeadGeometry g = h.geometry();
    const std::size_t n = keys[r * g.num_kv_heads].size() / g.head_dim;
    AttentionScores s{Matrix<float>(g.num_query_heads, n), Matrix<float>(g.num_query_heads, n)};
    for (std::size_t head = 0; head < g.num_query_heads; ++head) {
        auto raw = scaled_dot_scores(rec.query(h, r, head), keys[r * g.num_kv_heads + g.kv_head_for(head)],
                                     g.head_dim);
        std::copy(raw.begin(), raw.end(), s.raw.row(head).begin());
        softmax_normalize(s.raw.row(head), s.weights.row(head));
    }
    return s;
}

std::vector<std::vector<float>> initial_keys(const TraceHeader& h) {
    std::vector<std::vector<float>> keys(h.num_recorded() * h.num_kv_heads);
    const std::size_t block = static_cast<std::size_t>(h.prompt_len) * h.head_dim;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        auto src = std::span<const float>(h.prompt_keys).subspan(i * block, block);
        keys[i].assign(src.begin(), src.end());
    }
    return keys;
}

void append_keys(const TraceHeader& h, const StepRecord& rec, std::vector<std::vector<float>>& keys) {
    for (std::size_t r = 0; r < h.num_recorded(); ++r) {
        for (std::size_t kv = 0; kv < h.num_kv_heads; ++kv) {
            auto k = rec.key(h, r, kv);
            keys[r * h.num_kv_heads + kv].insert(keys[r * h.num_kv_heads + kv].end(), k.begin(), k.end());
        }
    }
}

void check_record(const TraceHeader& h, const StepRecord& rec, std::size_t expected_step) {
    if (rec.queries.size() != h.query_floats() || rec.keys.size() != h.key_floats()) {
        throw ShapeError("step record does not match trace geometry");
    }
    if (rec.step != expected_step) {
        throw ConfigError("replay needs contiguous steps: expected " + std::to_string(expected_step) + ", got " +
                          std::to_string(rec.step));
    }
}

} // namespace

ReplayEngine::ReplayEngine(const TraceHeader& header, ReplayOptions options)
    : header_(header), options_(std::move(options)), is_select_(header.num_recorded(), false) {
    header_.validate();
    if (options_.policy.kind != PolicyKind::Full) {
        options_.policy.budget.validate();
    }
    if (options_.select_layers.empty()) {
        options_.select_layers.push_back(header_.recorded_layers.front());
    }
    for (std::uint32_t layer : options_.select_layers) {
        auto it = std::find(header_.recorded_layers.begin(), header_.recorded_layers.end(), layer);
        if (it == header_.recorded_layers.end()) {
            throw ConfigError("select layer " + std::to_string(layer) + " is not recorded in the trace");
        }
        is_select_[static_cast<std::size_t>(it - header_.recorded_layers.begin())] = true;
    }
    keys_ = initial_keys(header_);
    report_.policy = std::string(policy_name(options_.policy.kind));
    report_.budget = options_.policy.budget;
}

const StepRecall& ReplayEngine::step(const StepRecord& record) {
    check_record(header_, record, report_.steps.size());
    append_keys(header_, record, keys_);
    const HeadGeometry g = header_.geometry();
    const std::size_t seq_len = header_.prompt_len + record.step + 1;
    std::optional<LayerSelection> current;
    std::vector<LayerRecall> layers;
    for (std::size_t r = 0; r < header_.num_recorded(); ++r) {
        if (!is_select_[r] && !current) continue;
        const AttentionScores s = layer_scores(header_, record, r, keys_);
        const std::uint32_t layer = header_.recorded_layers[r];
        if (is_select_[r]) {
            const std::uint64_t salt = static_cast<std::uint64_t>(record.step) * header_.num_layers + layer;
            current = apply_policy(options_.policy, s.raw, seq_len, g, salt);
        }
        layers.push_back(make_layer_recall(layer, head_recalls(s.weights, *current)));
    }
    report_.steps.push_back(make_step_recall(record.step, seq_len, std::move(layers)));
    report_.generation_length = report_.steps.size();
    return report_.steps.back();
}

RecallReport replay_policy(const Trace& trace, const ReplayOptions& options) {
    ReplayEngine engine(trace.header, options);
    for (const auto& rec : trace.steps) engine.step(rec);
    return engine.report();
}

RecallReport replay_policy(TraceReader& reader, const ReplayOptions& options) {
    ReplayEngine engine(reader.header(), options);
    StepRecord rec;
    while (reader.next(rec)) engine.step(rec);
    return engine.report();
}

namespace {

class OverlapAccumulator {
public:
    OverlapAccumulator(const TraceHeader& h, std::size_t top_k) : header_(h), top_k_(top_k), keys_(initial_keys(h)) {
        header_.validate();
        if (top_k_ == 0) {
            throw BudgetError("overlap top-k must be >= 1");
        }
    }

    void step(const StepRecord& rec) {
        check_record(header_, rec, steps_);
        append_keys(header_, rec, keys_);
        for (std::size_t r = 0; r < header_.num_recorded(); ++r) {
            const AttentionScores s = layer_scores(header_, rec, r, keys_);
            const std::size_t k = std::min(top_k_, s.raw.cols());
            out.push_back({rec.step, header_.recorded_layers[r], head_overlap(per_head_topk(s.raw, k, 0))});
        }
        ++steps_;
    }

    std::vector<OverlapEntry> out;

private:
    TraceHeader header_;
    std::size_t top_k_;
    std::vector<std::vector<float>> keys_;
    std::size_t steps_ = 0;
};

} // namespace

std::vector<OverlapEntry> overlap_analysis(TraceReader& reader, std::size_t top_k) {
    OverlapAccumulator acc(reader.header(), top_k);
    StepRecord rec;
    while (reader.next(rec)) acc.step(rec);
    return std::move(acc.out);
}

std::vector<OverlapEntry> overlap_analysis(const Trace& trace, std::size_t top_k) {
    OverlapAccumulator acc(trace.header, top_k);
    for (const auto& rec : trace.steps) acc.step(rec);
    return std::move(acc.out);
}

Trace trace_from_run(const DecodeState& state, const ModelConfig& config, std::span<const std::uint32_t> layers) {
    const HeadGeometry& g = config.geometry;
    if (state.recorded_queries.size() != state.steps_decoded) {
        throw ConfigError("run was not made with record_queries");
    }
    Trace t;
    TraceHeader& h = t.header;
    h.num_layers = static_cast<std::uint32_t>(config.num_layers);
    h.num_query_heads = static_cast<std::uint32_t>(g.num_query_heads);
    h.num_kv_heads = static_cast<std::uint32_t>(g.num_kv_heads);
    h.head_dim = static_cast<std::uint32_t>(g.head_dim);
    h.prompt_len = static_cast<std::uint32_t>(state.prompt_len);
    h.recorded_layers.assign(layers.begin(), layers.end());
    for (std::uint32_t l : layers) {
        for (std::size_t kv = 0; kv < g.num_kv_heads; ++kv) {
            auto keys = state.cache.keys(l, kv).first(state.prompt_len * g.head_dim);
            h.prompt_keys.insert(h.prompt_keys.end(), keys.begin(), keys.end());
        }
    }
    h.validate();
    for (std::size_t s = 0; s < state.steps_decoded; ++s) {
        StepRecord rec;
        rec.step = static_cast<std::uint32_t>(s);
        for (std::uint32_t l : layers) {
            auto q = state.recorded_queries[s].row(l);
            rec.queries.insert(rec.queries.end(), q.begin(), q.end());
            for (std::size_t kv = 0; kv < g.num_kv_heads; ++kv) {
                auto k = state.cache.key(l, kv, state.prompt_len + s);
                rec.keys.insert(rec.keys.end(), k.begin(), k.end());
            }
        }
        t.steps.push_back(std::move(rec));
    }
    return t;
}

} // namespace lim
