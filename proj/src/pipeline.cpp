// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#include "lim/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>

#include "lim/errors.hpp"

namespace lim {

LayerSchedule::LayerSchedule(std::vector<LayerRole> roles) : roles_(std::move(roles)) {
    if (roles_.empty()) {
        throw ConfigError("schedule needs at least one layer");
    }
    bool seen_select = false;
    for (std::size_t l = 0; l < roles_.size(); ++l) {
        if (roles_[l] == LayerRole::Select) seen_select = true;
        if (roles_[l] == LayerRole::Sparse && !seen_select) {
            throw ConfigError("sparse layer " + std::to_string(l) + " has no preceding select layer");
        }
    }
}

LayerSchedule LayerSchedule::all_full(std::size_t num_layers) {
    return LayerSchedule(std::vector<LayerRole>(num_layers, LayerRole::Full));
}

LayerSchedule LayerSchedule::with_select_layers(std::size_t num_layers, std::span<const std::size_t> select_layers) {
    std::set<std::size_t> selects(select_layers.begin(), select_layers.end());
    if (!selects.empty() && *selects.rbegin() >= num_layers) {
        throw ConfigError("select layer " + std::to_string(*selects.rbegin()) + " out of range");
    }
    std::vector<LayerRole> roles(num_layers, LayerRole::Full);
    if (!selects.empty()) {
        for (std::size_t l = *selects.begin(); l < num_layers; ++l) {
            roles[l] = selects.count(l) ? LayerRole::Select : LayerRole::Sparse;
        }
    }
    return LayerSchedule(std::move(roles));
}

LayerSchedule LayerSchedule::default_for(std::size_t num_layers) {
    std::vector<std::size_t> selects;
    if (num_layers > 2) selects.push_back(2);
    if (num_layers / 2 > 2) selects.push_back(num_layers / 2);
    return with_select_layers(num_layers, selects);
}

LayerSchedule LayerSchedule::parse(std::string_view spec, std::size_t num_layers) {
    if (spec == "default") return default_for(num_layers);
    if (spec == "full") return all_full(num_layers);
    if (spec.starts_with("select:")) {
        std::vector<std::size_t> layers;
        std::string_view rest = spec.substr(7);
        while (!rest.empty()) {
            const auto comma = rest.find(',');
            const std::string_view item = rest.substr(0, comma);
            std::size_t value = 0;
            auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
            if (ec != std::errc{} || ptr != item.data() + item.size()) {
                throw ConfigError("bad select layer '" + std::string(item) + "'");
            }
            layers.push_back(value);
            if (comma == std::string_view::npos) break;
            rest = rest.substr(comma + 1);
        }
        return with_select_layers(num_layers, layers);
    }
    if (spec.size() != num_layers) {
        throw ConfigError("schedule '" + std::string(spec) + "' has " + std::to_string(spec.size()) +
                          " layers, model has " + std::to_string(num_layers));
    }
    std::vector<LayerRole> roles;
    for (char c : spec) {
        switch (std::toupper(static_cast<unsigned char>(c))) {
        case 'F': roles.push_back(LayerRole::Full); break;
        case 'S': roles.push_back(LayerRole::Select); break;
        case 'P': roles.push_back(LayerRole::Sparse); break;
        default: throw ConfigError(std::string("unknown layer role '") + c + "'");
        }
    }
    return LayerSchedule(std::move(roles));
}

std::vector<std::size_t> LayerSchedule::select_layers() const {
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l < roles_.size(); ++l) {
        if (roles_[l] == LayerRole::Select) out.push_back(l);
    }
    return out;
}

std::string LayerSchedule::to_string() const {
    std::string s;
    for (LayerRole r : roles_) {
        s.push_back(r == LayerRole::Full ? 'F' : r == LayerRole::Select ? 'S' : 'P');
    }
    return s;
}

DecodeState::DecodeState(const ModelConfig& config)
    : cache(config.num_layers, config.geometry.num_kv_heads, config.geometry.head_dim) {}

namespace {

std::vector<float> attend_with(const LayerSelection& sel, std::span<const float> q, const KeyValueCache& cache,
                               std::size_t layer, const HeadGeometry& g) {
    if (sel.shared()) {
        return sparse_attention(q, cache, layer, g, sel.sets.front().indices());
    }
    std::vector<std::span<const TokenIndex>> per_head(g.num_query_heads);
    for (std::size_t h = 0; h < g.num_query_heads; ++h) {
        per_head[h] = sel.for_head(h).indices();
    }
    return sparse_attention(q, cache, layer, g, per_head);
}

} // namespace

std::vector<float> prefill(std::span<const std::uint32_t> prompt, const ModelWeights& model, DecodeState& state) {
    if (prompt.empty()) {
        throw EmptyContextError("prefill needs a non-empty prompt");
    }
    if (state.cache.length(0) != 0) {
        throw ConfigError("prefill on a non-empty cache");
    }
    const ModelConfig& cfg = model.config;
    std::vector<float> h(cfg.model_dim());
    std::vector<float> logits;
    for (std::size_t pos = 0; pos < prompt.size(); ++pos) {
        embed_token(model, prompt[pos], pos, h);
        for (std::size_t l = 0; l < cfg.num_layers; ++l) {
            const LayerWeights& layer = model.layers[l];
            Projections p = project_qkv(cfg, layer, h);
            state.cache.append(l, p.k, p.v);
            add_attention_output(layer, full_attention(p.q, state.cache, l, cfg.geometry), h);
            add_ffn(cfg, layer, h);
        }
    }
    state.prompt_len = prompt.size();
    return lm_head_logits(model, h);
}

std::vector<float> decode_step(std::uint32_t token, const ModelWeights& model, const LayerSchedule& schedule,
                               DecodeState& state, const DecodeOptions& options) {
    const ModelConfig& cfg = model.config;
    const HeadGeometry& g = cfg.geometry;
    if (state.prompt_len == 0) {
        throw ConfigError("decode_step before prefill");
    }
    if (schedule.size() != cfg.num_layers) {
        throw ConfigError("schedule has " + std::to_string(schedule.size()) + " layers, model has " +
                          std::to_string(cfg.num_layers));
    }
    const std::size_t pos = state.cache.length(0);
    const std::size_t seq_len = pos + 1;
    std::vector<float> h(cfg.model_dim());
    embed_token(model, token, pos, h);

    state.selection.reset();
    StepLog entry;
    entry.selection_fingerprint.assign(cfg.num_layers, 0);
    std::vector<LayerRecall> recalls;
    if (options.record_queries) {
        state.recorded_queries.emplace_back(cfg.num_layers, g.query_width());
    }

    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        const LayerWeights& layer = model.layers[l];
        Projections p = project_qkv(cfg, layer, h);
        state.cache.append(l, p.k, p.v);
        if (options.record_queries) {
            std::copy(p.q.begin(), p.q.end(), state.recorded_queries.back().row(l).begin());
        }
        std::vector<float> out;
        switch (schedule.role(l)) {
        case LayerRole::Full:
            out = full_attention(p.q, state.cache, l, g);
            break;
        case LayerRole::Select: {
            AttentionScores scores;
            out = full_attention(p.q, state.cache, l, g, nullptr, &scores);
            const std::uint64_t salt = state.steps_decoded * cfg.num_layers + l;
            state.selection = apply_policy(options.policy, scores.raw, seq_len, g, salt);
            entry.selection_fingerprint[l] = state.selection->fingerprint();
            if (options.measure_recall) {
                recalls.push_back(make_layer_recall(l, head_recalls(scores.weights, *state.selection)));
            }
            break;
        }
        case LayerRole::Sparse: {
            if (!state.selection) {
                throw ConfigError("sparse layer " + std::to_string(l) + " reached before any selection");
            }
            out = attend_with(*state.selection, p.q, state.cache, l, g);
            entry.selection_fingerprint[l] = state.selection->fingerprint();
            if (options.measure_recall) {
                const AttentionScores truth = attention_scores(p.q, state.cache, l, g);
                recalls.push_back(make_layer_recall(l, head_recalls(truth.weights, *state.selection)));
            }
            break;
        }
        }
        add_attention_output(layer, out, h);
        add_ffn(cfg, layer, h);
    }
    entry.recall = make_step_recall(state.steps_decoded, seq_len, std::move(recalls));
    state.log.push_back(std::move(entry));
    ++state.steps_decoded;
    return lm_head_logits(model, h);
}

GenerationResult generate(std::span<const std::uint32_t> prompt, const ModelWeights& model,
                          const LayerSchedule& schedule, const DecodeOptions& options, std::size_t max_new_tokens) {
    if (max_new_tokens == 0) {
        throw ConfigError("max_new_tokens must be >= 1");
    }
    if (options.policy.kind != PolicyKind::Full) {
        options.policy.budget.validate();
    }
    GenerationResult result{{}, false, {}, DecodeState(model.config)};
    std::vector<float> logits = prefill(prompt, model, result.state);
    for (std::size_t i = 0; i < max_new_tokens; ++i) {
        const std::uint32_t tok = argmax_token(logits);
        result.tokens.push_back(tok);
        if (model.config.eos_token && tok == *model.config.eos_token) {
            result.stopped_on_eos = true;
            break;
        }
        if (i + 1 < max_new_tokens) {
            logits = decode_step(tok, model, schedule, result.state, options);
        }
    }
    result.report.policy = std::string(policy_name(options.policy.kind));
    result.report.budget = options.policy.budget;
    result.report.generation_length = result.tokens.size();
    for (const StepLog& s : result.state.log) {
        result.report.steps.push_back(s.recall);
    }
    return result;
}

} // namespace lim
