// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "lim/errors.hpp"
#include "lim/model.hpp"
#include "lim/pipeline.hpp"
#include "lim/rng.hpp"

namespace {

using lim::DecodeOptions;
using lim::LayerRole;
using lim::LayerSchedule;
using lim::ModelConfig;
using lim::PolicyKind;

ModelConfig small_config() {
    ModelConfig c;
    c.vocab_size = 64;
    c.num_layers = 6;
    c.geometry = {4, 2, 8};
    c.ffn_dim = 64;
    c.max_seq_len = 256;
    c.seed = 11;
    return c;
}

std::vector<std::uint32_t> prompt_of(std::size_t n, std::uint64_t seed, std::size_t vocab) {
    lim::SplitMix64 rng(seed);
    std::vector<std::uint32_t> p(n);
    for (auto& t : p) t = static_cast<std::uint32_t>(rng.below(vocab));
    return p;
}

DecodeOptions options(PolicyKind kind, std::size_t budget, double ratio = 0.25, std::size_t sinks = 2) {
    DecodeOptions o;
    o.policy = {kind, {budget, ratio, sinks}, 1};
    return o;
}

TEST(LayerSchedule, DefaultPlacement) {
    EXPECT_EQ(LayerSchedule::default_for(12).to_string(), "FFSPPPSPPPPP");
    EXPECT_EQ(LayerSchedule::default_for(6).to_string(), "FFSSPP");
    EXPECT_EQ(LayerSchedule::default_for(4).to_string(), "FFSP");
    EXPECT_EQ(LayerSchedule::default_for(2).to_string(), "FF");
    EXPECT_EQ(LayerSchedule::default_for(12).select_layers(), (std::vector<std::size_t>{2, 6}));
}

TEST(LayerSchedule, Parse) {
    EXPECT_EQ(LayerSchedule::parse("full", 3).to_string(), "FFF");
    EXPECT_EQ(LayerSchedule::parse("select:1,3", 5).to_string(), "FSPSP");
    EXPECT_EQ(LayerSchedule::parse("fsp", 3).to_string(), "FSP");
    EXPECT_EQ(LayerSchedule::parse("default", 8).to_string(), "FFSPSPPP");
    EXPECT_THROW(LayerSchedule::parse("FSX", 3), lim::ConfigError);
    EXPECT_THROW(LayerSchedule::parse("FS", 3), lim::ConfigError);
    EXPECT_THROW(LayerSchedule::parse("select:9", 3), lim::ConfigError);
    EXPECT_THROW(LayerSchedule::parse("select:a", 3), lim::ConfigError);
}

TEST(LayerSchedule, SparseBeforeSelectRejected) {
    EXPECT_THROW(LayerSchedule({LayerRole::Full, LayerRole::Sparse, LayerRole::Select}), lim::ConfigError);
    EXPECT_THROW(LayerSchedule::parse("PSP", 3), lim::ConfigError);
}

TEST(Prefill, CacheLengthMatchesPrompt) {
    auto m = lim::build_model(small_config());
    for (std::size_t n : {1u, 9u}) {
        lim::DecodeState s(m.config);
        lim::prefill(prompt_of(n, n, 64), m, s);
        for (std::size_t l = 0; l < m.config.num_layers; ++l) EXPECT_EQ(s.cache.length(l), n);
        EXPECT_EQ(s.prompt_len, n);
    }
    lim::DecodeState s(m.config);
    EXPECT_THROW(lim::prefill(std::vector<std::uint32_t>{}, m, s), lim::EmptyContextError);
}

TEST(DecodeStep, AllFullMatchesReferenceForward) {
    auto m = lim::build_model(small_config());
    auto prompt = prompt_of(7, 2, 64);
    auto schedule = LayerSchedule::all_full(m.config.num_layers);
    lim::DecodeState s(m.config);
    auto logits = lim::prefill(prompt, m, s);
    std::vector<std::uint32_t> seq = prompt;
    std::vector<std::vector<float>> step_logits{logits};
    for (int i = 0; i < 10; ++i) {
        const auto tok = lim::argmax_token(logits);
        seq.push_back(tok);
        logits = lim::decode_step(tok, m, schedule, s, options(PolicyKind::Full, 1));
        step_logits.push_back(logits);
        for (std::size_t l = 0; l < m.config.num_layers; ++l) {
            ASSERT_EQ(s.cache.length(l), s.prompt_len + s.steps_decoded);
        }
    }
    auto ref = lim::forward_reference(seq, m);
    for (std::size_t i = 0; i < step_logits.size(); ++i) {
        const std::size_t row = prompt.size() - 1 + i;
        for (std::size_t v = 0; v < ref.cols(); ++v) ASSERT_NEAR(step_logits[i][v], ref(row, v), 1e-6);
    }
}

TEST(DecodeStep, DegenerateBudgetMatchesFullAttention) {
    auto m = lim::build_model(small_config());
    auto prompt = prompt_of(5, 3, 64);
    auto schedule = LayerSchedule::default_for(m.config.num_layers);
    const std::size_t steps = 12;
    for (PolicyKind kind : {PolicyKind::LessIsMore, PolicyKind::HeadToHead, PolicyKind::RandomizedGroup,
                            PolicyKind::RecencyOnly}) {
        lim::DecodeState full(m.config), sparse(m.config);
        auto lf = lim::prefill(prompt, m, full);
        auto ls = lim::prefill(prompt, m, sparse);
        for (std::size_t i = 0; i < steps; ++i) {
            const auto tok = lim::argmax_token(lf);
            lf = lim::decode_step(tok, m, LayerSchedule::all_full(6), full, options(PolicyKind::Full, 1));
            ls = lim::decode_step(tok, m, schedule, sparse, options(kind, prompt.size() + steps));
            for (std::size_t v = 0; v < lf.size(); ++v) ASSERT_NEAR(ls[v], lf[v], 1e-5);
        }
    }
}

TEST(DecodeStep, SparseLayersReuseSelectLayerSet) {
    auto m = lim::build_model(small_config());
    auto schedule = LayerSchedule::parse("FSPSPP", 6);
    auto r = lim::generate(prompt_of(30, 4, 64), m, schedule, options(PolicyKind::LessIsMore, 8), 16);
    ASSERT_EQ(r.state.log.size(), 15u);
    for (const auto& entry : r.state.log) {
        const auto& f = entry.selection_fingerprint;
        EXPECT_EQ(f[0], 0u);
        EXPECT_NE(f[1], 0u);
        EXPECT_EQ(f[2], f[1]);
        EXPECT_EQ(f[4], f[3]);
        EXPECT_EQ(f[5], f[3]);
        ASSERT_EQ(entry.recall.layers.size(), 5u);
        for (const auto& lr : entry.recall.layers) {
            EXPECT_GE(lr.mean, 0.0);
            EXPECT_LE(lr.mean, 1.0);
            EXPECT_EQ(lr.heads.size(), 4u);
        }
    }
}

TEST(DecodeStep, Errors) {
    auto m = lim::build_model(small_config());
    lim::DecodeState s(m.config);
    auto sched = LayerSchedule::default_for(6);
    EXPECT_THROW(lim::decode_step(1, m, sched, s, options(PolicyKind::Full, 1)), lim::ConfigError);
    lim::prefill(prompt_of(3, 1, 64), m, s);
    EXPECT_THROW(lim::decode_step(1, m, LayerSchedule::all_full(5), s, options(PolicyKind::Full, 1)),
                 lim::ConfigError);
    EXPECT_THROW(lim::decode_step(64, m, sched, s, options(PolicyKind::Full, 1)), lim::IndexError);
}

TEST(Generate, OneNewToken) {
    auto m = lim::build_model(small_config());
    auto r = lim::generate(prompt_of(4, 9, 64), m, LayerSchedule::default_for(6), options(PolicyKind::LessIsMore, 4),
                           1);
    EXPECT_EQ(r.tokens.size(), 1u);
    EXPECT_TRUE(r.report.steps.empty());
    EXPECT_EQ(r.report.mean_recall(), 1.0);
    EXPECT_EQ(r.report.generation_length, 1u);
    EXPECT_THROW(lim::generate(prompt_of(4, 9, 64), m, LayerSchedule::default_for(6),
                               options(PolicyKind::LessIsMore, 4), 0),
                 lim::ConfigError);
}

TEST(Generate, LargeBudgetMatchesFullPolicy) {
    auto m = lim::build_model(small_config());
    auto prompt = prompt_of(10, 5, 64);
    auto sched = LayerSchedule::default_for(6);
    auto full = lim::generate(prompt, m, sched, options(PolicyKind::Full, 1), 40);
    auto lim_run = lim::generate(prompt, m, sched, options(PolicyKind::LessIsMore, 64), 40);
    EXPECT_EQ(full.tokens, lim_run.tokens);
    for (const auto& s : full.report.steps) EXPECT_EQ(s.mean, 1.0);
    for (const auto& s : lim_run.report.steps) EXPECT_EQ(s.mean, 1.0);
}

TEST(Generate, DeterministicAcrossRuns) {
    ModelConfig c;
    c.vocab_size = 128;
    c.num_layers = 12;
    c.geometry = {8, 4, 32};
    c.ffn_dim = 256;
    c.seed = 5;
    auto m = lim::build_model(c);
    auto prompt = prompt_of(48, 5, c.vocab_size);
    auto sched = LayerSchedule::default_for(12);
    auto o = options(PolicyKind::LessIsMore, 32, 0.25, 4);
    auto a = lim::generate(prompt, m, sched, o, 64);
    auto b = lim::generate(prompt, lim::build_model(c), sched, o, 64);
    EXPECT_EQ(a.tokens, b.tokens);
    EXPECT_EQ(a.report.step_means(), b.report.step_means());
    for (std::size_t i = 0; i < a.state.log.size(); ++i) {
        EXPECT_EQ(a.state.log[i].selection_fingerprint, b.state.log[i].selection_fingerprint);
    }
}

TEST(Generate, StopsOnEos) {
    auto c = small_config();
    auto m0 = lim::build_model(c);
    auto prompt = prompt_of(6, 8, 64);
    auto first = lim::generate(prompt, m0, LayerSchedule::all_full(6), options(PolicyKind::Full, 1), 5);
    c.eos_token = first.tokens[2];
    auto m = lim::build_model(c);
    auto r = lim::generate(prompt, m, LayerSchedule::all_full(6), options(PolicyKind::Full, 1), 5);
    EXPECT_TRUE(r.stopped_on_eos);
    EXPECT_LE(r.tokens.size(), 3u);
    EXPECT_EQ(r.tokens.back(), *c.eos_token);
}

TEST(Generate, RecallDegradesBelowOneForSmallBudget) {
    auto m = lim::build_model(small_config());
    auto r = lim::generate(prompt_of(60, 6, 64), m, LayerSchedule::default_for(6), options(PolicyKind::LessIsMore, 8),
                           20);
    for (const auto& s : r.report.steps) {
        EXPECT_GT(s.mean, 0.0);
        EXPECT_LT(s.mean, 1.0);
    }
}

} // namespace
