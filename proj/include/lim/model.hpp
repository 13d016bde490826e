// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lim/attention.hpp"
#include "lim/tensor.hpp"

namespace lim {

/// A small pre-norm GQA decoder whose weights are fully determined by `seed`.
struct ModelConfig {
    std::size_t vocab_size = 256;
    std::size_t num_layers = 4;
    HeadGeometry geometry{4, 2, 16};
    std::size_t ffn_dim = 128;
    std::size_t max_seq_len = 4096;
    std::uint64_t seed = 1;
    std::optional<std::uint32_t> eos_token;
    float norm_eps = 1e-5f;

    std::size_t model_dim() const noexcept { return geometry.query_width(); }
    /// Throws ConfigError on any zero count or inconsistent geometry.
    void validate() const;

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    static ModelConfig load(const std::filesystem::path& path);
};

struct LayerWeights {
    std::vector<float> attn_norm;  // [D]
    Matrix<float> wq;              // [H*d x D]
    Matrix<float> wk;              // [KV*d x D]
    Matrix<float> wv;              // [KV*d x D]
    Matrix<float> wo;              // [D x H*d]
    std::vector<float> ffn_norm;   // [D]
    Matrix<float> w_up;            // [F x D]
    Matrix<float> w_down;          // [D x F]
};

struct ModelWeights {
    ModelConfig config;
    Matrix<float> embedding;  // [vocab x D]
    std::vector<LayerWeights> layers;
    std::vector<float> final_norm;
    Matrix<float> lm_head;    // [vocab x D]

    /// FNV-1a over every parameter's bit pattern in declaration order.
    std::uint64_t checksum() const;
};

/// Weights ~ U(-sqrt(3/fan_in), sqrt(3/fan_in)) from SplitMix64 streams
/// derived from config.seed; norm gains are 1.
ModelWeights build_model(const ModelConfig& config);

// Building blocks shared by the decode pipeline and the reference forward.

/// Additive sinusoidal position code.
void add_position_encoding(std::size_t pos, std::span<float> h);
/// h = embedding[token] + position code.
void embed_token(const ModelWeights& model, std::uint32_t token, std::size_t pos, std::span<float> h);
void rms_norm(std::span<const float> x, std::span<const float> gain, float eps, std::span<float> out);
float gelu(float x) noexcept;

struct Projections {
    std::vector<float> q;  // [H*d]
    std::vector<float> k;  // [KV*d]
    std::vector<float> v;  // [KV*d]
};
Projections project_qkv(const ModelConfig& config, const LayerWeights& layer, std::span<const float> h);
/// h += Wo * attn
void add_attention_output(const LayerWeights& layer, std::span<const float> attn, std::span<float> h);
/// h += W_down * gelu(W_up * norm(h))
void add_ffn(const ModelConfig& config, const LayerWeights& layer, std::span<float> h);
std::vector<float> lm_head_logits(const ModelWeights& model, std::span<const float> h);

/// Greedy choice: highest logit, lowest id on ties.
std::uint32_t argmax_token(std::span<const float> logits);

/// Cache-free causal forward over the whole sequence, layer by layer.
/// Returns logits for every position ([tokens x vocab]). Test oracle.
Matrix<float> forward_reference(std::span<const std::uint32_t> tokens, const ModelWeights& model);

} // namespace lim
