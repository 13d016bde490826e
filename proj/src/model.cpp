// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#include "lim/model.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lim/errors.hpp"
#include "lim/kernels.hpp"
#include "lim/rng.hpp"

namespace lim {

namespace {

void fill_uniform(std::span<float> out, std::size_t fan_in, std::uint64_t seed) {
    SplitMix64 rng(seed);
    const float bound = std::sqrt(3.0f / static_cast<float>(fan_in));
    for (float& v : out) {
        v = bound * rng.uniform_signed();
    }
}

Matrix<float> random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Matrix<float> m(rows, cols);
    fill_uniform(m.flat(), cols, seed);
    return m;
}

std::uint64_t fnv_floats(std::uint64_t h, std::span<const float> xs) {
    for (float x : xs) {
        const auto bits = std::bit_cast<std::uint32_t>(x);
        for (int i = 0; i < 4; ++i) {
            h ^= (bits >> (8 * i)) & 0xffu;
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

} // namespace

void ModelConfig::validate() const {
    if (vocab_size == 0 || num_layers == 0 || ffn_dim == 0 || max_seq_len == 0) {
        throw ConfigError("model counts must all be >= 1");
    }
    try {
        geometry.validate();
    } catch (const ShapeError& e) {
        throw ConfigError(std::string("model geometry: ") + e.what());
    }
    if (eos_token && *eos_token >= vocab_size) {
        throw ConfigError("eos_token outside vocabulary");
    }
    if (!(norm_eps > 0.0f)) {
        throw ConfigError("norm_eps must be positive");
    }
}

std::string ModelConfig::to_json() const {
    nlohmann::json j{{"vocab_size", vocab_size},
                     {"num_layers", num_layers},
                     {"num_query_heads", geometry.num_query_heads},
                     {"num_kv_heads", geometry.num_kv_heads},
                     {"head_dim", geometry.head_dim},
                     {"ffn_dim", ffn_dim},
                     {"max_seq_len", max_seq_len},
                     {"seed", seed},
                     {"norm_eps", norm_eps}};
    j["eos_token"] = eos_token ? nlohmann::json(*eos_token) : nlohmann::json(nullptr);
    return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config is not valid JSON: ") + e.what());
    }
    ModelConfig c;
    try {
        c.vocab_size = j.value("vocab_size", c.vocab_size);
        c.num_layers = j.value("num_layers", c.num_layers);
        c.geometry.num_query_heads = j.value("num_query_heads", c.geometry.num_query_heads);
        c.geometry.num_kv_heads = j.value("num_kv_heads", c.geometry.num_kv_heads);
        c.geometry.head_dim = j.value("head_dim", c.geometry.head_dim);
        c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
        c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
        c.seed = j.value("seed", c.seed);
        c.norm_eps = j.value("norm_eps", c.norm_eps);
        if (j.contains("eos_token") && !j["eos_token"].is_null()) {
            c.eos_token = j["eos_token"].get<std::uint32_t>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config field has the wrong type: ") + e.what());
    }
    c.validate();
    return c;
}

ModelConfig ModelConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open model config " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::uint64_t ModelWeights::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    h = fnv_floats(h, embedding.flat());
    for (const auto& l : layers) {
        h = fnv_floats(h, l.attn_norm);
        h = fnv_floats(h, l.wq.flat());
        h = fnv_floats(h, l.wk.flat());
        h = fnv_floats(h, l.wv.flat());
        h = fnv_floats(h, l.wo.flat());
        h = fnv_floats(h, l.ffn_norm);
        h = fnv_floats(h, l.w_up.flat());
        h = fnv_floats(h, l.w_down.flat());
    }
    h = fnv_floats(h, final_norm);
    return fnv_floats(h, lm_head.flat());
}

ModelWeights build_model(const ModelConfig& config) {
    config.validate();
    const std::size_t dim = config.model_dim();
    const std::size_t kv = config.geometry.kv_width();
    std::uint64_t tag = 0;
    auto next_seed = [&] { return derive_seed(config.seed, tag++); };

    ModelWeights w;
    w.config = config;
    // Embedding rows have unit variance regardless of width.
    w.embedding = Matrix<float>(config.vocab_size, dim);
    fill_uniform(w.embedding.flat(), 1, next_seed());
    for (std::size_t l = 0; l < config.num_layers; ++l) {
        LayerWeights lw;
        lw.attn_norm.assign(dim, 1.0f);
        lw.wq = random_matrix(dim, dim, next_seed());
        lw.wk = random_matrix(kv, dim, next_seed());
        lw.wv = random_matrix(kv, dim, next_seed());
        lw.wo = random_matrix(dim, dim, next_seed());
        lw.ffn_norm.assign(dim, 1.0f);
        lw.w_up = random_matrix(config.ffn_dim, dim, next_seed());
        lw.w_down = random_matrix(dim, config.ffn_dim, next_seed());
        w.layers.push_back(std::move(lw));
    }
    w.final_norm.assign(dim, 1.0f);
    w.lm_head = random_matrix(config.vocab_size, dim, next_seed());
    return w;
}

void add_position_encoding(std::size_t pos, std::span<float> h) {
    const std::size_t dim = h.size();
    const double p = static_cast<double>(pos);
    for (std::size_t i = 0; i + 1 < dim; i += 2) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
        h[i] += static_cast<float>(std::sin(p * freq));
        h[i + 1] += static_cast<float>(std::cos(p * freq));
    }
    if (dim % 2 == 1) {
        h[dim - 1] += static_cast<float>(std::sin(p));
    }
}

void embed_token(const ModelWeights& model, std::uint32_t token, std::size_t pos, std::span<float> h) {
    if (token >= model.config.vocab_size) {
        throw IndexError("token id " + std::to_string(token) + " outside vocabulary");
    }
    if (pos >= model.config.max_seq_len) {
        throw ConfigError("position " + std::to_string(pos) + " exceeds max_seq_len");
    }
    auto row = model.embedding.row(token);
    std::copy(row.begin(), row.end(), h.begin());
    add_position_encoding(pos, h);
}

void rms_norm(std::span<const float> x, std::span<const float> gain, float eps, std::span<float> out) {
    const float ms = kernels::sum_squares(x) / static_cast<float>(x.size());
    const float inv = 1.0f / std::sqrt(ms + eps);
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] * inv * gain[i];
    }
}

float gelu(float x) noexcept {
    constexpr float kC = 0.7978845608028654f;  // sqrt(2/pi)
    return 0.5f * x * (1.0f + std::tanh(kC * (x + 0.044715f * x * x * x)));
}

Projections project_qkv(const ModelConfig& config, const LayerWeights& layer, std::span<const float> h) {
    std::vector<float> normed(h.size());
    rms_norm(h, layer.attn_norm, config.norm_eps, normed);
    Projections p{std::vector<float>(layer.wq.rows()), std::vector<float>(layer.wk.rows()),
                  std::vector<float>(layer.wv.rows())};
    kernels::matvec(layer.wq.flat(), normed, p.q);
    kernels::matvec(layer.wk.flat(), normed, p.k);
    kernels::matvec(layer.wv.flat(), normed, p.v);
    return p;
}

void add_attention_output(const LayerWeights& layer, std::span<const float> attn, std::span<float> h) {
    std::vector<float> proj(layer.wo.rows());
    kernels::matvec(layer.wo.flat(), attn, proj);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += proj[i];
}

void add_ffn(const ModelConfig& config, const LayerWeights& layer, std::span<float> h) {
    std::vector<float> normed(h.size());
    rms_norm(h, layer.ffn_norm, config.norm_eps, normed);
    std::vector<float> up(layer.w_up.rows());
    kernels::matvec(layer.w_up.flat(), normed, up);
    for (float& v : up) v = gelu(v);
    std::vector<float> down(layer.w_down.rows());
    kernels::matvec(layer.w_down.flat(), up, down);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += down[i];
}

std::vector<float> lm_head_logits(const ModelWeights& model, std::span<const float> h) {
    std::vector<float> normed(h.size());
    rms_norm(h, model.final_norm, model.config.norm_eps, normed);
    std::vector<float> logits(model.config.vocab_size);
    kernels::matvec(model.lm_head.flat(), normed, logits);
    return logits;
}

std::uint32_t argmax_token(std::span<const float> logits) {
    if (logits.empty()) {
        throw ShapeError("argmax of empty logits");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) best = i;
    }
    return static_cast<std::uint32_t>(best);
}

Matrix<float> forward_reference(std::span<const std::uint32_t> tokens, const ModelWeights& model) {
    const ModelConfig& cfg = model.config;
    const HeadGeometry& g = cfg.geometry;
    const std::size_t n = tokens.size();
    const std::size_t dim = cfg.model_dim();
    const std::size_t d = g.head_dim;
    if (n == 0) {
        throw EmptyContextError("reference forward needs at least one token");
    }
    Matrix<float> hidden(n, dim);
    for (std::size_t t = 0; t < n; ++t) {
        embed_token(model, tokens[t], t, hidden.row(t));
    }
    const auto& k = kernels::active();
    const float scale = 1.0f / std::sqrt(static_cast<float>(d));
    for (const LayerWeights& layer : model.layers) {
        std::vector<Projections> proj;
        proj.reserve(n);
        for (std::size_t t = 0; t < n; ++t) {
            proj.push_back(project_qkv(cfg, layer, hidden.row(t)));
        }
        for (std::size_t t = 0; t < n; ++t) {
            std::vector<float> attn(g.query_width(), 0.0f);
            for (std::size_t h = 0; h < g.num_query_heads; ++h) {
                const std::size_t kvh = g.kv_head_for(h);
                const float* q = proj[t].q.data() + h * d;
                std::vector<float> logits(t + 1);
                for (std::size_t j = 0; j <= t; ++j) {
                    logits[j] = k.dot(q, proj[j].k.data() + kvh * d, d) * scale;
                }
                const std::vector<float> w = softmax_normalize(logits);
                for (std::size_t j = 0; j <= t; ++j) {
                    k.axpy(w[j], proj[j].v.data() + kvh * d, attn.data() + h * d, d);
                }
            }
            add_attention_output(layer, attn, hidden.row(t));
            add_ffn(cfg, layer, hidden.row(t));
        }
    }
    Matrix<float> logits(n, cfg.vocab_size);
    for (std::size_t t = 0; t < n; ++t) {
        auto row = lm_head_logits(model, hidden.row(t));
        std::copy(row.begin(), row.end(), logits.row(t).begin());
    }
    return logits;
}

} // namespace lim
