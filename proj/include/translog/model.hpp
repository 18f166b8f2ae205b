/*
 * Copyright (c) 2026 the translog authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "translog/autodiff.hpp"
#include "translog/checkpoint.hpp"
#include "translog/optim.hpp"
#include "translog/rng.hpp"

namespace translog {

enum class Mode { kScratch, kFinetune, kAdapter };

inline const char* mode_name(Mode m) {
    switch (m) {
        case Mode::kScratch: return "scratch";
        case Mode::kFinetune: return "finetune";
        case Mode::kAdapter: return "adapter";
    }
    return "scratch";
}

inline Mode mode_from_string(const std::string& s) {
    if (s == "scratch") return Mode::kScratch;
    if (s == "finetune") return Mode::kFinetune;
    if (s == "adapter") return Mode::kAdapter;
    throw ConfigError("model: unknown mode '" + s + "'");
}

/// Encoder geometry. Defaults follow the usual sentence-encoder layout
/// (d=768, 8 heads, FFN 3072) with a 128-wide adapter bottleneck and a
/// d -> 256 -> 1 classification head.
struct ModelConfig {
    int d = 768;
    int heads = 8;
    int layers = 1;
    int ffn_dim = 3072;
    int adapter_dim = 128;  // m
    int head_hidden = 256;
    int seq_len = 20;  // l
    float dropout = 0.1f;

    void validate() const {
        if (d < 1 || heads < 1 || d % heads != 0)
            throw ConfigError("model: d must be positive and divisible by heads");
        if (layers < 1) throw ConfigError("model: layers must be >= 1");
        if (ffn_dim < 1) throw ConfigError("model: ffn_dim must be >= 1");
        if (adapter_dim < 1 || adapter_dim >= d)
            throw ConfigError("model: adapter_dim must satisfy 1 <= m < d");
        if (head_hidden < 1) throw ConfigError("model: head_hidden must be >= 1");
        if (seq_len < 1) throw ConfigError("model: seq_len must be >= 1");
        if (dropout < 0.0f || dropout >= 1.0f)
            throw ConfigError("model: dropout must be in [0,1)");
    }

    nlohmann::json to_json() const {
        return {{"d", d},
                {"heads", heads},
                {"layers", layers},
                {"ffn_dim", ffn_dim},
                {"adapter_dim", adapter_dim},
                {"head_hidden", head_hidden},
                {"seq_len", seq_len},
                {"dropout", dropout}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        for (const auto& [key, _] : j.items())
            if (key != "d" && key != "heads" && key != "layers" && key != "ffn_dim" &&
                key != "adapter_dim" && key != "head_hidden" && key != "seq_len" &&
                key != "dropout")
                throw ConfigError("model config: unknown key '" + key + "'");
        c.d = j.value("d", c.d);
        c.heads = j.value("heads", c.heads);
        c.layers = j.value("layers", c.layers);
        c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
        c.adapter_dim = j.value("adapter_dim", c.adapter_dim);
        c.head_hidden = j.value("head_hidden", c.head_hidden);
        c.seq_len = j.value("seq_len", c.seq_len);
        c.dropout = j.value("dropout", c.dropout);
        c.validate();
        return c;
    }

    std::uint64_t hash() const { return config_hash(to_json()); }
};

/// Trainable scalars per regime. Scratch and fine-tuning train the whole
/// backbone plus head; adapter mode trains the adapters (with biases), the
/// layer norms and the head while attention and FFN weights stay frozen.
inline std::int64_t count_params(const ModelConfig& c, Mode mode) {
    c.validate();
    const std::int64_t d = c.d, ffn = c.ffn_dim, m = c.adapter_dim, hh = c.head_hidden;
    const std::int64_t attention = 4 * (d * d + d);
    const std::int64_t feedforward = (d * ffn + ffn) + (ffn * d + d);
    const std::int64_t norms = 2 * (2 * d);
    const std::int64_t adapter = (d * m + m) + (m * d + d);
    const std::int64_t head = (d * hh + hh) + (hh + 1);
    switch (mode) {
        case Mode::kScratch:
        case Mode::kFinetune:
            return c.layers * (attention + feedforward + norms) + head;
        case Mode::kAdapter:
            return c.layers * (adapter + norms) + head;
    }
    return 0;
}

/// Fixed sinusoidal position table; added to inputs, never trained.
inline Tensor positional_encoding(std::int64_t l, std::int64_t d) {
    Tensor pe({l, d});
    for (std::int64_t pos = 0; pos < l; ++pos)
        for (std::int64_t i = 0; i < d; ++i) {
            const double angle =
                double(pos) / std::pow(10000.0, double(2 * (i / 2)) / double(d));
            pe.data[static_cast<std::size_t>(pos * d + i)] =
                static_cast<float>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    return pe;
}

/// The parameter store for one model instance: named tensors in a fixed
/// order (which is also the checkpoint payload order) plus an index.
struct ModelParams {
    ModelConfig config;
    Mode mode = Mode::kScratch;
    std::vector<Parameter> params;

    Parameter& at(const std::string& name) {
        const auto it = index_.find(name);
        if (it == index_.end()) throw Error("model: no parameter named '" + name + "'");
        return params[it->second];
    }
    const Parameter& at(const std::string& name) const {
        const auto it = index_.find(name);
        if (it == index_.end()) throw Error("model: no parameter named '" + name + "'");
        return params[it->second];
    }
    bool has(const std::string& name) const { return index_.count(name) > 0; }

    std::vector<Parameter*> all() {
        std::vector<Parameter*> out;
        out.reserve(params.size());
        for (auto& p : params) out.push_back(&p);
        return out;
    }

    std::vector<Parameter*> trainable() {
        std::vector<Parameter*> out;
        for (auto& p : params)
            if (p.trainable) out.push_back(&p);
        return out;
    }

    std::int64_t trainable_scalars() const {
        std::int64_t n = 0;
        for (const auto& p : params)
            if (p.trainable) n += p.value.numel();
        return n;
    }

    /// Names of the frozen backbone groups (attention + FFN); used by the
    /// freeze-soundness checks.
    std::vector<std::string> backbone_names() const {
        std::vector<std::string> out;
        for (const auto& p : params)
            if (p.name.find(".attn.") != std::string::npos ||
                p.name.find(".ffn.") != std::string::npos)
                out.push_back(p.name);
        return out;
    }

    std::uint64_t backbone_hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const auto& p : params)
            if (p.name.find(".attn.") != std::string::npos ||
                p.name.find(".ffn.") != std::string::npos)
                h = fnv1a64(p.value.data.data(), p.value.data.size() * sizeof(float), h);
        return h;
    }

    void rebuild_index() {
        index_.clear();
        for (std::size_t i = 0; i < params.size(); ++i) index_.emplace(params[i].name, i);
        if (index_.size() != params.size())
            throw Error("model: duplicate parameter names");
    }

private:
    std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

inline Tensor fan_in_uniform(std::vector<std::int64_t> shape, Rng& rng) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(shape.front()));
    return Tensor::uniform(std::move(shape), -bound, bound, rng);
}

}  // namespace detail

/// Builds a freshly initialized parameter store. Weights use scaled uniform
/// fan-in init; adapter up-projections start at zero so a new adapter is an
/// exact identity; biases and norm offsets start at zero, norm scales at one.
inline ModelParams init_params(const ModelConfig& config, Mode mode, Rng& rng) {
    config.validate();
    ModelParams mp;
    mp.config = config;
    mp.mode = mode;
    const std::int64_t d = config.d, ffn = config.ffn_dim, m = config.adapter_dim,
                       hh = config.head_hidden;
    const bool backbone_trainable = mode != Mode::kAdapter;
    for (int i = 0; i < config.layers; ++i) {
        const std::string prefix = "layers." + std::to_string(i) + ".";
        for (const char* nm : {"wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"}) {
            const bool is_weight = nm[0] == 'w';
            mp.params.emplace_back(prefix + "attn." + nm,
                                   is_weight ? detail::fan_in_uniform({d, d}, rng)
                                             : Tensor::zeros({d}),
                                   backbone_trainable);
        }
        mp.params.emplace_back(prefix + "norm1.scale", Tensor::filled({d}, 1.0f), true);
        mp.params.emplace_back(prefix + "norm1.offset", Tensor::zeros({d}), true);
        mp.params.emplace_back(prefix + "ffn.w1", detail::fan_in_uniform({d, ffn}, rng),
                               backbone_trainable);
        mp.params.emplace_back(prefix + "ffn.b1", Tensor::zeros({ffn}), backbone_trainable);
        mp.params.emplace_back(prefix + "ffn.w2", detail::fan_in_uniform({ffn, d}, rng),
                               backbone_trainable);
        mp.params.emplace_back(prefix + "ffn.b2", Tensor::zeros({d}), backbone_trainable);
        mp.params.emplace_back(prefix + "norm2.scale", Tensor::filled({d}, 1.0f), true);
        mp.params.emplace_back(prefix + "norm2.offset", Tensor::zeros({d}), true);
        if (mode == Mode::kAdapter) {
            mp.params.emplace_back(prefix + "adapter.down.w",
                                   detail::fan_in_uniform({d, m}, rng), true);
            mp.params.emplace_back(prefix + "adapter.down.b", Tensor::zeros({m}), true);
            mp.params.emplace_back(prefix + "adapter.up.w", Tensor::zeros({m, d}), true);
            mp.params.emplace_back(prefix + "adapter.up.b", Tensor::zeros({d}), true);
        }
    }
    mp.params.emplace_back("head.w1", detail::fan_in_uniform({d, hh}, rng), true);
    mp.params.emplace_back("head.b1", Tensor::zeros({hh}), true);
    mp.params.emplace_back("head.w2", detail::fan_in_uniform({hh, 1}, rng), true);
    mp.params.emplace_back("head.b2", Tensor::zeros({1}), true);
    mp.rebuild_index();
    return mp;
}

/// Multi-head scaled dot-product attention over already-projected Q, K, V of
/// shape (b, l, d), masked so padded key positions receive zero probability,
/// concatenated and output-projected.
inline Var attention(Graph& g, Var q, Var k, Var v, const std::vector<std::uint8_t>& key_mask,
                     int heads, Var wo, Var bo) {
    const Tensor& tq = g.value(q);
    if (tq.rank() != 3) throw TensorError("attention: expected (b,l,d), got " + tq.shape_str());
    const std::int64_t d = tq.dim(2);
    if (d % heads != 0) throw ConfigError("attention: d not divisible by heads");
    const float inv_sqrt_dh = 1.0f / std::sqrt(static_cast<float>(d / heads));
    Var qh = g.split_heads(q, heads);
    Var kh = g.split_heads(k, heads);
    Var vh = g.split_heads(v, heads);
    Var logits = g.scale(g.bmm_nt(qh, kh), inv_sqrt_dh);
    Var probs = g.softmax_masked(logits, key_mask);
    Var ctx = g.merge_heads(g.bmm_nn(probs, vh), heads);
    return g.linear(ctx, wo, bo);
}

/// Bottleneck adapter: h' = up(tanh(down(h))) + h. With a zero-initialized
/// up-projection this is exactly the identity.
inline Var adapter_forward(Graph& g, Var h, Var w_down, Var b_down, Var w_up, Var b_up) {
    return g.add(g.linear(g.tanh_op(g.linear(h, w_down, b_down)), w_up, b_up), h);
}

struct Batch {
    Tensor values;                   // (b, l, d)
    std::vector<std::uint8_t> mask;  // b*l bytes
    std::vector<float> labels;       // b entries in {0,1}
};

/// Full forward pass: positional encoding, `layers` encoder blocks
/// (post-norm residual attention and FFN sublayers, plus the adapter after
/// the FFN sublayer in adapter mode), masked mean pooling, MLP head,
/// sigmoid. Returns per-session anomaly probabilities of shape (b,).
inline Var forward(Graph& g, ModelParams& mp, const Batch& batch) {
    const ModelConfig& c = mp.config;
    const Tensor& vals = batch.values;
    if (vals.rank() != 3 || vals.dim(2) != c.d)
        throw TensorError("forward: batch shape " + vals.shape_str() +
                          " does not match model d=" + std::to_string(c.d));
    const std::int64_t b = vals.dim(0), l = vals.dim(1);
    if (batch.mask.size() != static_cast<std::size_t>(b * l))
        throw TensorError("forward: mask size mismatch");
    if (mp.mode == Mode::kAdapter && !mp.has("layers.0.adapter.up.w"))
        throw Error("forward: adapter mode requested but params carry no adapters");

    // constant positional table folded into the (constant) input
    Tensor x0 = vals;
    const Tensor pe = positional_encoding(l, c.d);
    for (std::int64_t bi = 0; bi < b; ++bi)
        for (std::int64_t li = 0; li < l; ++li) {
            float* row = x0.ptr() + (bi * l + li) * c.d;
            const float* perow = pe.ptr() + li * c.d;
            for (std::int64_t j = 0; j < c.d; ++j) row[j] += perow[j];
        }

    Var x = g.input(std::move(x0));
    for (int i = 0; i < c.layers; ++i) {
        const std::string prefix = "layers." + std::to_string(i) + ".";
        Var q = g.linear(x, g.param(mp.at(prefix + "attn.wq")), g.param(mp.at(prefix + "attn.bq")));
        Var k = g.linear(x, g.param(mp.at(prefix + "attn.wk")), g.param(mp.at(prefix + "attn.bk")));
        Var v = g.linear(x, g.param(mp.at(prefix + "attn.wv")), g.param(mp.at(prefix + "attn.bv")));
        Var attn = attention(g, q, k, v, batch.mask, c.heads,
                             g.param(mp.at(prefix + "attn.wo")),
                             g.param(mp.at(prefix + "attn.bo")));
        x = g.layer_norm(g.add(x, g.dropout(attn, c.dropout)),
                         g.param(mp.at(prefix + "norm1.scale")),
                         g.param(mp.at(prefix + "norm1.offset")));
        Var ffn = g.linear(g.tanh_op(g.linear(x, g.param(mp.at(prefix + "ffn.w1")),
                                              g.param(mp.at(prefix + "ffn.b1")))),
                           g.param(mp.at(prefix + "ffn.w2")),
                           g.param(mp.at(prefix + "ffn.b2")));
        x = g.layer_norm(g.add(x, g.dropout(ffn, c.dropout)),
                         g.param(mp.at(prefix + "norm2.scale")),
                         g.param(mp.at(prefix + "norm2.offset")));
        if (mp.mode == Mode::kAdapter)
            x = adapter_forward(g, x, g.param(mp.at(prefix + "adapter.down.w")),
                                g.param(mp.at(prefix + "adapter.down.b")),
                                g.param(mp.at(prefix + "adapter.up.w")),
                                g.param(mp.at(prefix + "adapter.up.b")));
    }
    Var pooled = g.mean_pool_masked(x, batch.mask);
    Var hidden = g.tanh_op(
        g.linear(pooled, g.param(mp.at("head.w1")), g.param(mp.at("head.b1"))));
    Var logit = g.linear(hidden, g.param(mp.at("head.w2")), g.param(mp.at("head.b2")));
    return g.sigmoid(g.reshape(logit, {b}));
}

/// Eval-mode forward over a dataset slice without building gradient state.
inline std::vector<float> predict(ModelParams& mp, const Batch& batch) {
    Graph g(false, nullptr);
    Var probs = forward(g, mp, batch);
    const Tensor& t = g.value(probs);
    return t.data;
}

// -- checkpoint binding -------------------------------------------------------

inline Checkpoint to_checkpoint(const ModelParams& mp, std::uint64_t rng_seed,
                                std::int64_t step) {
    Checkpoint ckpt;
    ckpt.header.config = mp.config.to_json();
    ckpt.header.mode = mode_name(mp.mode);
    ckpt.header.rng_seed = rng_seed;
    ckpt.header.step = step;
    ckpt.params = mp.params;
    return ckpt;
}

inline ModelParams from_checkpoint(const Checkpoint& ckpt) {
    ModelParams mp;
    mp.config = ModelConfig::from_json(ckpt.header.config);
    mp.mode = mode_from_string(ckpt.header.mode);
    mp.params = ckpt.params;
    mp.rebuild_index();
    // structural sanity: the store must be exactly what init would build
    Rng probe(0);
    ModelParams expect = init_params(mp.config, mp.mode, probe);
    if (expect.params.size() != mp.params.size())
        throw DataError("checkpoint: parameter list does not match config");
    for (std::size_t i = 0; i < mp.params.size(); ++i) {
        if (expect.params[i].name != mp.params[i].name ||
            expect.params[i].value.shape != mp.params[i].value.shape)
            throw DataError("checkpoint: parameter '" + mp.params[i].name +
                            "' does not match config layout");
        if (expect.params[i].trainable != mp.params[i].trainable)
            throw DataError("checkpoint: trainable flag mismatch on '" + mp.params[i].name +
                            "'");
    }
    return mp;
}

}  // namespace translog
