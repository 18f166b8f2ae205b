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

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "translog/embedder.hpp"
#include "translog/evaluator.hpp"
#include "translog/model.hpp"
#include "translog/optim.hpp"
#include "translog/sessionizer.hpp"

namespace translog {

struct TrainConfig {
    int batch_size = 64;
    float max_lr = 5e-5f;  // the sweep grid is {1e-5, 5e-5, 1e-6}
    int epochs = 30;
    std::uint64_t seed = 7;
    Mode mode = Mode::kScratch;
    int eval_every = 10;  // steps between dev evaluations
    bool early_stop = true;
    int patience = 3;
    double threshold = 0.5;
    float warmup_fraction = 0.3f;
    float start_div = 25.0f;
    float final_div = 1e4f;
    bool reinit_head = false;  // adapter tuning: fresh head vs the pretrained one

    void validate() const {
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
        if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
        if (!(max_lr > 0.0f) || !std::isfinite(max_lr))
            throw ConfigError("train: max_lr must be positive and finite");
        if (patience < 1) throw ConfigError("train: patience must be >= 1");
        if (!(threshold > 0.0) || !(threshold < 1.0))
            throw ConfigError("train: threshold must be in (0,1)");
    }
};

struct EvalPoint {
    std::int64_t step = 0;
    std::string split;
    double loss = 0.0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct RunMetrics {
    std::vector<std::pair<std::int64_t, float>> step_loss;  // per-step training loss
    std::vector<EvalPoint> evals;                           // dev evaluations
    std::vector<double> epoch_seconds;                      // wall clock, not serialized
    std::int64_t trainable_params = 0;

    /// First evaluated step reaching the target dev F1; -1 when never reached.
    std::int64_t steps_to_f1(double target) const {
        for (const auto& e : evals)
            if (e.f1 >= target) return e.step;
        return -1;
    }

    double final_f1() const { return evals.empty() ? 0.0 : evals.back().f1; }
};

struct TrainResult {
    ModelParams params;
    RunMetrics metrics;
};

namespace detail {

inline Batch slice_batch(const Dataset& ds, const std::vector<std::int64_t>& order,
                         std::size_t begin, std::size_t end) {
    const std::int64_t bs = static_cast<std::int64_t>(end - begin);
    Batch b;
    b.values = Tensor({bs, ds.l, static_cast<std::int64_t>(ds.d)});
    b.mask.resize(static_cast<std::size_t>(bs * ds.l));
    b.labels.resize(static_cast<std::size_t>(bs));
    const std::size_t row = static_cast<std::size_t>(ds.l) * ds.d;
    for (std::size_t i = begin; i < end; ++i) {
        const auto src = static_cast<std::size_t>(order[i]);
        const std::size_t dst = i - begin;
        std::copy_n(ds.values.begin() + src * row, row, b.values.data.begin() + dst * row);
        std::copy_n(ds.masks.begin() + src * ds.l, static_cast<std::size_t>(ds.l),
                    b.mask.begin() + dst * ds.l);
        b.labels[dst] = ds.labels[src];
    }
    return b;
}

inline std::vector<float> predict_dataset(ModelParams& mp, const Dataset& ds,
                                          int batch_size) {
    std::vector<std::int64_t> order(static_cast<std::size_t>(ds.n));
    for (std::int64_t i = 0; i < ds.n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::vector<float> probs;
    probs.reserve(static_cast<std::size_t>(ds.n));
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(batch_size));
        const Batch b = slice_batch(ds, order, at, end);
        const auto p = predict(mp, b);
        probs.insert(probs.end(), p.begin(), p.end());
    }
    return probs;
}

/// Standalone mean BCE, independent of the graph path.
inline double bce_of(const std::vector<float>& probs, const std::vector<float>& labels) {
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = std::min(std::max(double(probs[i]), 1e-7), 1.0 - 1e-7);
        total += -(double(labels[i]) * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p));
    }
    return probs.empty() ? 0.0 : total / double(probs.size());
}

inline EvalPoint eval_split(ModelParams& mp, const Dataset& ds, std::int64_t step,
                            const std::string& split, const TrainConfig& cfg) {
    const auto probs = predict_dataset(mp, ds, cfg.batch_size);
    const EvalReport rep = evaluate(probs, ds.labels, cfg.threshold);
    EvalPoint e;
    e.step = step;
    e.split = split;
    e.loss = bce_of(probs, ds.labels);
    e.precision = rep.precision;
    e.recall = rep.recall;
    e.f1 = rep.f1;
    return e;
}

}  // namespace detail

/// The shared optimization loop: one-cycle Adam over shuffled batches with
/// periodic dev evaluation, optional early stopping on dev F1, and per-step
/// loss recording. Deterministic for a fixed seed/config/data.
inline TrainResult train_loop(ModelParams params, const Dataset& train, const Dataset& dev,
                              const TrainConfig& cfg) {
    cfg.validate();
    if (train.n < 1) throw DataError("train: empty training set");

    RunMetrics metrics;
    metrics.trainable_params = params.trainable_scalars();

    bool any_pos = false, any_neg = false;
    for (float y : train.labels) (y != 0.0f ? any_pos : any_neg) = true;
    if (!any_pos || !any_neg)
        std::cerr << "[translog] warning: single-class training data; proceeding\n";

    if (cfg.epochs == 0) {
        if (dev.n > 0)
            metrics.evals.push_back(detail::eval_split(params, dev, 0, "dev", cfg));
        return {std::move(params), std::move(metrics)};
    }

    const std::int64_t batches_per_epoch =
        (train.n + cfg.batch_size - 1) / cfg.batch_size;
    OneCycleSchedule schedule;
    schedule.max_lr = cfg.max_lr;
    schedule.total_steps = std::max<std::int64_t>(1, cfg.epochs * batches_per_epoch);
    schedule.warmup_fraction = cfg.warmup_fraction;
    schedule.start_div = cfg.start_div;
    schedule.final_div = cfg.final_div;

    Rng shuffle_rng = named_stream(cfg.seed, "train-shuffle");
    Rng dropout_rng = named_stream(cfg.seed, "train-dropout");
    Adam adam(params.trainable());

    std::vector<std::int64_t> order(static_cast<std::size_t>(train.n));
    for (std::int64_t i = 0; i < train.n; ++i) order[static_cast<std::size_t>(i)] = i;

    std::int64_t step = 0;
    double best_f1 = -1.0;
    int evals_since_improve = 0;
    bool stop = false;

    if (dev.n > 0)
        metrics.evals.push_back(detail::eval_split(params, dev, 0, "dev", cfg));

    for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(order);
        for (std::size_t at = 0; at < order.size() && !stop;
             at += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
            const Batch batch = detail::slice_batch(train, order, at, end);

            Graph g(true, &dropout_rng);
            Var probs = forward(g, params, batch);
            Var loss = g.bce_loss(probs, batch.labels);
            const float loss_val = g.scalar(loss);
            if (!std::isfinite(loss_val))
                throw TrainingDiverged("train: non-finite loss at step " +
                                       std::to_string(step));
            for (Parameter* p : params.trainable()) p->zero_grad();
            g.backward(loss);
            adam.step(lr_at(schedule, std::min(step, schedule.total_steps)));
            ++step;
            metrics.step_loss.emplace_back(step, loss_val);

            if (dev.n > 0 && step % cfg.eval_every == 0) {
                const EvalPoint e = detail::eval_split(params, dev, step, "dev", cfg);
                metrics.evals.push_back(e);
                if (cfg.early_stop) {
                    if (e.f1 > best_f1) {
                        best_f1 = e.f1;
                        evals_since_improve = 0;
                    } else if (best_f1 > 0.0 && ++evals_since_improve >= cfg.patience) {
                        // patience only counts once the model has lifted off a
                        // flat-zero F1, otherwise warmup gets mistaken for a
                        // plateau
                        stop = true;
                    }
                }
            }
        }
        metrics.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start)
                .count());
    }

    if (dev.n > 0 && (metrics.evals.empty() || metrics.evals.back().step != step))
        metrics.evals.push_back(detail::eval_split(params, dev, step, "dev", cfg));
    return {std::move(params), std::move(metrics)};
}

/// Stage 1: supervised training of the full backbone + head on the source
/// domain. Mode is forced to scratch; no adapters exist in the graph.
inline TrainResult pretrain(const Dataset& source_train, const Dataset& source_dev,
                            const ModelConfig& model_config, TrainConfig cfg) {
    cfg.mode = Mode::kScratch;
    Rng init_rng = named_stream(cfg.seed, "init");
    ModelParams params = init_params(model_config, Mode::kScratch, init_rng);
    return train_loop(std::move(params), source_train, source_dev, cfg);
}

namespace detail {

inline void require_compatible(const Checkpoint& ckpt, const ModelConfig& expected) {
    if (config_hash(ckpt.header.config) != expected.hash())
        throw DataError("tune: incompatible backbone (config hash mismatch)");
}

}  // namespace detail

/// Stage 2a: adapter-based tuning. Backbone weights come frozen from the
/// pretraining checkpoint and adapters start as exact identities; the
/// pretrained head carries over by default (cfg.reinit_head gives it a fresh
/// start for the target domain instead).
inline TrainResult adapter_tune(const Checkpoint& backbone, const ModelConfig& expected,
                                const Dataset& target_train, const Dataset& target_dev,
                                TrainConfig cfg) {
    detail::require_compatible(backbone, expected);
    cfg.mode = Mode::kAdapter;
    const ModelParams pre = from_checkpoint(backbone);
    Rng init_rng = named_stream(cfg.seed, "adapter-init");
    ModelParams params = init_params(expected, Mode::kAdapter, init_rng);
    for (auto& p : params.params) {
        const bool from_backbone = p.name.find(".attn.") != std::string::npos ||
                                   p.name.find(".ffn.") != std::string::npos ||
                                   p.name.find(".norm") != std::string::npos;
        const bool from_head = !cfg.reinit_head && p.name.rfind("head.", 0) == 0;
        if (from_backbone || from_head) p.value = pre.at(p.name).value;
    }
    return train_loop(std::move(params), target_train, target_dev, cfg);
}

/// Stage 2b (baseline): full fine-tuning of the pretrained model; every
/// parameter including the pretrained head keeps training.
inline TrainResult fine_tune(const Checkpoint& backbone, const ModelConfig& expected,
                             const Dataset& target_train, const Dataset& target_dev,
                             TrainConfig cfg) {
    detail::require_compatible(backbone, expected);
    if (backbone.header.mode == "adapter")
        throw DataError("tune: fine-tuning expects a pretrained (scratch) checkpoint");
    cfg.mode = Mode::kFinetune;
    ModelParams params = from_checkpoint(backbone);
    params.mode = Mode::kFinetune;
    for (auto& p : params.params) p.trainable = true;
    return train_loop(std::move(params), target_train, target_dev, cfg);
}

/// Baseline arm: fresh random model trained directly on the target domain.
inline TrainResult train_from_scratch(const ModelConfig& model_config,
                                      const Dataset& target_train, const Dataset& target_dev,
                                      TrainConfig cfg) {
    cfg.mode = Mode::kScratch;
    Rng init_rng = named_stream(cfg.seed, "init");
    ModelParams params = init_params(model_config, Mode::kScratch, init_rng);
    return train_loop(std::move(params), target_train, target_dev, cfg);
}

struct SubsampleResult {
    std::vector<Session> sessions;
    std::size_t anomalous = 0;
};

/// Uniform sample without replacement, deterministic per seed; original
/// (chronological) order is preserved within the sample.
inline SubsampleResult subsample(const std::vector<Session>& train, std::size_t n,
                                 std::uint64_t seed) {
    if (n == 0) throw DataError("subsample: empty training set");
    if (n > train.size())
        throw DataError("subsample: requested " + std::to_string(n) + " of " +
                        std::to_string(train.size()) + " sessions");
    std::vector<std::size_t> idx(train.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng = named_stream(seed, "subsample");
    rng.shuffle(idx);
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    SubsampleResult out;
    out.sessions.reserve(n);
    for (std::size_t i : idx) {
        out.sessions.push_back(train[i]);
        out.anomalous += train[i].label ? 1 : 0;
    }
    return out;
}

/// Last 10% (at least one session) of the training split becomes the dev set.
inline std::pair<std::vector<Session>, std::vector<Session>> dev_split(
    const std::vector<Session>& train, double dev_fraction = 0.1) {
    if (train.size() < 2) throw DataError("dev split: need at least 2 sessions");
    if (!(dev_fraction > 0.0) || !(dev_fraction < 1.0))
        throw ConfigError("dev split: fraction must be in (0,1)");
    std::size_t dev_count = static_cast<std::size_t>(
        std::floor(double(train.size()) * dev_fraction));
    if (dev_count == 0) dev_count = 1;
    const std::size_t cut = train.size() - dev_count;
    return {std::vector<Session>(train.begin(), train.begin() + cut),
            std::vector<Session>(train.begin() + cut, train.end())};
}

// -- metrics.jsonl -------------------------------------------------------------

inline void write_metrics_jsonl(const std::string& path, const RunMetrics& metrics) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("metrics: cannot open '" + path + "' for writing");
    for (const auto& e : metrics.evals) {
        nlohmann::json j;
        j["step"] = e.step;
        j["split"] = e.split;
        j["loss"] = e.loss;
        j["precision"] = e.precision;
        j["recall"] = e.recall;
        j["f1"] = e.f1;
        os << j.dump() << "\n";
    }
}

}  // namespace translog
