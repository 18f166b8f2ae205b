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
#include <vector>

#include "translog/autodiff.hpp"

namespace translog {

struct AdamOptions {
    float beta1 = 0.9f;
    float beta2 = 0.99f;
    float epsilon = 1e-8f;
};

/// Bias-corrected Adam. Frozen parameters are never read or written, so
/// their bytes are bit-identical across any number of steps.
class Adam {
public:
    explicit Adam(std::vector<Parameter*> params, AdamOptions opts = AdamOptions())
        : params_(std::move(params)), opts_(opts) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (const Parameter* p : params_) {
            m_.push_back(Tensor::zeros(p->value.shape));
            v_.push_back(Tensor::zeros(p->value.shape));
        }
    }

    std::int64_t step_count() const { return step_; }

    void zero_grad() {
        for (Parameter* p : params_) p->zero_grad();
    }

    void step(float lr) {
        ++step_;
        const double bc1 = 1.0 - std::pow(double(opts_.beta1), double(step_));
        const double bc2 = 1.0 - std::pow(double(opts_.beta2), double(step_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Parameter& p = *params_[i];
            if (!p.trainable) continue;
            if (!p.has_grad)
                throw Error("adam: missing gradient on trainable parameter '" + p.name + "'");
            float* w = p.value.ptr();
            const float* g = p.grad.ptr();
            float* m = m_[i].ptr();
            float* v = v_[i].ptr();
            const std::int64_t n = p.value.numel();
            for (std::int64_t j = 0; j < n; ++j) {
                m[j] = opts_.beta1 * m[j] + (1.0f - opts_.beta1) * g[j];
                v[j] = opts_.beta2 * v[j] + (1.0f - opts_.beta2) * g[j] * g[j];
                const float mhat = static_cast<float>(m[j] / bc1);
                const float vhat = static_cast<float>(v[j] / bc2);
                w[j] -= lr * mhat / (std::sqrt(vhat) + opts_.epsilon);
            }
        }
    }

private:
    std::vector<Parameter*> params_;
    AdamOptions opts_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::int64_t step_ = 0;
};

/// One-cycle schedule: cosine ramp from max_lr/start_div up to max_lr over
/// the warmup fraction, then cosine anneal down to max_lr/final_div.
struct OneCycleSchedule {
    float max_lr = 5e-5f;
    std::int64_t total_steps = 0;
    float warmup_fraction = 0.3f;
    float start_div = 25.0f;
    float final_div = 1e4f;

    void validate() const {
        if (total_steps < 1) throw ConfigError("one_cycle: total_steps must be >= 1");
        if (warmup_fraction <= 0.0f || warmup_fraction >= 1.0f)
            throw ConfigError("one_cycle: warmup_fraction must be in (0,1)");
        if (start_div <= 1.0f || final_div <= 1.0f)
            throw ConfigError("one_cycle: start_div and final_div must be > 1");
        if (!(max_lr > 0.0f)) throw ConfigError("one_cycle: max_lr must be positive");
    }
};

inline float lr_at(const OneCycleSchedule& s, std::int64_t step) {
    s.validate();
    if (step < 0 || step > s.total_steps)
        throw ConfigError("one_cycle: step " + std::to_string(step) +
                          " outside [0, " + std::to_string(s.total_steps) + "]");
    const double start_lr = double(s.max_lr) / s.start_div;
    const double final_lr = double(s.max_lr) / s.final_div;
    std::int64_t warmup_end = static_cast<std::int64_t>(
        std::llround(double(s.warmup_fraction) * double(s.total_steps)));
    if (warmup_end < 1) warmup_end = 1;
    if (warmup_end >= s.total_steps) warmup_end = s.total_steps - 1;
    if (warmup_end < 1)  // total_steps == 1: degenerate one-step schedule
        return static_cast<float>(step == 0 ? start_lr : final_lr);
    auto cosine = [](double from, double to, double pct) {
        return from + (to - from) * (1.0 - std::cos(3.14159265358979323846 * pct)) / 2.0;
    };
    if (step <= warmup_end)
        return static_cast<float>(cosine(start_lr, s.max_lr, double(step) / double(warmup_end)));
    return static_cast<float>(cosine(s.max_lr, final_lr,
                                     double(step - warmup_end) /
                                         double(s.total_steps - warmup_end)));
}

}  // namespace translog
