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
#include <gtest/gtest.h>

#include <cmath>

#include "translog/optim.hpp"

using namespace translog;

TEST(Adam, SingleStepMatchesHandComputedUpdate) {
    // w=0, g=1, lr=0.1: bias-corrected mhat=1, vhat=1 -> w = -0.1/(1+eps)
    Parameter w("w", Tensor({1}), true);
    w.grad.data[0] = 1.0f;
    w.has_grad = true;
    Adam adam({&w});
    adam.step(0.1f);
    EXPECT_NEAR(w.value.data[0], -0.1f, 1e-6f);
}

TEST(Adam, ZeroGradientsLeaveFreshParametersUnchanged) {
    Rng rng(5);
    Parameter w("w", Tensor::uniform({4, 4}, -1.0f, 1.0f, rng), true);
    const Tensor before = w.value;
    w.has_grad = true;  // gradients populated, all zero
    Adam adam({&w});
    adam.step(0.05f);
    EXPECT_EQ(w.value.data, before.data);
}

TEST(Adam, FrozenParameterUntouchedEvenWithSpuriousGrad) {
    Rng rng(6);
    Parameter w("w", Tensor::uniform({8}, -1.0f, 1.0f, rng), false);
    for (auto& g : w.grad.data) g = 3.0f;
    w.has_grad = true;
    const std::vector<float> before = w.value.data;
    Adam adam({&w});
    for (int i = 0; i < 10; ++i) adam.step(0.1f);
    EXPECT_EQ(w.value.data, before);  // bit-for-bit
}

TEST(Adam, MissingGradientOnTrainableParamThrows) {
    Parameter w("w", Tensor({2}), true);
    Adam adam({&w});
    EXPECT_THROW(adam.step(0.1f), Error);
}

TEST(Adam, TwoStepRecurrenceMatchesDoubleReference) {
    Parameter w("w", Tensor({1}, {0.5f}), true);
    Adam adam({&w});
    const double b1 = 0.9, b2 = 0.99, eps = 1e-8, lr = 0.05;
    double wr = 0.5, m = 0.0, v = 0.0;
    const double grads[] = {0.3, -0.7};
    for (int t = 1; t <= 2; ++t) {
        const double g = grads[t - 1];
        w.zero_grad();
        w.grad.data[0] = static_cast<float>(g);
        w.has_grad = true;
        adam.step(static_cast<float>(lr));
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mhat = m / (1 - std::pow(b1, t));
        const double vhat = v / (1 - std::pow(b2, t));
        wr -= lr * mhat / (std::sqrt(vhat) + eps);
        EXPECT_NEAR(w.value.data[0], wr, 1e-6);
    }
}

TEST(OneCycle, BoundaryValues) {
    OneCycleSchedule s;
    s.max_lr = 1e-3f;
    s.total_steps = 100;
    EXPECT_FLOAT_EQ(lr_at(s, 0), 1e-3f / 25.0f);
    EXPECT_FLOAT_EQ(lr_at(s, 30), 1e-3f);  // warmup end = round(0.3 * 100)
    EXPECT_FLOAT_EQ(lr_at(s, 100), 1e-3f / 1e4f);
}

TEST(OneCycle, ContinuousAndUnimodal) {
    OneCycleSchedule s;
    s.max_lr = 5e-5f;
    s.total_steps = 200;
    float prev = lr_at(s, 0);
    for (std::int64_t t = 1; t <= 200; ++t) {
        const float cur = lr_at(s, t);
        EXPECT_LT(std::abs(cur - prev), s.max_lr * 0.05f);  // no jumps
        if (t <= 60)
            EXPECT_GE(cur, prev - 1e-12f);
        else
            EXPECT_LE(cur, prev + 1e-12f);
        prev = cur;
    }
}

TEST(OneCycle, StepPastTotalThrows) {
    OneCycleSchedule s;
    s.max_lr = 1e-4f;
    s.total_steps = 10;
    EXPECT_THROW(lr_at(s, 11), ConfigError);
}

TEST(OneCycle, RejectsBadConfig) {
    OneCycleSchedule s;
    s.max_lr = 1e-4f;
    s.total_steps = 0;
    EXPECT_THROW(lr_at(s, 0), ConfigError);
    s.total_steps = 10;
    s.warmup_fraction = 1.5f;
    EXPECT_THROW(lr_at(s, 0), ConfigError);
}
