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
// Test-only double-precision reference implementations of every engine op,
// kept deliberately naive (plain loops, no shared code with the engine).
// Gradient tests finite-difference these references and compare against the
// engine's analytic gradients.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "translog/autodiff.hpp"
#include "translog/rng.hpp"
#include "translog/tensor.hpp"

namespace refmath {

using dvec = std::vector<double>;

inline dvec to_double(const translog::Tensor& t) {
    return dvec(t.data.begin(), t.data.end());
}

inline dvec matmul(const dvec& a, const dvec& b, int n, int k, int m) {
    dvec c(static_cast<std::size_t>(n) * m, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += a[i * k + p] * b[p * m + j];
            c[i * m + j] = acc;
        }
    return c;
}

inline dvec linear(const dvec& x, const dvec& w, const dvec& b, int rows, int in, int out) {
    dvec y(static_cast<std::size_t>(rows) * out, 0.0);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < out; ++j) {
            double acc = b[j];
            for (int p = 0; p < in; ++p) acc += x[i * in + p] * w[p * out + j];
            y[i * out + j] = acc;
        }
    return y;
}

inline dvec bmm_nn(const dvec& a, const dvec& b, int bs, int n, int k, int m) {
    dvec c(static_cast<std::size_t>(bs) * n * m, 0.0);
    for (int i = 0; i < bs; ++i) {
        dvec ci = matmul(dvec(a.begin() + i * n * k, a.begin() + (i + 1) * n * k),
                         dvec(b.begin() + i * k * m, b.begin() + (i + 1) * k * m), n, k, m);
        std::copy(ci.begin(), ci.end(), c.begin() + i * n * m);
    }
    return c;
}

inline dvec bmm_nt(const dvec& a, const dvec& b, int bs, int n, int k, int m) {
    dvec c(static_cast<std::size_t>(bs) * n * m, 0.0);
    for (int i = 0; i < bs; ++i)
        for (int r = 0; r < n; ++r)
            for (int j = 0; j < m; ++j) {
                double acc = 0.0;
                for (int p = 0; p < k; ++p)
                    acc += a[(i * n + r) * k + p] * b[(i * m + j) * k + p];
                c[(i * n + r) * m + j] = acc;
            }
    return c;
}

inline dvec tanh_v(const dvec& x) {
    dvec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
    return y;
}

inline dvec sigmoid_v(const dvec& x) {
    dvec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
    return y;
}

inline dvec softmax_masked(const dvec& x, const std::vector<std::uint8_t>& mask, int rows,
                           int c) {
    const int groups = static_cast<int>(mask.size()) / c;
    const int rows_per_group = rows / groups;
    dvec y(x.size(), 0.0);
    for (int r = 0; r < rows; ++r) {
        const std::uint8_t* m = mask.data() + (r / rows_per_group) * c;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < c; ++j)
            if (m[j] && x[r * c + j] > mx) mx = x[r * c + j];
        double denom = 0.0;
        for (int j = 0; j < c; ++j)
            if (m[j]) denom += std::exp(x[r * c + j] - mx);
        for (int j = 0; j < c; ++j)
            y[r * c + j] = m[j] ? std::exp(x[r * c + j] - mx) / denom : 0.0;
    }
    return y;
}

inline dvec layer_norm(const dvec& x, const dvec& gamma, const dvec& beta, int rows, int d,
                       double eps = 1e-5) {
    dvec y(x.size());
    for (int r = 0; r < rows; ++r) {
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += x[r * d + j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double t = x[r * d + j] - mean;
            var += t * t;
        }
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < d; ++j)
            y[r * d + j] = (x[r * d + j] - mean) * inv * gamma[j] + beta[j];
    }
    return y;
}

inline dvec mean_pool_masked(const dvec& x, const std::vector<std::uint8_t>& mask, int b,
                             int l, int d) {
    dvec y(static_cast<std::size_t>(b) * d, 0.0);
    for (int bi = 0; bi < b; ++bi) {
        int cnt = 0;
        for (int li = 0; li < l; ++li) cnt += mask[bi * l + li] ? 1 : 0;
        for (int li = 0; li < l; ++li) {
            if (!mask[bi * l + li]) continue;
            for (int j = 0; j < d; ++j) y[bi * d + j] += x[(bi * l + li) * d + j];
        }
        for (int j = 0; j < d; ++j) y[bi * d + j] /= cnt;
    }
    return y;
}

inline dvec split_heads(const dvec& x, int b, int l, int d, int heads) {
    const int dh = d / heads;
    dvec y(x.size());
    for (int bi = 0; bi < b; ++bi)
        for (int hi = 0; hi < heads; ++hi)
            for (int li = 0; li < l; ++li)
                for (int j = 0; j < dh; ++j)
                    y[((bi * heads + hi) * l + li) * dh + j] =
                        x[(bi * l + li) * d + hi * dh + j];
    return y;
}

inline dvec merge_heads(const dvec& x, int b, int l, int dh, int heads) {
    const int d = dh * heads;
    dvec y(x.size());
    for (int bi = 0; bi < b; ++bi)
        for (int hi = 0; hi < heads; ++hi)
            for (int li = 0; li < l; ++li)
                for (int j = 0; j < dh; ++j)
                    y[(bi * l + li) * d + hi * dh + j] =
                        x[((bi * heads + hi) * l + li) * dh + j];
    return y;
}

inline double bce(const dvec& p, const std::vector<float>& labels) {
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pc = std::min(std::max(p[i], 1e-7), 1.0 - 1e-7);
        total += -(double(labels[i]) * std::log(pc) +
                   (1.0 - labels[i]) * std::log(1.0 - pc));
    }
    return total / static_cast<double>(p.size());
}

// ---------------------------------------------------------------------------
// Finite-difference harness. The engine path builds a graph over parameters
// bound to the test inputs and reduces the op output to a scalar through a
// fixed random projection; the reference path evaluates the double-precision
// function above and is central-differenced at h = 1e-3.
// ---------------------------------------------------------------------------

struct FdReport {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
};

inline FdReport check_gradients(
    std::vector<translog::Tensor> inputs,
    const std::function<translog::Var(translog::Graph&, const std::vector<translog::Var>&)>&
        build,
    const std::function<dvec(const std::vector<dvec>&)>& ref, double h = 1e-3,
    double denom_floor = 1e-2) {
    using namespace translog;

    // Analytic gradients from the engine.
    std::vector<Parameter> params;
    params.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i)
        params.emplace_back("in" + std::to_string(i), inputs[i], true);
    Graph g;
    std::vector<Var> vars;
    for (auto& p : params) vars.push_back(g.param(p));
    Var out = build(g, vars);
    const std::int64_t n_out = g.value(out).numel();

    Rng wrng(20260114);
    Tensor w({n_out, 1});
    for (auto& x : w.data) x = wrng.uniform(-1.0f, 1.0f);
    Var loss = g.matmul(g.reshape(out, {1, n_out}), g.input(w));
    g.backward(loss);

    // Reference loss at a given set of double inputs.
    auto ref_loss = [&](const std::vector<dvec>& xs) {
        dvec y = ref(xs);
        if (y.size() != static_cast<std::size_t>(n_out))
            throw std::logic_error("reference output size mismatch");
        double acc = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * double(w.data[i]);
        return acc;
    };

    std::vector<dvec> base;
    for (const auto& t : inputs) base.push_back(to_double(t));

    FdReport rep;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        for (std::size_t j = 0; j < base[t].size(); ++j) {
            std::vector<dvec> plus = base, minus = base;
            plus[t][j] += h;
            minus[t][j] -= h;
            const double num = (ref_loss(plus) - ref_loss(minus)) / (2.0 * h);
            const double ana = double(params[t].grad.data[j]);
            const double denom = std::max({std::abs(num), std::abs(ana), denom_floor});
            rep.max_rel_err = std::max(rep.max_rel_err, std::abs(num - ana) / denom);
            ++rep.checked;
        }
    }
    return rep;
}

}  // namespace refmath
