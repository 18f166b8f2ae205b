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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "translog/rng.hpp"
#include "translog/tensor.hpp"

namespace translog {

/// A named, persistently stored weight. Lives outside any graph; graphs bind
/// to it per step and accumulate into `grad`. The optimizer only ever touches
/// parameters whose `trainable` flag is set.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;
    bool has_grad = false;

    Parameter() = default;
    Parameter(std::string n, Tensor v, bool t = true)
        : name(std::move(n)), value(std::move(v)),
          grad(Tensor::zeros(value.shape)), trainable(t) {}

    void zero_grad() {
        std::fill(grad.data.begin(), grad.data.end(), 0.0f);
        has_grad = false;
    }
};

struct Var {
    std::int32_t idx = -1;
    bool valid() const { return idx >= 0; }
};

/// Reverse-mode tape. One graph per training step, single-threaded by
/// contract; independent graphs may run concurrently.
class Graph {
public:
    explicit Graph(bool training = false, Rng* dropout_rng = nullptr)
        : training_(training), dropout_rng_(dropout_rng) {
        nodes_.reserve(128);
    }

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool training() const { return training_; }

    /// Constant leaf; never receives a gradient.
    Var input(Tensor t) {
        return push(std::move(t), false, nullptr);
    }

    /// Leaf bound to a persistent parameter. Gradient is skipped entirely for
    /// frozen parameters, so a frozen backbone costs no backward GEMMs.
    Var param(Parameter& p) {
        Var v = push(p.value, p.trainable, &p);
        return v;
    }

    const Tensor& value(Var v) const { return node(v).value; }
    const Tensor& grad(Var v) const {
        const Node& n = node(v);
        if (!n.needs_grad) throw TensorError("grad requested for a non-differentiable node");
        return n.grad;
    }
    float scalar(Var v) const {
        const Tensor& t = node(v).value;
        if (t.numel() != 1) throw TensorError("scalar() on tensor of shape " + t.shape_str());
        return t.data[0];
    }

    // -- elementwise ---------------------------------------------------------

    Var add(Var a, Var b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        require_same_shape(ta, tb, "add");
        Tensor out = ta;
        for (std::int64_t i = 0; i < out.numel(); ++i) out.data[i] += tb.data[i];
        Var v = push(std::move(out), needs(a) || needs(b), nullptr);
        if (node(v).needs_grad)
            node(v).backprop = [a, b, v](Graph& g) {
                const Tensor& dy = g.node(v).grad;
                if (g.needs(a)) g.accumulate(a, dy.data.data());
                if (g.needs(b)) g.accumulate(b, dy.data.data());
            };
        return v;
    }

    Var scale(Var a, float c) {
        Tensor out = value(a);
        for (auto& x : out.data) x *= c;
        Var v = push(std::move(out), needs(a), nullptr);
        if (node(v).needs_grad)
            node(v).backprop = [a, c, v](Graph& g) {
                const Tensor& dy = g.node(v).grad;
                Tensor& da = g.node(a).grad;
                for (std::int64_t i = 0; i < dy.numel(); ++i) da.data[i] += c * dy.data[i];
            };
        return v;
    }

    Var tanh_op(Var a) {
        Tensor out = value(a);
        for (auto& x : out.data) x = std::tanh(x);
        Var v = push(std::move(out), needs(a), nullptr);
        if (node(v).needs_grad)
            node(v).backprop = [a, v](Graph& g) {
                const Tensor& y = g.node(v).value;
                const Tensor& dy = g.node(v).grad;
                Tensor& da = g.node(a).grad;
                for (std::int64_t i = 0; i < dy.numel(); ++i)
                    da.data[i] += dy.data[i] * (1.0f - y.data[i] * y.data[i]);
            };
        return v;
    }

    Var sigmoid(Var a) {
        Tensor out = value(a);
        for (auto& x : out.data) {
            if (x >= 0.0f) {
                x = 1.0f / (1.0f + std::exp(-x));
            } else {
                const float e = std::exp(x);
                x = e / (1.0f + e);
            }
        }
        Var v = push(std::move(out), needs(a), nullptr);
        if (node(v).needs_grad)
            node(v).backprop = [a, v](Graph& g) {
                const Tensor& y = g.node(v).value;
                const Tensor& dy = g.node(v).grad;
                Tensor& da = g.node(a).grad;
                for (std::int64_t i = 0; i < dy.numel(); ++i)
                    da.data[i] += dy.data[i] * y.data[i] * (1.0f - y.data[i]);
            };
        return v;
    }

    /// Inverted dropout. Identity (and no tape node) outside training; the
    /// mask is drawn from the graph's dropout stream so a fixed seed replays
    /// bit-identically.
    Var dropout(Var a, float p) {
        if (p < 0.0f || p >= 1.0f)
            throw TensorError("dropout probability must be in [0,1)");
        if (!training_ || p == 0.0f) return a;
        if (dropout_rng_ == nullptr)
            throw TensorError("training-mode dropout requires an rng stream");
        const Tensor& ta = value(a);
        const float keep_scale = 1.0f / (1.0f - p);
        auto mask = std::make_shared<std::vector<float>>(ta.data.size());
        Tensor out = ta;
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            const float m = dropout_rng_->bernoulli(p) ? 0.0f : keep_scale;
            (*mask)[i] = m;
            out.data[i] *= m;
        }
        Var v = push(std::move(out), needs(a), nullptr);
        if (node(v).needs_grad)
            node(v).backprop = [a, v, mask](Graph& g) {
                const Tensor& dy = g.node(v).grad;
                Tensor& da = g.node(a).grad;
                for (std::int64_t i = 0; i < dy.numel(); ++i)
                    da.data[i] += dy.data[i] * (*mask)[i];
            };
        return v;
    }

    // -- matrix products -----------------------------------------------------

    Var matmul(Var a, Var b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(0))
            throw TensorError("matmul: incompatible shapes " + ta.shape_str() + " vs " +
                              tb.shape_str());
        const std::int64_t n = ta.dim(0), k = ta.dim(1), m = tb.dim(1);
        Tensor out({n, m});
        gemm::nn(out.ptr(), ta.ptr(), tb.ptr(), n, k, m);
        Var v = push(std::move(out), needs(a) || needs(b), nullptr);
        if (node(v).needs_grad)
            node(v).backprop = [a, b, v, n, k, m](Graph& g) {
                const Tensor& dy = g.node(v).grad;
                if (g.needs(a))
                    gemm::nt(g.node(a).grad.ptr(), dy.ptr(), g.node(b).value.ptr(), n, m, k);
                if (g.needs(b))
                    gemm::tn(g.node(b).grad.ptr(), g.node(a).value.ptr(), dy.ptr(), k, n, m);
            };
        return v;
    }

    /// y = x @ w + bias, with x of shape (..., in). Collapses leading dims.
    Var linear(Var x, Var w, Var b) {
        const Tensor& tx = value(x);
        const Tensor& tw = value(w);
        const Tensor& tb = value(b);
        if (tx.rank() < 1 || tw.rank() != 2 || tx.shape.back() != tw.dim(0))
            throw TensorError("linear: incompatible shapes " + tx.shape_str() + " vs " +
                              tw.shape_str());
        const std::int64_t in = tw.dim(0), out_dim = tw.dim(1);
        if (tb.rank() != 1 || tb.dim(0) != out_dim)
            throw TensorError("linear: bias shape " + tb.shape_str() + " vs weight " +
                              tw.shape_str());
        const std::int64_t rows = tx.numel() / in;
        std::vector<std::int64_t> out_shape = tx.shape;
        out_shape.back() = out_dim;
        Tensor out(out_shape);
        for (std::int64_t i = 0; i < rows; ++i)
            std::copy(tb.data.begin(), tb.data.end(), out.data.begin() + i * out_dim);
        gemm::nn(out.ptr(), tx.ptr(), tw.ptr(), rows, in, out_dim);
        Var v = push(std::move(out), needs(x) || needs(w) || needs(b), nullptr);
        if (node(v).needs_grad)
            node(v).backprop = [x, w, b, v, rows, in, out_dim](Graph& g) {
                const Tensor& dy = g.node(v).grad;
                if (g.needs(x))
                    gemm::nt(g.node(x).grad.ptr(), dy.ptr(), g.node(w).value.ptr(), rows,
                             out_dim, in);
                if (g.needs(w))
                    gemm::tn(g.node(w).grad.ptr(), g.node(x).value.ptr(), dy.ptr(), in, rows,
                             out_dim);
                if (g.needs(b)) {
                    Tensor& db = g.node(b).grad;
                    for (std::int64_t i = 0; i < rows; ++i) {
                        const float* row = dy.ptr() + i * out_dim;
                        for (std::int64_t j = 0; j < out_dim; ++j) db.data[j] += row[j];
                    }
                }
            };
        return v;
    }

    /// Batched C[i] = A[i] @ B[i] with A (B,n,k), B (B,k,m).
    Var bmm_nn(Var a, Var b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        if (ta.rank() != 3 || tb.rank() != 3 || ta.dim(0) != tb.dim(0) ||
            ta.dim(2) != tb.dim(1))
            throw TensorError("bmm_nn: incompatible shapes " + ta.shape_str() + " vs " +
                              tb.shape_str());
        const std::int64_t bs = ta.dim(0), n = ta.dim(1), k = ta.dim(2), m = tb.dim(2);
        Tensor out({bs, n, m});
        for (std::int64_t i = 0; i < bs; ++i)
            gemm::nn(out.ptr() + i * n * m, ta.ptr() + i * n * k, tb.ptr() + i * k * m, n, k, m);
        Var v = push(std::move(out), needs(a) || needs(b), nullptr);
        if (node(v).needs_grad)
            node(v).backprop = [a, b, v, bs, n, k, m](Graph& g) {
                const Tensor& dy = g.node(v).grad;
                for (std::int64_t i = 0; i < bs; ++i) {
                    const float* dyp = dy.ptr() + i * n * m;
                    if (g.needs(a))
                        gemm::nt(g.node(a).grad.ptr() + i * n * k, dyp,
                                 g.node(b).value.ptr() + i * k * m, n, m, k);
                    if (g.needs(b))
                        gemm::tn(g.node(b).grad.ptr() + i * k * m,
                                 g.node(a).value.ptr() + i * n * k, dyp, k, n, m);
                }
            };
        return v;
    }

    /// Batched C[i] = A[i] @ B[i]^T with A (B,n,k), B (B,m,k).
    Var bmm_nt(Var a, Var b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        if (ta.rank() != 3 || tb.rank() != 3 || ta.dim(0) != tb.dim(0) ||
            ta.dim(2) != tb.dim(2))
            throw TensorError("bmm_nt: incompatible shapes " + ta.shape_str() + " vs " +
                              tb.shape_str());
        const std::int64_t bs = ta.dim(0), n = ta.dim(1), k = ta.dim(2), m = tb.dim(1);
        Tensor out({bs, n, m});
        for (std::int64_t i = 0; i < bs; ++i)
            gemm::nt(out.ptr() + i * n * m, ta.ptr() + i * n * k, tb.ptr() + i * m * k, n, k, m);
        Var v = push(std::move(out), needs(a) || needs(b), nullptr);
        if (node(v).needs_grad)
            node(v).backprop = [a, b, v, bs, n, k, m](Graph& g) {
                const Tensor& dy = g.node(v).grad;
                for (std::int64_t i = 0; i < bs; ++i) {
                    const float* dyp = dy.ptr() + i * n * m;
                    if (g.needs(a))
                        gemm::nn(g.node(a).grad.ptr() + i * n * k, dyp,
                                 g.node(b).value.ptr() + i * m * k, n, m, k);
                    if (g.needs(b))
                        gemm::tn(g.node(b).grad.ptr() + i * m * k, dyp,
                                 g.node(a).value.ptr() + i * n * k, m, n, k);
                }
            };
        return v;
    }

    // -- shape plumbing ------------------------------------------------------

    Var reshape(Var a, std::vector<std::int64_t> new_shape) {
        const Tensor& ta = value(a);
        if (Tensor::numel_of(new_shape) != ta.numel())
            throw TensorError("reshape: element count mismatch " + ta.shape_str());
        Tensor out(std::move(new_shape), ta.data);
        Var v = push(std::move(out), needs(a), nullptr);
        if (node(v).needs_grad)
            node(v).backprop = [a, v](Graph& g) {
                g.accumulate(a, g.node(v).grad.data.data());
            };
        return v;
    }

    /// (b, l, d) -> (b*heads, l, d/heads)
    Var split_heads(Var a, int heads) {
        const Tensor& ta = value(a);
        if (ta.rank() != 3 || ta.dim(2) % heads != 0)
            throw TensorError("split_heads: bad shape " + ta.shape_str());
        const std::int64_t b = ta.dim(0), l = ta.dim(1), d = ta.dim(2), dh = d / heads;
        Tensor out({b * heads, l, dh});
        for (std::int64_t bi = 0; bi < b; ++bi)
            for (std::int64_t hi = 0; hi < heads; ++hi)
                for (std::int64_t li = 0; li < l; ++li) {
                    const float* src = ta.ptr() + (bi * l + li) * d + hi * dh;
                    float* dst = out.ptr() + ((bi * heads + hi) * l + li) * dh;
                    std::copy(src, src + dh, dst);
                }
        Var v = push(std::move(out), needs(a), nullptr);
        if (node(v).needs_grad)
            node(v).backprop = [a, v, b, l, d, dh, heads](Graph& g) {
                const Tensor& dy = g.node(v).grad;
                Tensor& da = g.node(a).grad;
                for (std::int64_t bi = 0; bi < b; ++bi)
                    for (std::int64_t hi = 0; hi < heads; ++hi)
                        for (std::int64_t li = 0; li < l; ++li) {
                            const float* src = dy.ptr() + ((bi * heads + hi) * l + li) * dh;
                            float* dst = da.ptr() + (bi * l + li) * d + hi * dh;
                            for (std::int64_t j = 0; j < dh; ++j) dst[j] += src[j];
                        }
            };
        return v;
    }

    /// (b*heads, l, dh) -> (b, l, heads*dh); inverse of split_heads.
    Var merge_heads(Var a, int heads) {
        const Tensor& ta = value(a);
        if (ta.rank() != 3 || ta.dim(0) % heads != 0)
            throw TensorError("merge_heads: bad shape " + ta.shape_str());
        const std::int64_t b = ta.dim(0) / heads, l = ta.dim(1), dh = ta.dim(2), d = dh * heads;
        Tensor out({b, l, d});
        for (std::int64_t bi = 0; bi < b; ++bi)
            for (std::int64_t hi = 0; hi < heads; ++hi)
                for (std::int64_t li = 0; li < l; ++li) {
                    const float* src = ta.ptr() + ((bi * heads + hi) * l + li) * dh;
                    float* dst = out.ptr() + (bi * l + li) * d + hi * dh;
                    std::copy(src, src + dh, dst);
                }
        Var v = push(std::move(out), needs(a), nullptr);
        if (node(v).needs_grad)
            node(v).backprop = [a, v, b, l, d, dh, heads](Graph& g) {
                const Tensor& dy = g.node(v).grad;
                Tensor& da = g.node(a).grad;
                for (std::int64_t bi = 0; bi < b; ++bi)
                    for (std::int64_t hi = 0; hi < heads; ++hi)
                        for (std::int64_t li = 0; li < l; ++li) {
                            const float* src = dy.ptr() + (bi * l + li) * d + hi * dh;
                            float* dst = da.ptr() + ((bi * heads + hi) * l + li) * dh;
                            for (std::int64_t j = 0; j < dh; ++j) dst[j] += src[j];
                        }
            };
        return v;
    }

    // -- normalization / reductions ------------------------------------------

    /// Numerically guarded softmax over the last axis. `key_mask` holds one
    /// byte per (group, column); rows are mapped to groups by contiguous
    /// blocks, so a (batch*heads, l, l) tensor shares one (batch, l) mask.
    /// Masked columns get probability exactly 0; a fully masked row is an
    /// error, not a NaN.
    Var softmax_masked(Var a, const std::vector<std::uint8_t>& key_mask) {
        const Tensor& ta = value(a);
        if (ta.rank() < 1) throw TensorError("softmax: scalar input");
        const std::int64_t c = ta.shape.back();
        const std::int64_t rows = ta.numel() / c;
        if (key_mask.size() % static_cast<std::size_t>(c) != 0)
            throw TensorError("softmax: mask size not a multiple of row length");
        const std::int64_t groups = static_cast<std::int64_t>(key_mask.size()) / c;
        if (groups == 0 || rows % groups != 0)
            throw TensorError("softmax: rows not divisible into mask groups");
        const std::int64_t rows_per_group = rows / groups;

        Tensor out = ta;
        for (std::int64_t r = 0; r < rows; ++r) {
            const std::uint8_t* mask = key_mask.data() + (r / rows_per_group) * c;
            float* row = out.ptr() + r * c;
            float mx = -std::numeric_limits<float>::infinity();
            bool any_unmasked = false;
            for (std::int64_t j = 0; j < c; ++j) {
                if (!mask[j]) continue;
                any_unmasked = true;
                if (row[j] > mx) mx = row[j];
            }
            if (!any_unmasked) throw TensorError("softmax: fully-masked row");
            if (!std::isfinite(mx))
                throw TrainingDiverged("softmax: non-finite logits");
            double denom = 0.0;
            for (std::int64_t j = 0; j < c; ++j) {
                if (mask[j]) {
                    row[j] = std::exp(row[j] - mx);
                    denom += row[j];
                } else {
                    row[j] = 0.0f;
                }
            }
            const float inv = static_cast<float>(1.0 / denom);
            for (std::int64_t j = 0; j < c; ++j) row[j] *= inv;
        }
        Var v = push(std::move(out), needs(a), nullptr);
        if (node(v).needs_grad)
            node(v).backprop = [a, v, rows, c](Graph& g) {
                const Tensor& y = g.node(v).value;
                const Tensor& dy = g.node(v).grad;
                Tensor& da = g.node(a).grad;
                for (std::int64_t r = 0; r < rows; ++r) {
                    const float* yr = y.ptr() + r * c;
                    const float* dyr = dy.ptr() + r * c;
                    float* dar = da.ptr() + r * c;
                    double dot = 0.0;
                    for (std::int64_t j = 0; j < c; ++j) dot += double(yr[j]) * dyr[j];
                    for (std::int64_t j = 0; j < c; ++j)
                        dar[j] += yr[j] * (dyr[j] - static_cast<float>(dot));
                }
            };
        return v;
    }

    Var softmax(Var a) {
        const std::int64_t c = value(a).shape.back();
        return softmax_masked(a, std::vector<std::uint8_t>(static_cast<std::size_t>(c), 1));
    }

    /// Layer norm over the last axis with learned scale/offset.
    Var layer_norm(Var a, Var gamma, Var beta, float eps = 1e-5f) {
        const Tensor& ta = value(a);
        const Tensor& tg = value(gamma);
        const Tensor& tb = value(beta);
        const std::int64_t d = ta.shape.back();
        if (tg.rank() != 1 || tg.dim(0) != d || tb.rank() != 1 || tb.dim(0) != d)
            throw TensorError("layer_norm: scale/offset shape " + tg.shape_str() +
                              " vs input " + ta.shape_str());
        const std::int64_t rows = ta.numel() / d;
        Tensor out(ta.shape);
        auto xhat = std::make_shared<std::vector<float>>(ta.data.size());
        auto inv_std = std::make_shared<std::vector<float>>(static_cast<std::size_t>(rows));
        for (std::int64_t r = 0; r < rows; ++r) {
            const float* row = ta.ptr() + r * d;
            double mean = 0.0;
            for (std::int64_t j = 0; j < d; ++j) mean += row[j];
            mean /= d;
            double var = 0.0;
            for (std::int64_t j = 0; j < d; ++j) {
                const double t = row[j] - mean;
                var += t * t;
            }
            var /= d;
            const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
            (*inv_std)[static_cast<std::size_t>(r)] = inv;
            float* orow = out.ptr() + r * d;
            float* xh = xhat->data() + r * d;
            for (std::int64_t j = 0; j < d; ++j) {
                xh[j] = (row[j] - static_cast<float>(mean)) * inv;
                orow[j] = xh[j] * tg.data[j] + tb.data[j];
            }
        }
        Var v = push(std::move(out), needs(a) || needs(gamma) || needs(beta), nullptr);
        if (node(v).needs_grad)
            node(v).backprop = [a, gamma, beta, v, rows, d, xhat, inv_std](Graph& g) {
                const Tensor& dy = g.node(v).grad;
                const Tensor& tg = g.node(gamma).value;
                for (std::int64_t r = 0; r < rows; ++r) {
                    const float* dyr = dy.ptr() + r * d;
                    const float* xh = xhat->data() + r * d;
                    if (g.needs(gamma)) {
                        Tensor& dgm = g.node(gamma).grad;
                        for (std::int64_t j = 0; j < d; ++j) dgm.data[j] += dyr[j] * xh[j];
                    }
                    if (g.needs(beta)) {
                        Tensor& dbt = g.node(beta).grad;
                        for (std::int64_t j = 0; j < d; ++j) dbt.data[j] += dyr[j];
                    }
                    if (g.needs(a)) {
                        // dx = inv * (h - mean(h) - xhat * mean(h*xhat)), h = dy*gamma
                        double mean_h = 0.0, mean_hx = 0.0;
                        for (std::int64_t j = 0; j < d; ++j) {
                            const double h = double(dyr[j]) * tg.data[j];
                            mean_h += h;
                            mean_hx += h * xh[j];
                        }
                        mean_h /= d;
                        mean_hx /= d;
                        const float inv = (*inv_std)[static_cast<std::size_t>(r)];
                        Tensor& da = g.node(a).grad;
                        float* dar = da.ptr() + r * d;
                        for (std::int64_t j = 0; j < d; ++j) {
                            const double h = double(dyr[j]) * tg.data[j];
                            dar[j] += inv * static_cast<float>(h - mean_h - xh[j] * mean_hx);
                        }
                    }
                }
            };
        return v;
    }

    /// (b, l, d) + per-position mask -> (b, d); mean over unmasked positions.
    Var mean_pool_masked(Var a, const std::vector<std::uint8_t>& mask) {
        const Tensor& ta = value(a);
        if (ta.rank() != 3)
            throw TensorError("mean_pool: expected rank-3 input, got " + ta.shape_str());
        const std::int64_t b = ta.dim(0), l = ta.dim(1), d = ta.dim(2);
        if (mask.size() != static_cast<std::size_t>(b * l))
            throw TensorError("mean_pool: mask size mismatch");
        auto counts = std::make_shared<std::vector<float>>(static_cast<std::size_t>(b), 0.0f);
        for (std::int64_t bi = 0; bi < b; ++bi) {
            std::int64_t cnt = 0;
            for (std::int64_t li = 0; li < l; ++li) cnt += mask[bi * l + li] ? 1 : 0;
            if (cnt == 0) throw TensorError("mean_pool: session with no unmasked positions");
            (*counts)[static_cast<std::size_t>(bi)] = static_cast<float>(cnt);
        }
        Tensor out({b, d});
        for (std::int64_t bi = 0; bi < b; ++bi) {
            float* orow = out.ptr() + bi * d;
            for (std::int64_t li = 0; li < l; ++li) {
                if (!mask[bi * l + li]) continue;
                const float* row = ta.ptr() + (bi * l + li) * d;
                for (std::int64_t j = 0; j < d; ++j) orow[j] += row[j];
            }
            const float inv = 1.0f / (*counts)[static_cast<std::size_t>(bi)];
            for (std::int64_t j = 0; j < d; ++j) orow[j] *= inv;
        }
        auto mask_copy = std::make_shared<std::vector<std::uint8_t>>(mask);
        Var v = push(std::move(out), needs(a), nullptr);
        if (node(v).needs_grad)
            node(v).backprop = [a, v, b, l, d, counts, mask_copy](Graph& g) {
                const Tensor& dy = g.node(v).grad;
                Tensor& da = g.node(a).grad;
                for (std::int64_t bi = 0; bi < b; ++bi) {
                    const float inv = 1.0f / (*counts)[static_cast<std::size_t>(bi)];
                    const float* dyr = dy.ptr() + bi * d;
                    for (std::int64_t li = 0; li < l; ++li) {
                        if (!(*mask_copy)[bi * l + li]) continue;
                        float* dar = da.ptr() + (bi * l + li) * d;
                        for (std::int64_t j = 0; j < d; ++j) dar[j] += dyr[j] * inv;
                    }
                }
            };
        return v;
    }

    /// Mean binary cross-entropy over the batch. Probabilities are clamped to
    /// [1e-7, 1-1e-7] before the log; the clamp also zeroes the gradient
    /// outside that range.
    Var bce_loss(Var probs, const std::vector<float>& labels) {
        const Tensor& tp = value(probs);
        const std::int64_t n = tp.numel();
        if (n != static_cast<std::int64_t>(labels.size()))
            throw TensorError("bce_loss: probs " + tp.shape_str() + " vs " +
                              std::to_string(labels.size()) + " labels");
        constexpr float kEps = 1e-7f;
        double total = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            const float y = labels[static_cast<std::size_t>(i)];
            if (y != 0.0f && y != 1.0f)
                throw Error("bce_loss: label outside {0,1}");
            const float p = std::min(std::max(tp.data[i], kEps), 1.0f - kEps);
            total += -(double(y) * std::log(p) + (1.0 - y) * std::log(1.0 - p));
        }
        Tensor out({1});
        out.data[0] = static_cast<float>(total / n);
        auto labels_copy = std::make_shared<std::vector<float>>(labels);
        Var v = push(std::move(out), needs(probs), nullptr);
        if (node(v).needs_grad)
            node(v).backprop = [probs, v, n, labels_copy](Graph& g) {
                const float dL = g.node(v).grad.data[0];
                const Tensor& tp = g.node(probs).value;
                Tensor& dp = g.node(probs).grad;
                for (std::int64_t i = 0; i < n; ++i) {
                    const float p = tp.data[i];
                    if (p < 1e-7f || p > 1.0f - 1e-7f) continue;  // clamped: no gradient
                    const float y = (*labels_copy)[static_cast<std::size_t>(i)];
                    dp.data[i] += dL * (p - y) / (p * (1.0f - p)) / static_cast<float>(n);
                }
            };
        return v;
    }

    // -- engine ---------------------------------------------------------------

    void backward(Var loss) {
        Node& ln = node(loss);
        if (ln.value.numel() != 1)
            throw TensorError("backward: loss must be scalar, got " + ln.value.shape_str());
        if (!ln.needs_grad)
            throw TensorError("backward: loss does not depend on any parameter");
        ln.grad.data[0] = 1.0f;
        for (std::int64_t i = static_cast<std::int64_t>(nodes_.size()) - 1; i >= 0; --i) {
            Node& nd = nodes_[static_cast<std::size_t>(i)];
            if (!nd.needs_grad) continue;
            if (nd.backprop) nd.backprop(*this);
            if (nd.bound != nullptr) {
                Tensor& pg = nd.bound->grad;
                for (std::int64_t j = 0; j < nd.grad.numel(); ++j)
                    pg.data[j] += nd.grad.data[j];
                nd.bound->has_grad = true;
            }
        }
    }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        Parameter* bound = nullptr;
        std::function<void(Graph&)> backprop;
    };

    friend struct NodeAccess;

    bool needs(Var v) const { return node(v).needs_grad; }

    void accumulate(Var v, const float* src) {
        Tensor& g = node(v).grad;
        for (std::int64_t i = 0; i < g.numel(); ++i) g.data[i] += src[i];
    }

    Node& node(Var v) {
        if (!v.valid() || v.idx >= static_cast<std::int32_t>(nodes_.size()))
            throw TensorError("invalid graph variable");
        return nodes_[static_cast<std::size_t>(v.idx)];
    }
    const Node& node(Var v) const {
        if (!v.valid() || v.idx >= static_cast<std::int32_t>(nodes_.size()))
            throw TensorError("invalid graph variable");
        return nodes_[static_cast<std::size_t>(v.idx)];
    }

    Var push(Tensor value, bool needs_grad, Parameter* bound) {
        Node nd;
        nd.value = std::move(value);
        nd.needs_grad = needs_grad;
        nd.bound = bound;
        if (needs_grad) nd.grad = Tensor::zeros(nd.value.shape);
        nodes_.push_back(std::move(nd));
        return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    std::vector<Node> nodes_;
    bool training_;
    Rng* dropout_rng_;
};

}  // namespace translog
