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
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "translog/common.hpp"
#include "translog/rng.hpp"

namespace translog {

/// Dense row-major float32 n-d array. Plain value type; the autodiff graph
/// and the parameter store own these directly.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(numel_of(shape)), 0.0f);
    }
    Tensor(std::vector<std::int64_t> s, std::vector<float> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<std::int64_t>(data.size()) != numel_of(shape))
            throw TensorError("tensor data length does not match shape " + shape_str());
    }

    static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
        std::int64_t n = 1;
        for (auto v : s) {
            if (v <= 0) throw TensorError("non-positive dimension in tensor shape");
            n *= v;
        }
        return n;
    }

    static Tensor zeros(std::vector<std::int64_t> s) { return Tensor(std::move(s)); }

    static Tensor filled(std::vector<std::int64_t> s, float v) {
        Tensor t(std::move(s));
        for (auto& x : t.data) x = v;
        return t;
    }

    static Tensor uniform(std::vector<std::int64_t> s, float lo, float hi, Rng& rng) {
        Tensor t(std::move(s));
        for (auto& x : t.data) x = rng.uniform(lo, hi);
        return t;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    std::size_t rank() const { return shape.size(); }
    std::int64_t dim(std::size_t i) const { return shape.at(i); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::ostringstream os;
        os << "(";
        for (std::size_t i = 0; i < shape.size(); ++i)
            os << shape[i] << (i + 1 < shape.size() ? ", " : "");
        os << ")";
        return os.str();
    }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    float* ptr() { return data.data(); }
    const float* ptr() const { return data.data(); }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw TensorError(std::string(op) + ": shape mismatch " + a.shape_str() +
                          " vs " + b.shape_str());
}

// ---------------------------------------------------------------------------
// Raw GEMM kernels. Loop orders are chosen so the inner loop runs over
// contiguous rows and auto-vectorizes; this is the entire hot path of
// training, everything else is O(n).
// ---------------------------------------------------------------------------
namespace gemm {

/// C(n,m) += A(n,k) * B(k,m)
inline void nn(float* c, const float* a, const float* b, std::int64_t n,
               std::int64_t k, std::int64_t m) {
    for (std::int64_t i = 0; i < n; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * m;
        for (std::int64_t p = 0; p < k; ++p) {
            const float av = arow[p];
            const float* brow = b + p * m;
            for (std::int64_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

namespace detail {

/// scratch(k, m) = transpose of src(m, k); per-thread buffer so independent
/// graphs can run concurrently
inline float* transpose_scratch(const float* src, std::int64_t rows, std::int64_t cols) {
    thread_local std::vector<float> scratch;
    scratch.resize(static_cast<std::size_t>(rows * cols));
    for (std::int64_t i = 0; i < rows; ++i)
        for (std::int64_t j = 0; j < cols; ++j) scratch[j * rows + i] = src[i * cols + j];
    return scratch.data();
}

}  // namespace detail

/// C(n,m) += A(n,k) * B(m,k)^T. Dot-product loops defeat the vectorizer, so
/// B is transposed into scratch and fed through the nn kernel; the transpose
/// is O(km) against the O(nkm) product.
inline void nt(float* c, const float* a, const float* b, std::int64_t n,
               std::int64_t k, std::int64_t m) {
    if (n == 1) {  // single row: the transpose would dominate
        float* crow = c;
        for (std::int64_t j = 0; j < m; ++j) {
            const float* brow = b + j * k;
            float acc = 0.0f;
            for (std::int64_t p = 0; p < k; ++p) acc += a[p] * brow[p];
            crow[j] += acc;
        }
        return;
    }
    nn(c, a, detail::transpose_scratch(b, m, k), n, k, m);
}

/// C(n,m) += A(k,n)^T * B(k,m)
inline void tn(float* c, const float* a, const float* b, std::int64_t n,
               std::int64_t k, std::int64_t m) {
    nn(c, detail::transpose_scratch(a, k, n), b, n, k, m);
}

}  // namespace gemm

}  // namespace translog
