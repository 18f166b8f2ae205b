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
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "translog/checkpoint.hpp"
#include "translog/drain.hpp"
#include "translog/rng.hpp"
#include "translog/sessionizer.hpp"
#include "translog/tensor.hpp"

namespace translog {

// embeddings.bin: 8-byte magic, one JSON header line {rows, dim, source_name},
// then rows*dim little-endian float32 in row-major order.
inline constexpr char kEmbeddingsMagic[8] = {'L', 'O', 'G', 'E', 'M', 'B', '0', '1'};

struct EmbeddingTable {
    enum class Source { kFile, kHashed };

    int dim = 0;
    std::int64_t rows = 0;
    std::vector<float> vectors;  // rows x dim, row-major
    Source source = Source::kFile;

    const float* row(std::int64_t i) const { return vectors.data() + i * dim; }
};

/// Splits a token into lowercase stems on `_ - . / :` separators. The hashed
/// embedding is a bag of stems, so templates that share stems (e.g. the same
/// fault vocabulary spelled with different domain prefixes) land near each
/// other even without an external encoder.
inline std::vector<std::string> token_stems(std::string_view token) {
    std::vector<std::string> stems;
    std::string cur;
    for (char ch : token) {
        if (ch == '_' || ch == '-' || ch == '.' || ch == '/' || ch == ':') {
            if (!cur.empty()) stems.push_back(cur);
            cur.clear();
        } else {
            cur += static_cast<char>(
                ch >= 'A' && ch <= 'Z' ? ch - 'A' + 'a' : ch);
        }
    }
    if (!cur.empty()) stems.push_back(cur);
    return stems;
}

/// Per-stem weights; stems not in the map get weight 1.
using StemWeights = std::map<std::string, float>;

/// Deterministic unit-norm embedding of a template's token sequence: the
/// normalized weighted sum of per-stem hashed Gaussian vectors. Wildcard
/// markers carry no semantics and are skipped unless the template is nothing
/// but wildcards.
inline std::vector<float> hashed_embedding(const std::vector<std::string>& tokens, int dim,
                                           std::uint64_t seed,
                                           const StemWeights* weights = nullptr) {
    if (dim < 8) throw ConfigError("embedder: hashed dim must be >= 8");
    if (tokens.empty()) throw DataError("embedder: empty token list");
    std::vector<float> acc(static_cast<std::size_t>(dim), 0.0f);
    auto add_stem = [&](const std::string& stem) {
        float w = 1.0f;
        if (weights != nullptr) {
            const auto it = weights->find(stem);
            if (it != weights->end()) w = it->second;
        }
        Rng rng(fnv1a64(stem, fnv1a64("stem-embed") ^ seed));
        for (int j = 0; j < dim; ++j) acc[static_cast<std::size_t>(j)] += w * rng.normal();
    };
    bool any = false;
    for (const auto& tok : tokens) {
        if (tok == kWildcard) continue;
        for (const auto& stem : token_stems(tok)) {
            add_stem(stem);
            any = true;
        }
    }
    if (!any) add_stem(kWildcard);  // fully masked template
    double norm = 0.0;
    for (float v : acc) norm += double(v) * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) norm = 1.0;
    for (auto& v : acc) v = static_cast<float>(v / norm);
    return acc;
}

/// Inverse line-frequency stem weights over a mined inventory: rare fault
/// vocabulary stands out, high-traffic filler fades, the usual weighting for
/// word-vector template embeddings. Uses the templates' own match counts.
inline StemWeights idf_stem_weights(const std::vector<LogTemplate>& templates) {
    std::map<std::string, std::uint64_t> stem_lines;
    std::uint64_t total = 0;
    for (const auto& tmpl : templates) {
        total += tmpl.match_count;
        std::set<std::string> seen;
        for (const auto& tok : tmpl.tokens) {
            if (tok == kWildcard) continue;
            for (const auto& stem : token_stems(tok)) seen.insert(stem);
        }
        for (const auto& stem : seen) stem_lines[stem] += tmpl.match_count;
    }
    StemWeights w;
    for (const auto& [stem, lines] : stem_lines)
        w[stem] = static_cast<float>(
            1.0 + std::log(double(total + 1) / double(lines + 1)));
    return w;
}

/// Builds the whole table for a mined template inventory. IDF weighting is
/// on by default; pass use_idf=false for plain uniform stem weights.
inline EmbeddingTable hashed_table(const std::vector<LogTemplate>& templates, int dim,
                                   std::uint64_t seed, bool use_idf = true) {
    EmbeddingTable t;
    t.dim = dim;
    t.rows = static_cast<std::int64_t>(templates.size());
    t.source = EmbeddingTable::Source::kHashed;
    t.vectors.reserve(static_cast<std::size_t>(t.rows) * dim);
    const StemWeights weights = use_idf ? idf_stem_weights(templates) : StemWeights{};
    for (const auto& tmpl : templates) {
        const auto v = hashed_embedding(tmpl.tokens, dim, seed,
                                        use_idf ? &weights : nullptr);
        t.vectors.insert(t.vectors.end(), v.begin(), v.end());
    }
    return t;
}

inline void save_embeddings(const std::string& path, const EmbeddingTable& table,
                            const std::string& source_name) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("embeddings: cannot open '" + path + "' for writing");
    os.write(kEmbeddingsMagic, 8);
    nlohmann::json h;
    h["rows"] = table.rows;
    h["dim"] = table.dim;
    h["source_name"] = source_name;
    const std::string line = h.dump();
    os.write(line.data(), static_cast<std::streamsize>(line.size()));
    os.put('\n');
    detail::write_f32_le(os, table.vectors.data(), table.vectors.size());
    if (!os) throw DataError("embeddings: write to '" + path + "' failed");
}

/// Loads and validates an embedding file. Row-count mismatches, non-finite
/// values and truncation each get their own error.
inline EmbeddingTable load_embeddings(const std::string& path,
                                      std::int64_t expected_templates) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("embeddings: cannot open '" + path + "'");
    char magic[8];
    is.read(magic, 8);
    if (is.gcount() != 8 || !std::equal(magic, magic + 8, kEmbeddingsMagic))
        throw DataError("embeddings: bad magic in '" + path + "'");
    std::string line;
    if (!std::getline(is, line))
        throw DataError("embeddings: truncated header in '" + path + "'");
    EmbeddingTable t;
    std::string source_name;
    try {
        const auto h = nlohmann::json::parse(line);
        t.rows = h.at("rows").get<std::int64_t>();
        t.dim = h.at("dim").get<int>();
        source_name = h.value("source_name", std::string());
    } catch (const nlohmann::json::exception& e) {
        throw DataError("embeddings: malformed header in '" + path + "': " + e.what());
    }
    if (t.rows < 0 || t.dim < 1)
        throw DataError("embeddings: invalid header dimensions in '" + path + "'");
    if (t.rows != expected_templates)
        throw DataError("embeddings: row count mismatch in '" + path + "': file has " +
                        std::to_string(t.rows) + " rows, template table has " +
                        std::to_string(expected_templates));
    t.vectors.resize(static_cast<std::size_t>(t.rows) * t.dim);
    if (!detail::read_f32_le(is, t.vectors.data(), t.vectors.size()))
        throw DataError("embeddings: truncated payload in '" + path + "'");
    for (float v : t.vectors)
        if (!std::isfinite(v))
            throw DataError("embeddings: non-finite value in '" + path + "'");
    t.source = source_name == "hashed" ? EmbeddingTable::Source::kHashed
                                       : EmbeddingTable::Source::kFile;
    return t;
}

/// One session materialized as a fixed-shape l x d matrix plus padding mask.
struct SessionMatrix {
    Tensor values;                    // (l, d)
    std::vector<std::uint8_t> mask;   // length l, 1 = real event
    bool label = false;
};

inline SessionMatrix materialize(const Session& session, const EmbeddingTable& table,
                                 std::int64_t l) {
    if (l < 1) throw ConfigError("embedder: session length l must be >= 1");
    if (session.template_ids.empty())
        throw DataError("embedder: session has no events");
    SessionMatrix m;
    m.values = Tensor({l, table.dim});
    m.mask.assign(static_cast<std::size_t>(l), 0);
    m.label = session.label;
    const std::int64_t n =
        std::min<std::int64_t>(l, static_cast<std::int64_t>(session.template_ids.size()));
    for (std::int64_t i = 0; i < n; ++i) {
        const int tid = session.template_ids[static_cast<std::size_t>(i)];
        if (tid < 0 || tid >= table.rows)
            throw DataError("embedder: template id " + std::to_string(tid) +
                            " outside table of " + std::to_string(table.rows) + " rows");
        std::copy(table.row(tid), table.row(tid) + table.dim,
                  m.values.ptr() + i * table.dim);
        m.mask[static_cast<std::size_t>(i)] = 1;
    }
    return m;
}

/// A whole split materialized into contiguous batch-ready buffers.
struct Dataset {
    std::int64_t n = 0;
    std::int64_t l = 0;
    int d = 0;
    std::vector<float> values;          // n x l x d
    std::vector<std::uint8_t> masks;    // n x l
    std::vector<float> labels;          // n, each 0.0 or 1.0

    std::uint64_t content_hash() const {
        std::uint64_t h = fnv1a64(values.data(), values.size() * sizeof(float));
        h = fnv1a64(masks.data(), masks.size(), h);
        h = fnv1a64(labels.data(), labels.size() * sizeof(float), h);
        return h;
    }
};

inline Dataset materialize_all(const std::vector<Session>& sessions,
                               const EmbeddingTable& table, std::int64_t l) {
    Dataset ds;
    ds.n = static_cast<std::int64_t>(sessions.size());
    ds.l = l;
    ds.d = table.dim;
    ds.values.reserve(static_cast<std::size_t>(ds.n) * l * table.dim);
    ds.masks.reserve(static_cast<std::size_t>(ds.n) * l);
    ds.labels.reserve(static_cast<std::size_t>(ds.n));
    for (const auto& s : sessions) {
        SessionMatrix m = materialize(s, table, l);
        ds.values.insert(ds.values.end(), m.values.data.begin(), m.values.data.end());
        ds.masks.insert(ds.masks.end(), m.mask.begin(), m.mask.end());
        ds.labels.push_back(m.label ? 1.0f : 0.0f);
    }
    return ds;
}

}  // namespace translog
