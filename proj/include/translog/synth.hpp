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

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "translog/common.hpp"
#include "translog/rng.hpp"

namespace translog {

struct PatternToken {
    enum class Kind { kLiteral, kNumber, kHex, kBlockId };
    Kind kind = Kind::kLiteral;
    std::string text;  // literal tokens only

    static PatternToken literal(std::string t) {
        return PatternToken{Kind::kLiteral, std::move(t)};
    }
    static PatternToken number() { return PatternToken{Kind::kNumber, ""}; }
    static PatternToken hex() { return PatternToken{Kind::kHex, ""}; }
    static PatternToken block_id() { return PatternToken{Kind::kBlockId, ""}; }
};

struct Pattern {
    std::string anomaly_class;  // empty for normal patterns
    std::vector<PatternToken> tokens;
};

/// A synthetic log domain: fixed generating patterns, a shared anomaly-class
/// registry, and a burst-injection rate. Deterministic per seed.
struct DomainSpec {
    std::string name;
    std::uint64_t seed = 0;
    double anomaly_rate = 0.05;
    std::vector<Pattern> normals;
    std::vector<Pattern> anomalies;

    void validate() const {
        if (anomaly_rate < 0.0 || anomaly_rate >= 1.0)
            throw ConfigError("synth: anomaly_rate must be in [0,1)");
        if (normals.size() < 2)
            throw ConfigError("synth: need at least 2 normal patterns");
        if (anomalies.empty() && anomaly_rate > 0.0)
            throw ConfigError("synth: need at least 1 anomaly pattern");
        for (const auto& a : anomalies)
            if (a.anomaly_class.empty())
                throw ConfigError("synth: anomaly pattern without class tag");
    }

    std::set<std::string> vocabulary() const {
        std::set<std::string> v;
        for (const auto* bank : {&normals, &anomalies})
            for (const auto& p : *bank)
                for (const auto& t : p.tokens)
                    if (t.kind == PatternToken::Kind::kLiteral) v.insert(t.text);
        return v;
    }

    std::size_t pattern_count() const { return normals.size() + anomalies.size(); }
};

struct GeneratedCorpus {
    std::vector<std::string> lines;    // "<label> <content>", label "-" = normal
    std::vector<std::string> classes;  // per-line anomaly class, empty = normal
};

/// Anomalies arrive as contiguous bursts of 1-3 lines starting at
/// Bernoulli-selected positions. With start probability p and mean burst
/// length 2 the anomalous fraction is 2p/(1+p), so hitting a requested rate
/// a needs p = a/(2-a).
inline double burst_start_probability(double anomaly_rate) {
    return anomaly_rate <= 0.0 ? 0.0 : anomaly_rate / (2.0 - anomaly_rate);
}

inline GeneratedCorpus generate(const DomainSpec& spec, std::size_t num_lines) {
    spec.validate();
    if (num_lines < 1) throw ConfigError("synth: num_lines must be >= 1");
    Rng burst_rng = named_stream(spec.seed, "synth-burst");
    Rng pattern_rng = named_stream(spec.seed, "synth-pattern");
    Rng param_rng = named_stream(spec.seed, "synth-param");

    auto render = [&](const Pattern& p) {
        std::string content;
        for (std::size_t i = 0; i < p.tokens.size(); ++i) {
            if (i) content += ' ';
            switch (p.tokens[i].kind) {
                case PatternToken::Kind::kLiteral:
                    content += p.tokens[i].text;
                    break;
                case PatternToken::Kind::kNumber:
                    content += std::to_string(param_rng.uniform_int(0, 99999));
                    break;
                case PatternToken::Kind::kHex: {
                    char buf[16];
                    std::snprintf(buf, sizeof buf, "0x%llx",
                                  static_cast<unsigned long long>(
                                      param_rng.uniform_int(0x10, 0xfffff)));
                    content += buf;
                    break;
                }
                case PatternToken::Kind::kBlockId:
                    content += "blk_" + std::to_string(param_rng.uniform_int(0, 1 << 30));
                    break;
            }
        }
        return content;
    };

    const double p_start = burst_start_probability(spec.anomaly_rate);
    GeneratedCorpus out;
    out.lines.reserve(num_lines);
    out.classes.reserve(num_lines);
    std::size_t i = 0;
    while (i < num_lines) {
        if (!spec.anomalies.empty() && burst_rng.bernoulli(p_start)) {
            const auto& pat = spec.anomalies[static_cast<std::size_t>(pattern_rng.uniform_int(
                0, static_cast<std::int64_t>(spec.anomalies.size()) - 1))];
            const auto burst_len = static_cast<std::size_t>(burst_rng.uniform_int(1, 3));
            for (std::size_t j = 0; j < burst_len && i < num_lines; ++j, ++i) {
                out.lines.push_back(pat.anomaly_class + " " + render(pat));
                out.classes.push_back(pat.anomaly_class);
            }
        } else {
            const auto& pat = spec.normals[static_cast<std::size_t>(pattern_rng.uniform_int(
                0, static_cast<std::int64_t>(spec.normals.size()) - 1))];
            out.lines.push_back("- " + render(pat));
            out.classes.push_back("");
            ++i;
        }
    }
    return out;
}

/// The cross-domain anomaly-class registry with the stem pool each class
/// shares between domains.
inline const std::vector<std::pair<std::string, std::vector<std::string>>>&
shared_class_registry() {
    static const std::vector<std::pair<std::string, std::vector<std::string>>> reg = {
        {"unusual_end_of_program", {"terminated", "abnormally", "exitcode", "halted"}},
        {"program_not_running", {"daemon", "unresponsive", "stalled", "heartbeat"}},
        {"io_timeout", {"timeout", "deadline", "blocked", "retry"}},
        {"memory_exhausted", {"memory", "exhausted", "alloc", "oom"}},
    };
    return reg;
}

/// Operational vocabulary every log system shares ("started", "received",
/// ...). Normal patterns weave these into domain-prefixed compounds the same
/// way anomaly patterns carry class stems, mirroring how a real sentence
/// encoder maps routine messages from different systems near each other.
inline const std::vector<std::string>& shared_normal_register() {
    static const std::vector<std::string> reg = {
        "started", "stopped", "received", "sending", "write",  "read",
        "connect", "closed",  "opened",   "request", "reply",  "status",
        "ready",   "queue",   "worker",   "session", "commit", "verify",
    };
    return reg;
}

namespace detail {

inline std::string random_stem(Rng& rng) {
    static const char* kConsonants = "bcdfghjklmnpqrstvwz";
    static const char* kVowels = "aeiou";
    std::string s;
    const int syllables = static_cast<int>(rng.uniform_int(2, 3));
    for (int i = 0; i < syllables; ++i) {
        s += kConsonants[rng.uniform_int(0, 18)];
        s += kVowels[rng.uniform_int(0, 4)];
        if (rng.bernoulli(0.4)) s += kConsonants[rng.uniform_int(0, 18)];
    }
    return s;
}

inline PatternToken param_token(Rng& rng) {
    switch (rng.uniform_int(0, 2)) {
        case 0: return PatternToken::number();
        case 1: return PatternToken::hex();
        default: return PatternToken::block_id();
    }
}

/// Masked skeleton similarity between two patterns (params as wildcards,
/// wildcard matches anything), mirroring the parser's merge rule.
inline float pattern_similarity(const Pattern& a, const Pattern& b) {
    if (a.tokens.size() != b.tokens.size()) return 0.0f;
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.tokens.size(); ++i) {
        const bool wa = a.tokens[i].kind != PatternToken::Kind::kLiteral;
        const bool wb = b.tokens[i].kind != PatternToken::Kind::kLiteral;
        if (wa || wb || a.tokens[i].text == b.tokens[i].text) ++same;
    }
    return static_cast<float>(same) / static_cast<float>(a.tokens.size());
}

/// Builds one domain's patterns from a private stem pool. Normal patterns
/// get unique lengths and pairwise-unique literals. Anomaly patterns reuse
/// the domain's normal vocabulary (fault lines talk about the same modules
/// the healthy lines do) and weave ~30% shared-class stems into compound
/// tokens, so domains stay token-disjoint while the discriminative stems
/// coincide across domains.
inline DomainSpec build_domain(const std::string& name, std::uint64_t seed,
                               const std::vector<std::string>& shared_classes,
                               double anomaly_rate, std::size_t normal_count) {
    DomainSpec spec;
    spec.name = name;
    spec.seed = seed;
    spec.anomaly_rate = anomaly_rate;
    Rng rng = named_stream(seed, "synth-domain-build");

    std::set<std::string> used;
    auto fresh_stem = [&]() {
        std::string s;
        do {
            s = random_stem(rng);
        } while (used.count(s));
        used.insert(s);
        return s;
    };

    // ~30% of a pattern's stems come from a shared pool, compounded with a
    // fresh domain stem so whole tokens never repeat across domains
    auto weave = [&](std::size_t len, std::size_t n_params,
                     const std::vector<std::string>& shared_pool, std::size_t pool_offset) {
        std::vector<PatternToken> tokens;
        std::set<std::size_t> param_pos;
        while (param_pos.size() < n_params)
            param_pos.insert(static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(len) - 1)));
        const std::size_t plain = len - n_params;
        std::size_t n_shared = (3 * plain + 3) / 7;  // s/(plain+s) ~= 0.3
        if (n_shared < 1) n_shared = 1;
        if (n_shared > plain) n_shared = plain;
        std::size_t emitted_shared = 0;
        for (std::size_t t = 0; t < len; ++t) {
            if (param_pos.count(t)) {
                tokens.push_back(param_token(rng));
            } else if (emitted_shared < n_shared) {
                const auto& shared =
                    shared_pool[(pool_offset + emitted_shared) % shared_pool.size()];
                tokens.push_back(PatternToken::literal(fresh_stem() + "_" + shared));
                ++emitted_shared;
            } else {
                tokens.push_back(PatternToken::literal(fresh_stem()));
            }
        }
        return tokens;
    };

    for (std::size_t pi = 0; pi < normal_count; ++pi) {
        Pattern p;
        const std::size_t len = 5 + pi;  // unique lengths, 5..
        p.tokens = weave(len, 1 + (len >= 9 ? 1 : 0), shared_normal_register(), 3 * pi);
        spec.normals.push_back(std::move(p));
    }

    for (std::size_t ci = 0; ci < shared_classes.size(); ++ci) {
        const auto& cls = shared_classes[ci];
        const std::vector<std::string>* stems = nullptr;
        for (const auto& [n, s] : shared_class_registry())
            if (n == cls) stems = &s;
        if (stems == nullptr) throw ConfigError("synth: unknown anomaly class '" + cls + "'");
        const std::size_t len = 6 + ci;  // unique lengths among anomalies
        for (;;) {  // resample until the skeleton is unambiguous
            Pattern p;
            p.anomaly_class = cls;
            p.tokens = weave(len, 1 + (len >= 9 ? 1 : 0), *stems, 0);
            bool distinct = true;
            for (const auto* bank : {&spec.normals, &spec.anomalies})
                for (const auto& other : *bank)
                    distinct = distinct && pattern_similarity(p, other) < 0.45f;
            if (distinct) {
                spec.anomalies.push_back(std::move(p));
                break;
            }
        }
    }
    return spec;
}

}  // namespace detail

/// Builds a source/target pair sharing anomaly classes but with disjoint
/// literal vocabularies (asserted, with deterministic reseeding on the
/// astronomically unlikely stem collision).
inline std::pair<DomainSpec, DomainSpec> paired_domains(
    const std::vector<std::string>& shared_classes, std::uint64_t source_seed,
    std::uint64_t target_seed, double anomaly_rate = 0.05,
    std::size_t normal_patterns = 8) {
    if (shared_classes.size() < 2)
        throw ConfigError("synth: paired domains need at least 2 shared classes");
    DomainSpec source = detail::build_domain("source", source_seed, shared_classes,
                                             anomaly_rate, normal_patterns);
    for (std::uint64_t bump = 0;; ++bump) {
        DomainSpec target = detail::build_domain("target", target_seed + bump, shared_classes,
                                                 anomaly_rate, normal_patterns);
        const auto sv = source.vocabulary();
        const auto tv = target.vocabulary();
        bool disjoint = true;
        for (const auto& tok : tv) disjoint = disjoint && sv.count(tok) == 0;
        if (disjoint) return {std::move(source), std::move(target)};
    }
}

inline void write_ground_truth_jsonl(const std::string& path, const GeneratedCorpus& corpus) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("synth: cannot open '" + path + "' for writing");
    for (std::size_t i = 0; i < corpus.lines.size(); ++i) {
        nlohmann::json j;
        j["line"] = i;
        if (corpus.classes[i].empty())
            j["class"] = nullptr;
        else
            j["class"] = corpus.classes[i];
        os << j.dump() << "\n";
    }
}

inline void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("synth: cannot open '" + path + "' for writing");
    for (const auto& l : lines) os << l << "\n";
}

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open '" + path + "'");
    std::vector<std::string> out;
    std::string line;
    while (std::getline(is, line)) out.push_back(line);
    return out;
}

}  // namespace translog
