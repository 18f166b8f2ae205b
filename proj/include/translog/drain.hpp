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
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "translog/common.hpp"

namespace translog {

inline constexpr const char* kWildcard = "<*>";
inline constexpr char kAssignmentsMagic[8] = {'L', 'O', 'G', 'A', 'S', 'G', 'N', '1'};

/// A mined event template: token sequence with `<*>` wildcards plus a dense,
/// first-seen-order id.
struct LogTemplate {
    int id = 0;
    std::vector<std::string> tokens;
    std::uint64_t match_count = 0;

    std::string joined() const {
        std::string s;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (i) s += ' ';
            s += tokens[i];
        }
        return s;
    }
};

struct ParserConfig {
    int tree_depth = 4;  // levels below root, including the length node
    float similarity_threshold = 0.5f;
    int max_children = 100;
    std::vector<std::string> mask_patterns;

    void validate() const {
        if (tree_depth < 3) throw ConfigError("parser: tree_depth must be >= 3");
        if (!(similarity_threshold > 0.0f) || similarity_threshold > 1.0f)
            throw ConfigError("parser: similarity_threshold must be in (0,1]");
        if (max_children < 2) throw ConfigError("parser: max_children must be >= 2");
    }
};

/// Dataset mask presets. The toolkit's own corpora use "synth"; the named
/// public-corpus presets carry the usual block-id / ip / hex / path regexes.
inline std::vector<std::string> mask_preset(const std::string& name) {
    if (name == "hdfs")
        return {R"(blk_-?\d+)", R"((\d{1,3}\.){3}\d{1,3}(:\d+)?)", R"(\d+)"};
    if (name == "bgl")
        return {R"(core\.\d+)", R"(0x[0-9a-fA-F]+)", R"((\d{1,3}\.){3}\d{1,3}(:\d+)?)",
                R"(\d+)"};
    if (name == "thunderbird")
        return {R"(0x[0-9a-fA-F]+)", R"((\d{1,3}\.){3}\d{1,3}(:\d+)?)", R"((/[\w.\-]+)+)",
                R"(\d+)"};
    if (name == "synth")
        return {R"(0x[0-9a-fA-F]+)", R"(blk_-?\d+)", R"((\d{1,3}\.){3}\d{1,3}(:\d+)?)",
                R"(\d+)"};
    if (name == "digits") return {R"(\d+)"};
    throw ConfigError("parser: unknown mask preset '" + name + "'");
}

/// Replaces invalid UTF-8 bytes with U+FFFD so arbitrary log bytes never
/// crash the pipeline.
inline std::string sanitize_utf8(std::string_view in) {
    static constexpr const char* kReplacement = "\xEF\xBF\xBD";
    std::string out;
    out.reserve(in.size());
    std::size_t i = 0;
    while (i < in.size()) {
        const auto c = static_cast<unsigned char>(in[i]);
        std::size_t cont = 0;
        if (c < 0x80) {
            out += static_cast<char>(c);
            ++i;
            continue;
        } else if (c >= 0xC2 && c <= 0xDF) {
            cont = 1;
        } else if (c >= 0xE0 && c <= 0xEF) {
            cont = 2;
        } else if (c >= 0xF0 && c <= 0xF4) {
            cont = 3;
        } else {
            out += kReplacement;
            ++i;
            continue;
        }
        bool ok = i + cont < in.size();
        for (std::size_t j = 1; ok && j <= cont; ++j) {
            const auto cc = static_cast<unsigned char>(in[i + j]);
            ok = cc >= 0x80 && cc <= 0xBF;
        }
        if (ok) {
            out.append(in.substr(i, cont + 1));
            i += cont + 1;
        } else {
            out += kReplacement;
            ++i;
        }
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' ||
                          s.front() == '\n'))
        s.remove_prefix(1);
    while (!s.empty() &&
           (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
        s.remove_suffix(1);
    return s;
}

inline std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> toks;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
        if (j > i) toks.emplace_back(s.substr(i, j - i));
        i = j;
    }
    return toks;
}

/// Column layout of a raw log line, e.g. "label content" for alert-tagged
/// corpora. Columns other than "content" consume one whitespace-separated
/// field; "content" must come last and takes the rest of the line.
struct LineFormat {
    std::vector<std::string> columns{"content"};

    static LineFormat parse(const std::string& spec) {
        LineFormat f;
        f.columns = tokenize(spec);
        if (f.columns.empty())
            throw ConfigError("line format: empty specification");
        for (std::size_t i = 0; i < f.columns.size(); ++i) {
            const auto& c = f.columns[i];
            if (c == "content") {
                if (i + 1 != f.columns.size())
                    throw ConfigError("line format: 'content' must be the last column");
            } else if (c != "label" && c != "skip" && c != "timestamp") {
                throw ConfigError("line format: unknown column '" + c + "'");
            }
        }
        if (f.columns.back() != "content")
            throw ConfigError("line format: missing 'content' column");
        return f;
    }

    struct Fields {
        std::string label;      // empty when the format has no label column
        std::string timestamp;  // empty when the format has no timestamp column
        std::string content;
    };

    Fields split(std::string_view line) const {
        Fields out;
        std::string_view rest = trim(line);
        for (const auto& c : columns) {
            if (c == "content") {
                out.content = std::string(trim(rest));
                return out;
            }
            std::size_t cut = 0;
            while (cut < rest.size() && rest[cut] != ' ' && rest[cut] != '\t') ++cut;
            const std::string_view field = rest.substr(0, cut);
            if (c == "label") out.label = std::string(field);
            if (c == "timestamp") out.timestamp = std::string(field);
            rest = trim(rest.substr(cut));
        }
        return out;
    }
};

/// Streaming fixed-depth-tree template miner. Level 1 keys on token count,
/// levels 2..depth on leading tokens (digit-bearing tokens and wildcards are
/// routed through a shared `<*>` child), leaves hold candidate templates.
class DrainParser {
public:
    explicit DrainParser(ParserConfig config) : config_(std::move(config)) {
        config_.validate();
        for (const auto& pat : config_.mask_patterns) {
            try {
                masks_.emplace_back(pat);
            } catch (const std::regex_error& e) {
                throw ConfigError("parser: bad mask pattern '" + pat + "': " + e.what());
            }
        }
        nodes_.emplace_back();  // root
    }

    const ParserConfig& config() const { return config_; }
    const std::vector<LogTemplate>& templates() const { return templates_; }

    /// Parses one line, updating the template table. Returns the template id.
    int parse_line(std::string_view raw) {
        const std::vector<std::string> tokens = prepare(raw);
        const int leaf = walk(tokens, false);
        int best_id = -1;
        float best_sim = -1.0f;
        if (leaf >= 0) {
            for (int tid : nodes_[static_cast<std::size_t>(leaf)].templates) {
                const float sim = similarity(templates_[static_cast<std::size_t>(tid)].tokens,
                                             tokens);
                if (sim > best_sim) {
                    best_sim = sim;
                    best_id = tid;
                }
                // equal similarity keeps the earlier (lower) id
            }
        }
        if (best_id >= 0 && best_sim >= config_.similarity_threshold) {
            merge(templates_[static_cast<std::size_t>(best_id)], tokens);
            return best_id;
        }
        const int id = static_cast<int>(templates_.size());
        templates_.push_back(LogTemplate{id, tokens, 1});
        const int insert_leaf = walk(tokens, true);
        nodes_[static_cast<std::size_t>(insert_leaf)].templates.push_back(id);
        return id;
    }

    /// Read-only lookup against the current table; safe for concurrent
    /// readers once mining is finished.
    std::optional<int> match_line(std::string_view raw) const {
        const std::vector<std::string> tokens = prepare(raw);
        const int leaf = walk_const(tokens);
        if (leaf < 0) return std::nullopt;
        int best_id = -1;
        float best_sim = -1.0f;
        for (int tid : nodes_[static_cast<std::size_t>(leaf)].templates) {
            const float sim =
                similarity(templates_[static_cast<std::size_t>(tid)].tokens, tokens);
            if (sim > best_sim) {
                best_sim = sim;
                best_id = tid;
            }
        }
        if (best_id >= 0 && best_sim >= config_.similarity_threshold) return best_id;
        return std::nullopt;
    }

    /// Masks parameters and tokenizes without touching parser state.
    std::vector<std::string> prepare(std::string_view raw) const {
        std::string line(trim(sanitize_utf8(raw)));
        if (line.empty()) throw DataError("parser: empty line");
        for (const auto& re : masks_) line = std::regex_replace(line, re, kWildcard);
        std::vector<std::string> tokens = tokenize(line);
        if (tokens.empty()) throw DataError("parser: empty line");
        return tokens;
    }

    /// Fraction of equal token positions; a wildcard on either side counts
    /// as a match.
    static float similarity(const std::vector<std::string>& tmpl,
                            const std::vector<std::string>& line) {
        if (tmpl.size() != line.size()) return 0.0f;
        std::size_t same = 0;
        for (std::size_t i = 0; i < tmpl.size(); ++i)
            if (tmpl[i] == line[i] || tmpl[i] == kWildcard || line[i] == kWildcard) ++same;
        return static_cast<float>(same) / static_cast<float>(tmpl.size());
    }

private:
    struct TreeNode {
        std::map<std::string, int> children;
        std::vector<int> templates;
    };

    static bool has_digit(const std::string& tok) {
        return std::any_of(tok.begin(), tok.end(),
                           [](unsigned char c) { return c >= '0' && c <= '9'; });
    }

    std::string route_key(const std::string& tok) const {
        if (tok == kWildcard || has_digit(tok)) return kWildcard;
        return tok;
    }

    /// Descends from the root; with `create` set, missing nodes are added
    /// (spilling into the `<*>` child once a node is at max_children).
    int walk(const std::vector<std::string>& tokens, bool create) {
        if (!create) return walk_const(tokens);
        int cur = 0;
        cur = child_or_create(cur, std::to_string(tokens.size()), false);
        const std::size_t levels = std::min<std::size_t>(
            tokens.size(), static_cast<std::size_t>(config_.tree_depth - 1));
        for (std::size_t i = 0; i < levels; ++i)
            cur = child_or_create(cur, route_key(tokens[i]), true);
        return cur;
    }

    int walk_const(const std::vector<std::string>& tokens) const {
        int cur = 0;
        cur = child_of(cur, std::to_string(tokens.size()));
        if (cur < 0) return -1;
        const std::size_t levels = std::min<std::size_t>(
            tokens.size(), static_cast<std::size_t>(config_.tree_depth - 1));
        for (std::size_t i = 0; i < levels; ++i) {
            int next = child_of(cur, route_key(tokens[i]));
            if (next < 0 && route_key(tokens[i]) != kWildcard) {
                // a full node may have spilled this token into the catch-all
                next = child_of(cur, kWildcard);
            }
            if (next < 0) return -1;
            cur = next;
        }
        return cur;
    }

    int child_of(int node, const std::string& key) const {
        const auto& ch = nodes_[static_cast<std::size_t>(node)].children;
        const auto it = ch.find(key);
        return it == ch.end() ? -1 : it->second;
    }

    int child_or_create(int node, const std::string& key, bool cap) {
        auto& ch = nodes_[static_cast<std::size_t>(node)].children;
        auto it = ch.find(key);
        if (it != ch.end()) return it->second;
        std::string use = key;
        if (cap && static_cast<int>(ch.size()) >= config_.max_children && key != kWildcard) {
            use = kWildcard;
            const auto wit = ch.find(use);
            if (wit != ch.end()) return wit->second;
        }
        nodes_.emplace_back();
        const int idx = static_cast<int>(nodes_.size() - 1);
        nodes_[static_cast<std::size_t>(node)].children.emplace(use, idx);
        return idx;
    }

    /// Positions that differ become wildcards; wildcards never revert.
    void merge(LogTemplate& tmpl, const std::vector<std::string>& tokens) {
        for (std::size_t i = 0; i < tmpl.tokens.size(); ++i)
            if (tmpl.tokens[i] != tokens[i]) tmpl.tokens[i] = kWildcard;
        ++tmpl.match_count;
    }

    ParserConfig config_;
    std::vector<std::regex> masks_;
    std::vector<TreeNode> nodes_;
    std::vector<LogTemplate> templates_;
};

struct LineIssue {
    std::size_t line_number = 0;  // 1-based
    std::string message;
};

struct MineResult {
    std::vector<LogTemplate> templates;
    std::vector<std::uint32_t> assignments;  // one per accepted line
    std::vector<LineIssue> issues;           // rejected lines, with numbers
};

/// Mines a whole corpus. Per-line failures (empty lines) are collected with
/// their 1-based line numbers instead of aborting; an entirely empty corpus
/// is an error.
inline MineResult mine_corpus(const std::vector<std::string>& lines,
                              const ParserConfig& config) {
    DrainParser parser(config);
    MineResult out;
    out.assignments.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        try {
            out.assignments.push_back(static_cast<std::uint32_t>(parser.parse_line(lines[i])));
        } catch (const DataError& e) {
            out.issues.push_back(LineIssue{i + 1, e.what()});
        }
    }
    if (out.assignments.empty()) throw DataError("parser: empty corpus");
    out.templates = parser.templates();
    return out;
}

// -- templates.json ----------------------------------------------------------

inline void write_templates_json(const std::string& path,
                                 const std::vector<LogTemplate>& templates) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : templates)
        arr.push_back({{"id", t.id}, {"tokens", t.tokens}, {"match_count", t.match_count}});
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("templates: cannot open '" + path + "' for writing");
    os << arr.dump(2) << "\n";
}

inline std::vector<LogTemplate> read_templates_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("templates: cannot open '" + path + "'");
    nlohmann::json arr;
    try {
        is >> arr;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("templates: malformed json in '" + path + "': " + e.what());
    }
    std::vector<LogTemplate> out;
    for (const auto& e : arr) {
        LogTemplate t;
        t.id = e.at("id").get<int>();
        t.tokens = e.at("tokens").get<std::vector<std::string>>();
        t.match_count = e.at("match_count").get<std::uint64_t>();
        out.push_back(std::move(t));
    }
    for (std::size_t i = 0; i < out.size(); ++i)
        if (out[i].id != static_cast<int>(i))
            throw DataError("templates: ids in '" + path + "' are not dense/ordered");
    return out;
}

// -- assignments.bin ---------------------------------------------------------

inline void write_assignments(const std::string& path,
                              const std::vector<std::uint32_t>& assignments) {
    if (assignments.size() > 0xffffffffull)
        throw DataError("assignments: more than 2^32-1 lines");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("assignments: cannot open '" + path + "' for writing");
    os.write(kAssignmentsMagic, 8);
    auto put_u32 = [&os](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>((v >> 24) & 0xff)};
        os.write(reinterpret_cast<const char*>(b), 4);
    };
    put_u32(static_cast<std::uint32_t>(assignments.size()));
    for (std::uint32_t v : assignments) put_u32(v);
    if (!os) throw DataError("assignments: write to '" + path + "' failed");
}

inline std::vector<std::uint32_t> read_assignments(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("assignments: cannot open '" + path + "'");
    char magic[8];
    is.read(magic, 8);
    if (is.gcount() != 8 || !std::equal(magic, magic + 8, kAssignmentsMagic))
        throw DataError("assignments: bad magic in '" + path + "'");
    auto get_u32 = [&is, &path]() {
        unsigned char b[4];
        is.read(reinterpret_cast<char*>(b), 4);
        if (is.gcount() != 4) throw DataError("assignments: truncated file '" + path + "'");
        return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
               (std::uint32_t(b[3]) << 24);
    };
    const std::uint32_t count = get_u32();
    std::vector<std::uint32_t> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) out.push_back(get_u32());
    is.peek();
    if (!is.eof()) throw DataError("assignments: trailing bytes in '" + path + "'");
    return out;
}

}  // namespace translog
