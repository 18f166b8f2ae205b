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
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

#include "translog/common.hpp"

namespace translog {

struct LabeledLine {
    std::size_t index = 0;               // ordinal position in the file
    std::uint64_t timestamp_ordinal = 0; // file order proxy
    int template_id = 0;
    bool is_anomalous = false;
    std::string group_key;               // empty = no key
};

struct Session {
    std::vector<int> template_ids;
    bool label = false;
    std::string domain;
    std::int64_t window_index = -1;  // set in window mode
    std::string group_key;           // set in group mode
};

/// Non-overlapping fixed-size windows in file order; the final partial
/// window is kept. A window is anomalous iff any member line is.
inline std::vector<Session> window_sessions(const std::vector<LabeledLine>& lines,
                                            std::size_t window_size,
                                            const std::string& domain = "") {
    if (window_size < 1) throw ConfigError("sessionizer: window_size must be >= 1");
    std::vector<Session> out;
    out.reserve((lines.size() + window_size - 1) / window_size);
    for (std::size_t start = 0; start < lines.size(); start += window_size) {
        Session s;
        s.domain = domain;
        s.window_index = static_cast<std::int64_t>(start / window_size);
        const std::size_t end = std::min(lines.size(), start + window_size);
        for (std::size_t i = start; i < end; ++i) {
            s.template_ids.push_back(lines[i].template_id);
            s.label = s.label || lines[i].is_anomalous;
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline std::optional<std::string> extract_group_key(const std::string& text,
                                                    const std::regex& pattern) {
    std::smatch m;
    if (!std::regex_search(text, m, pattern)) return std::nullopt;
    // first capture group when present, whole match otherwise
    if (m.size() > 1 && m[1].matched) return m[1].str();
    return m[0].str();
}

/// One session per distinct group key, keys ordered by first occurrence,
/// lines in file order. The label is the OR over the whole group; events are
/// truncated to `max_len` afterwards (0 = keep all). Lines without a key are
/// skipped and counted via `skipped`.
inline std::vector<Session> group_sessions(const std::vector<LabeledLine>& lines,
                                           const std::string& domain = "",
                                           std::size_t max_len = 0,
                                           std::size_t* skipped = nullptr) {
    std::map<std::string, std::size_t> order;
    std::vector<Session> out;
    std::size_t missing = 0;
    for (const auto& ln : lines) {
        if (ln.group_key.empty()) {
            ++missing;
            continue;
        }
        auto it = order.find(ln.group_key);
        if (it == order.end()) {
            it = order.emplace(ln.group_key, out.size()).first;
            Session s;
            s.domain = domain;
            s.group_key = ln.group_key;
            out.push_back(std::move(s));
        }
        Session& s = out[it->second];
        s.template_ids.push_back(ln.template_id);
        s.label = s.label || ln.is_anomalous;
    }
    if (skipped != nullptr) *skipped = missing;
    if (out.empty()) throw DataError("sessionizer: no group keys extracted");
    if (max_len > 0)
        for (auto& s : out)
            if (s.template_ids.size() > max_len) s.template_ids.resize(max_len);
    return out;
}

/// Convenience overload: extracts keys from raw line content first.
inline std::vector<Session> group_sessions(std::vector<LabeledLine> lines,
                                           const std::vector<std::string>& raw_contents,
                                           const std::string& key_pattern,
                                           const std::string& domain = "",
                                           std::size_t max_len = 0,
                                           std::size_t* skipped = nullptr) {
    if (lines.size() != raw_contents.size())
        throw DataError("sessionizer: line/raw-content count mismatch");
    std::regex re;
    try {
        re = std::regex(key_pattern);
    } catch (const std::regex_error& e) {
        throw ConfigError("sessionizer: bad key pattern '" + key_pattern + "': " + e.what());
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
        auto key = extract_group_key(raw_contents[i], re);
        lines[i].group_key = key.value_or("");
    }
    return group_sessions(lines, domain, max_len, skipped);
}

/// First floor(n*f) sessions train, remainder test; no shuffling. Sessions
/// must already be in chronological (file) order.
inline std::pair<std::vector<Session>, std::vector<Session>> chrono_split(
    const std::vector<Session>& sessions, double train_fraction) {
    if (!(train_fraction > 0.0) || !(train_fraction < 1.0))
        throw ConfigError("sessionizer: train_fraction must be in (0,1)");
    if (sessions.size() < 2) throw DataError("sessionizer: split impossible");
    const auto n_train = static_cast<std::size_t>(
        std::floor(static_cast<double>(sessions.size()) * train_fraction));
    std::vector<Session> train(sessions.begin(), sessions.begin() + n_train);
    std::vector<Session> test(sessions.begin() + n_train, sessions.end());
    return {std::move(train), std::move(test)};
}

// -- sessions.jsonl ----------------------------------------------------------

inline nlohmann::json session_to_json(const Session& s) {
    nlohmann::json j;
    j["template_ids"] = s.template_ids;
    j["label"] = s.label;
    j["domain"] = s.domain;
    if (s.window_index >= 0)
        j["origin"] = s.window_index;
    else
        j["origin"] = s.group_key;
    return j;
}

inline Session session_from_json(const nlohmann::json& j) {
    Session s;
    s.template_ids = j.at("template_ids").get<std::vector<int>>();
    s.label = j.at("label").get<bool>();
    s.domain = j.at("domain").get<std::string>();
    const auto& origin = j.at("origin");
    if (origin.is_number_integer())
        s.window_index = origin.get<std::int64_t>();
    else
        s.group_key = origin.get<std::string>();
    return s;
}

inline void write_sessions_jsonl(const std::string& path,
                                 const std::vector<Session>& sessions) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("sessions: cannot open '" + path + "' for writing");
    for (const auto& s : sessions) os << session_to_json(s).dump() << "\n";
}

inline std::vector<Session> read_sessions_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("sessions: cannot open '" + path + "'");
    std::vector<Session> out;
    std::string line;
    std::size_t ln = 0;
    while (std::getline(is, line)) {
        ++ln;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        try {
            out.push_back(session_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("sessions: malformed json at line " + std::to_string(ln) + ": " +
                            e.what());
        }
    }
    return out;
}

}  // namespace translog
