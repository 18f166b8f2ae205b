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

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "translog/autodiff.hpp"

namespace translog {

// model.ckpt layout: 8-byte magic, one JSON header line, then the raw
// little-endian float32 payloads concatenated in header order.
inline constexpr char kCheckpointMagic[8] = {'L', 'O', 'G', 'C', 'K', 'P', 'T', '1'};

struct CheckpointHeader {
    nlohmann::json config;
    std::string mode;
    std::uint64_t rng_seed = 0;
    std::int64_t step = 0;
};

struct Checkpoint {
    CheckpointHeader header;
    std::vector<Parameter> params;
};

/// Stable hash of a model config; stored in the header so adapter tuning can
/// verify backbone compatibility without comparing field by field.
inline std::uint64_t config_hash(const nlohmann::json& config) {
    return fnv1a64(config.dump());
}

inline std::string config_hash_hex(const nlohmann::json& config) {
    std::ostringstream os;
    os << std::hex << config_hash(config);
    return os.str();
}

namespace detail {

inline void write_f32_le(std::ostream& os, const float* data, std::size_t n) {
    std::vector<unsigned char> buf(n * 4);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t u = std::bit_cast<std::uint32_t>(data[i]);
        buf[i * 4 + 0] = static_cast<unsigned char>(u & 0xff);
        buf[i * 4 + 1] = static_cast<unsigned char>((u >> 8) & 0xff);
        buf[i * 4 + 2] = static_cast<unsigned char>((u >> 16) & 0xff);
        buf[i * 4 + 3] = static_cast<unsigned char>((u >> 24) & 0xff);
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline bool read_f32_le(std::istream& is, float* data, std::size_t n) {
    std::vector<unsigned char> buf(n * 4);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(is.gcount()) != buf.size()) return false;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t u = std::uint32_t(buf[i * 4 + 0]) |
                                (std::uint32_t(buf[i * 4 + 1]) << 8) |
                                (std::uint32_t(buf[i * 4 + 2]) << 16) |
                                (std::uint32_t(buf[i * 4 + 3]) << 24);
        data[i] = std::bit_cast<float>(u);
    }
    return true;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const CheckpointHeader& header,
                            const std::vector<Parameter>& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("checkpoint: cannot open '" + path + "' for writing");
    os.write(kCheckpointMagic, 8);

    nlohmann::json h;
    h["config"] = header.config;
    h["config_hash"] = config_hash_hex(header.config);
    h["mode"] = header.mode;
    h["rng_seed"] = header.rng_seed;
    h["step"] = header.step;
    nlohmann::json plist = nlohmann::json::array();
    for (const Parameter& p : params) {
        nlohmann::json e;
        e["name"] = p.name;
        e["shape"] = p.value.shape;
        e["trainable"] = p.trainable;
        plist.push_back(std::move(e));
    }
    h["params"] = std::move(plist);
    const std::string line = h.dump();
    os.write(line.data(), static_cast<std::streamsize>(line.size()));
    os.put('\n');

    for (const Parameter& p : params)
        detail::write_f32_le(os, p.value.ptr(), p.value.data.size());
    if (!os) throw DataError("checkpoint: write to '" + path + "' failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open '" + path + "'");
    char magic[8];
    is.read(magic, 8);
    if (is.gcount() != 8 || !std::equal(magic, magic + 8, kCheckpointMagic))
        throw DataError("checkpoint: bad magic in '" + path + "'");
    std::string line;
    if (!std::getline(is, line))
        throw DataError("checkpoint: truncated header in '" + path + "'");
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint: malformed header: " + std::string(e.what()));
    }

    Checkpoint ckpt;
    try {
        ckpt.header.config = h.at("config");
        ckpt.header.mode = h.at("mode").get<std::string>();
        ckpt.header.rng_seed = h.at("rng_seed").get<std::uint64_t>();
        ckpt.header.step = h.at("step").get<std::int64_t>();
        for (const auto& e : h.at("params")) {
            Parameter p(e.at("name").get<std::string>(),
                        Tensor(e.at("shape").get<std::vector<std::int64_t>>()),
                        e.at("trainable").get<bool>());
            ckpt.params.push_back(std::move(p));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint: missing header field: " + std::string(e.what()));
    }
    const std::string stored_hash = h.value("config_hash", std::string());
    const std::string computed = config_hash_hex(ckpt.header.config);
    if (!stored_hash.empty() && stored_hash != computed)
        throw DataError("checkpoint: header config hash mismatch in '" + path + "'");

    for (Parameter& p : ckpt.params)
        if (!detail::read_f32_le(is, p.value.ptr(), p.value.data.size()))
            throw DataError("checkpoint: truncated payload for parameter '" + p.name + "'");
    is.peek();
    if (!is.eof())
        throw DataError("checkpoint: trailing bytes after payload in '" + path + "'");
    return ckpt;
}

}  // namespace translog
