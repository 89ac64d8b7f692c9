#pragma once

// Versioned model container shared by every forecaster kind.
//
// Layout: one line of canonical JSON (sorted keys, no whitespace) holding
//   {blocks:{name:{data:<base64 little-endian doubles>, shape:[..]}},
//    config:{..}, format_version:N, kind:"..", scaler:{..}}
// followed by a trailer line `crc32:<8 lowercase hex>` covering every byte
// before the trailer (JSON line including its newline).

#include "flightcast/error.hpp"
#include "flightcast/pipeline.hpp"
#include "flightcast/tensor.hpp"

#include <boost/crc.hpp>
#include <nlohmann/json.hpp>

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace flightcast {

inline constexpr int kModelFormatVersion = 1;

namespace base64 {

inline constexpr std::string_view kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string encode(std::span<const std::uint8_t> bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const std::uint32_t v = (std::uint32_t{bytes[i]} << 16) | (std::uint32_t{bytes[i + 1]} << 8) | bytes[i + 2];
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += kAlphabet[v & 63];
    }
    const std::size_t rest = bytes.size() - i;
    if (rest > 0) {
        std::uint32_t v = std::uint32_t{bytes[i]} << 16;
        if (rest == 2) v |= std::uint32_t{bytes[i + 1]} << 8;
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

inline std::vector<std::uint8_t> decode(std::string_view text) {
    if (text.size() % 4 != 0) {
        throw FormatError("base64 length is not a multiple of 4");
    }
    auto value = [](char c) -> int {
        const auto pos = kAlphabet.find(c);
        return pos == std::string_view::npos ? -1 : static_cast<int>(pos);
    };
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        const bool last = i + 4 == text.size();
        const int pad = (text[i + 3] == '=' ? 1 : 0) + (text[i + 2] == '=' ? 1 : 0);
        if (pad > 0 && !last) {
            throw FormatError("base64 padding inside data");
        }
        std::uint32_t v = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            const char c = text[i + k];
            int d = 0;
            if (c == '=' && k >= 4 - static_cast<std::size_t>(pad)) {
                d = 0;
            } else {
                d = value(c);
                if (d < 0) {
                    throw FormatError("invalid base64 character");
                }
            }
            v = (v << 6) | static_cast<std::uint32_t>(d);
        }
        out.push_back(static_cast<std::uint8_t>(v >> 16));
        if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
        if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
    }
    return out;
}

} // namespace base64

inline std::string encode_doubles(std::span<const double> values) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(values.size() * 8);
    for (double v : values) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int b = 0; b < 8; ++b) {
            bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
        }
    }
    return base64::encode(bytes);
}

inline std::vector<double> decode_doubles(std::string_view text) {
    const auto bytes = base64::decode(text);
    if (bytes.size() % 8 != 0) {
        throw FormatError("parameter block is not a whole number of doubles");
    }
    std::vector<double> values(bytes.size() / 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) {
            bits |= std::uint64_t{bytes[i * 8 + static_cast<std::size_t>(b)]} << (8 * b);
        }
        values[i] = std::bit_cast<double>(bits);
    }
    return values;
}

inline std::uint32_t crc32(std::string_view bytes) {
    boost::crc_32_type crc;
    crc.process_bytes(bytes.data(), bytes.size());
    return crc.checksum();
}

struct ParameterBlock {
    Shape shape;
    std::vector<double> values;
};

struct ModelFile {
    int format_version = kModelFormatVersion;
    std::string kind;
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json scaler = nlohmann::json::object();
    std::map<std::string, ParameterBlock> blocks;

    void add(const std::string& name, const Tensor& t) { blocks[name] = {t.shape(), t.values()}; }
    void add(const std::string& name, Shape shape, std::vector<double> values) { blocks[name] = {std::move(shape), std::move(values)}; }

    const ParameterBlock& block(const std::string& name) const {
        const auto it = blocks.find(name);
        if (it == blocks.end()) {
            throw FormatError("model file lacks parameter block '" + name + "'");
        }
        return it->second;
    }

    /// Copies block `name` into an existing tensor of the same shape.
    void load_into(const std::string& name, Tensor& t) const {
        const ParameterBlock& b = block(name);
        if (b.shape != t.shape() || b.values.size() != t.size()) {
            throw FormatError("block '" + name + "' has shape " + to_string(b.shape) + ", expected " + to_string(t.shape()));
        }
        std::copy(b.values.begin(), b.values.end(), t.mutable_data().begin());
    }
};

/// Appends the CRC trailer to a JSON line.
inline std::string seal_model_text(const std::string& json_line) {
    std::string body = json_line + "\n";
    char trailer[32];
    std::snprintf(trailer, sizeof trailer, "crc32:%08x\n", crc32(body));
    return body + trailer;
}

inline nlohmann::json scaler_to_json(const Scaler& s) {
    auto one = [](const FeatureScaler& f) { return nlohmann::json{{"mean", f.mean}, {"std", f.stddev}, {"degenerate", f.degenerate}}; };
    nlohmann::json j{{"demand", one(s.demand)}};
    if (s.swim) {
        j["swim"] = one(*s.swim);
    }
    return j;
}

inline Scaler scaler_from_json(const nlohmann::json& j) {
    auto one = [](const nlohmann::json& f) {
        return FeatureScaler{f.at("mean").get<double>(), f.at("std").get<double>(), f.at("degenerate").get<bool>()};
    };
    Scaler s{one(j.at("demand")), std::nullopt};
    if (j.contains("swim")) {
        s.swim = one(j.at("swim"));
    }
    return s;
}

inline std::string encode_model_file(const ModelFile& file) {
    nlohmann::json doc;
    doc["format_version"] = file.format_version;
    doc["kind"] = file.kind;
    doc["config"] = file.config;
    doc["scaler"] = file.scaler;
    nlohmann::json blocks = nlohmann::json::object();
    for (const auto& [name, block] : file.blocks) {
        blocks[name] = {{"shape", block.shape}, {"data", encode_doubles(block.values)}};
    }
    doc["blocks"] = std::move(blocks);
    return seal_model_text(doc.dump());
}

/// Checksum first, then JSON structure, then version; each failure has its own type.
inline ModelFile decode_model_file(std::string_view bytes) {
    if (bytes.size() < 2 || bytes.back() != '\n') {
        throw ChecksumError("model file has no checksum trailer (truncated?)");
    }
    const std::size_t body_end = bytes.rfind('\n', bytes.size() - 2);
    if (body_end == std::string_view::npos) {
        throw ChecksumError("model file has no checksum trailer (truncated?)");
    }
    const std::string_view body = bytes.substr(0, body_end + 1);
    const std::string_view trailer = bytes.substr(body_end + 1, bytes.size() - body_end - 2);
    if (trailer.size() != 14 || trailer.substr(0, 6) != "crc32:") {
        throw ChecksumError("model file has no checksum trailer (truncated?)");
    }
    std::uint32_t stored = 0;
    const auto hex = trailer.substr(6);
    const auto [ptr, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), stored, 16);
    if (ec != std::errc{} || ptr != hex.data() + hex.size()) {
        throw ChecksumError("unreadable checksum trailer");
    }
    if (stored != crc32(body)) {
        throw ChecksumError("checksum mismatch: file is corrupted");
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model file is not valid JSON: ") + e.what());
    }
    ModelFile file;
    try {
        file.format_version = doc.at("format_version").get<int>();
        if (file.format_version != kModelFormatVersion) {
            throw VersionError("unsupported model format version " + std::to_string(file.format_version) + " (expected " +
                               std::to_string(kModelFormatVersion) + ")");
        }
        file.kind = doc.at("kind").get<std::string>();
        file.config = doc.at("config");
        file.scaler = doc.at("scaler");
        for (const auto& [name, block] : doc.at("blocks").items()) {
            ParameterBlock b;
            b.shape = block.at("shape").get<Shape>();
            b.values = decode_doubles(block.at("data").get<std::string>());
            if (element_count(b.shape) != b.values.size()) {
                throw FormatError("block '" + name + "' shape " + to_string(b.shape) + " disagrees with its data length");
            }
            file.blocks.emplace(name, std::move(b));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed model file: ") + e.what());
    }
    return file;
}

inline void write_model_file(const std::filesystem::path& path, const ModelFile& file) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write model file " + path.string());
    }
    out << encode_model_file(file);
    if (!out) {
        throw Error("failed writing model file " + path.string());
    }
}

inline ModelFile read_model_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw LoadError("cannot open model file " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return decode_model_file(buf.str());
}

} // namespace flightcast
