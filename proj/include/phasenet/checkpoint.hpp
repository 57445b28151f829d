#pragma once

// Binary checkpoint layout (all integers little-endian):
//
//   "PHNETCKP"                 8-byte magic
//   u32  format version
//   u64  JSON length, then the JSON block {"model": ModelConfig, "extra": ...}
//   u64  tensor count, then per tensor:
//          u32 name length, name bytes, u32 rank, u64 dims[rank],
//          f64 payload[numel]
//   u32  CRC-32 of every preceding byte

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "phasenet/error.hpp"
#include "phasenet/model.hpp"

namespace phasenet {

inline constexpr std::array<char, 8> kCheckpointMagic{'P', 'H', 'N', 'E', 'T', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelParams params;
    nlohmann::json extra = nlohmann::json::object();
};

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
void put_le(std::vector<unsigned char>& out, T v) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.insert(out.end(), bytes.begin(), bytes.end());
}

class Reader {
public:
    Reader(const std::vector<unsigned char>& buf, std::size_t end) : buf_(buf), end_(end) {}

    template <class T>
    T get() {
        need(sizeof(T));
        std::array<unsigned char, sizeof(T)> bytes;
        std::memcpy(bytes.data(), buf_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
        pos_ += sizeof(T);
        return std::bit_cast<T>(bytes);
    }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    std::size_t pos() const noexcept { return pos_; }

private:
    void need(std::size_t n) const {
        if (n > end_ - pos_) throw DataError("checkpoint: truncated file");
    }

    const std::vector<unsigned char>& buf_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const unsigned char* data, std::size_t n) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    while (n > 0) {
        const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        crc = ::crc32(crc, data, chunk);
        data += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

inline std::vector<unsigned char> serialize_checkpoint(const ModelParams& params,
                                                       const nlohmann::json& extra = nlohmann::json::object()) {
    std::vector<unsigned char> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
    detail::put_le<std::uint32_t>(out, kCheckpointVersion);
    const std::string js = nlohmann::json{{"model", to_json(params.config)}, {"extra", extra}}.dump();
    detail::put_le<std::uint64_t>(out, js.size());
    out.insert(out.end(), js.begin(), js.end());
    std::uint64_t count = 0;
    params.for_each([&](ParamGroup, const Parameter&) { ++count; });
    detail::put_le<std::uint64_t>(out, count);
    params.for_each([&](ParamGroup, const Parameter& p) {
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
        out.insert(out.end(), p.name.begin(), p.name.end());
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
        for (std::size_t d : p.value.shape()) detail::put_le<std::uint64_t>(out, d);
        for (double v : p.value.data()) detail::put_le<double>(out, v);
    });
    detail::put_le<std::uint32_t>(out, detail::crc32_of(out.data(), out.size()));
    return out;
}

// Parses a checkpoint. When `expected` is given, every tensor must match the
// shape that config implies; otherwise the file's own config is used.
inline Checkpoint deserialize_checkpoint(const std::vector<unsigned char>& buf,
                                         const ModelConfig* expected = nullptr) {
    if (buf.size() < kCheckpointMagic.size() + 4 + 4) throw DataError("checkpoint: file too short");
    const std::size_t body = buf.size() - 4;
    {
        detail::Reader r(buf, buf.size());
        (void)r.bytes(body);
        const auto stored = r.get<std::uint32_t>();
        if (stored != detail::crc32_of(buf.data(), body)) throw DataError("checkpoint: checksum mismatch (file corrupted)");
    }
    detail::Reader r(buf, body);
    if (r.bytes(8) != std::string(kCheckpointMagic.begin(), kCheckpointMagic.end()))
        throw DataError("checkpoint: bad magic bytes");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw DataError("checkpoint: unsupported format version " + std::to_string(version) + " (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    }
    const auto js_len = r.get<std::uint64_t>();
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(r.bytes(js_len));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: invalid JSON block: ") + e.what());
    }
    const ModelConfig file_cfg = model_config_from_json(header.at("model"));
    const ModelConfig& cfg = expected ? *expected : file_cfg;

    Checkpoint ck;
    ck.params = init_params(cfg);
    ck.extra = header.value("extra", nlohmann::json::object());
    std::vector<Parameter*> slots = ck.params.all();
    const auto count = r.get<std::uint64_t>();
    if (count != slots.size()) {
        throw DataError("checkpoint: holds " + std::to_string(count) + " tensors, config expects " +
                        std::to_string(slots.size()));
    }
    for (Parameter* slot : slots) {
        const std::string name = r.bytes(r.get<std::uint32_t>());
        if (name != slot->name) throw DataError("checkpoint: expected tensor '" + slot->name + "', found '" + name + "'");
        Shape shape(r.get<std::uint32_t>());
        for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
        if (shape != slot->value.shape()) {
            throw ShapeError("checkpoint: tensor '" + name + "' has shape " + to_string(shape) +
                             " but the config requires " + to_string(slot->value.shape()));
        }
        for (double& v : slot->value.vec()) v = r.get<double>();
        slot->zero_grad();
    }
    if (r.pos() != body) throw DataError("checkpoint: trailing bytes after tensors");
    if (expected) ck.params.config = *expected;
    return ck;
}

inline void save_checkpoint(const ModelParams& params, const std::string& path,
                            const nlohmann::json& extra = nlohmann::json::object()) {
    const auto bytes = serialize_checkpoint(params, extra);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError(path + ": write failed");
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open file");
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline Checkpoint load_checkpoint(const std::string& path, const ModelConfig* expected = nullptr) {
    return deserialize_checkpoint(read_file_bytes(path), expected);
}

inline std::uint32_t file_crc32(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return detail::crc32_of(bytes.data(), bytes.size());
}

}  // namespace phasenet
