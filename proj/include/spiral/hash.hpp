#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

namespace spiral {

// 32-byte content digest. Comparable and hashable so it can key ordered maps.
struct Hash {
    std::array<uint8_t, 32> bytes{};

    auto operator<=>(const Hash&) const = default;

    bool is_zero() const {
        for (auto b : bytes)
            if (b != 0) return false;
        return true;
    }

    std::string hex() const;
    static Hash from_hex(const std::string& s);
};

// SHA-256 over an arbitrary byte span.
Hash sha256(std::span<const uint8_t> data);
Hash sha256(const std::vector<uint8_t>& data);
Hash sha256(const std::string& data);

// Incremental byte sink for canonical encodings. Integers are big-endian,
// lists are length-prefixed with a u32 count.
struct Encoder {
    std::vector<uint8_t> buf;

    void put_u8(uint8_t v) { buf.push_back(v); }
    void put_u32(uint32_t v) {
        buf.push_back(uint8_t(v >> 24));
        buf.push_back(uint8_t(v >> 16));
        buf.push_back(uint8_t(v >> 8));
        buf.push_back(uint8_t(v));
    }
    void put_u64(uint64_t v) {
        put_u32(uint32_t(v >> 32));
        put_u32(uint32_t(v));
    }
    void put_bytes(std::span<const uint8_t> b) { buf.insert(buf.end(), b.begin(), b.end()); }
    void put_hash(const Hash& h) { put_bytes(h.bytes); }

    Hash digest() const { return sha256(buf); }
};

} // namespace spiral

template <>
struct std::hash<spiral::Hash> {
    size_t operator()(const spiral::Hash& h) const {
        size_t v;
        std::memcpy(&v, h.bytes.data(), sizeof(v));
        return v;
    }
};
