#include "spiral/hash.hpp"

#include <stdexcept>

namespace spiral {

namespace {

// FIPS 180-4 SHA-256, self-contained so the canonical encodings have no
// external dependency.
struct Sha256Ctx {
    uint32_t state[8];
    uint64_t bitlen = 0;
    uint8_t block[64];
    size_t block_len = 0;

    Sha256Ctx() {
        static constexpr uint32_t init[8] = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                                             0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
        std::memcpy(state, init, sizeof(state));
    }

    static uint32_t rotr(uint32_t x, uint32_t n) { return (x >> n) | (x << (32 - n)); }

    void transform(const uint8_t* p) {
        static constexpr uint32_t k[64] = {
            0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4,
            0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe,
            0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f,
            0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
            0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
            0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
            0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116,
            0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
            0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
            0xc67178f2};
        uint32_t w[64];
        for (int i = 0; i < 16; ++i)
            w[i] = uint32_t(p[i * 4]) << 24 | uint32_t(p[i * 4 + 1]) << 16 |
                   uint32_t(p[i * 4 + 2]) << 8 | uint32_t(p[i * 4 + 3]);
        for (int i = 16; i < 64; ++i) {
            uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
            uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16] + s0 + w[i - 7] + s1;
        }
        uint32_t a = state[0], b = state[1], c = state[2], d = state[3];
        uint32_t e = state[4], f = state[5], g = state[6], h = state[7];
        for (int i = 0; i < 64; ++i) {
            uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
            uint32_t ch = (e & f) ^ (~e & g);
            uint32_t t1 = h + s1 + ch + k[i] + w[i];
            uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
            uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
            uint32_t t2 = s0 + maj;
            h = g; g = f; f = e; e = d + t1;
            d = c; c = b; b = a; a = t1 + t2;
        }
        state[0] += a; state[1] += b; state[2] += c; state[3] += d;
        state[4] += e; state[5] += f; state[6] += g; state[7] += h;
    }

    void update(const uint8_t* data, size_t len) {
        bitlen += uint64_t(len) * 8;
        while (len > 0) {
            size_t take = std::min(len, 64 - block_len);
            std::memcpy(block + block_len, data, take);
            block_len += take;
            data += take;
            len -= take;
            if (block_len == 64) {
                transform(block);
                block_len = 0;
            }
        }
    }

    Hash finish() {
        uint8_t pad[72] = {0x80};
        size_t padlen = (block_len < 56) ? (56 - block_len) : (120 - block_len);
        uint8_t lenbytes[8];
        for (int i = 0; i < 8; ++i) lenbytes[i] = uint8_t(bitlen >> (56 - 8 * i));
        update(pad, padlen);
        update(lenbytes, 8);
        Hash out;
        for (int i = 0; i < 8; ++i) {
            out.bytes[i * 4]     = uint8_t(state[i] >> 24);
            out.bytes[i * 4 + 1] = uint8_t(state[i] >> 16);
            out.bytes[i * 4 + 2] = uint8_t(state[i] >> 8);
            out.bytes[i * 4 + 3] = uint8_t(state[i]);
        }
        return out;
    }
};

constexpr char kHexDigits[] = "0123456789abcdef";

} // namespace

Hash sha256(std::span<const uint8_t> data) {
    Sha256Ctx ctx;
    if (!data.empty()) ctx.update(data.data(), data.size());
    return ctx.finish();
}

Hash sha256(const std::vector<uint8_t>& data) {
    return sha256(std::span<const uint8_t>(data.data(), data.size()));
}

Hash sha256(const std::string& data) {
    return sha256(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(data.data()), data.size()));
}

std::string Hash::hex() const {
    std::string s;
    s.reserve(64);
    for (auto b : bytes) {
        s.push_back(kHexDigits[b >> 4]);
        s.push_back(kHexDigits[b & 0xf]);
    }
    return s;
}

Hash Hash::from_hex(const std::string& s) {
    if (s.size() != 64) throw std::invalid_argument("hash hex must be 64 chars");
    auto nib = [](char c) -> uint8_t {
        if (c >= '0' && c <= '9') return uint8_t(c - '0');
        if (c >= 'a' && c <= 'f') return uint8_t(c - 'a' + 10);
        if (c >= 'A' && c <= 'F') return uint8_t(c - 'A' + 10);
        throw std::invalid_argument("bad hex digit");
    };
    Hash h;
    for (size_t i = 0; i < 32; ++i) h.bytes[i] = uint8_t(nib(s[2 * i]) << 4 | nib(s[2 * i + 1]));
    return h;
}

} // namespace spiral
