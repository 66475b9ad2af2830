#include "traceguard/keccak.hpp"

#include <cstring>

namespace traceguard {

namespace {

constexpr int kRounds = 24;
constexpr size_t kRateBytes = 136;  // 1600/8 - 2*32

constexpr uint64_t kRoundConstants[kRounds] = {
    0x0000000000000001ULL, 0x0000000000008082ULL, 0x800000000000808aULL,
    0x8000000080008000ULL, 0x000000000000808bULL, 0x0000000080000001ULL,
    0x8000000080008081ULL, 0x8000000000008009ULL, 0x000000000000008aULL,
    0x0000000000000088ULL, 0x0000000080008009ULL, 0x000000008000000aULL,
    0x000000008000808bULL, 0x800000000000008bULL, 0x8000000000008089ULL,
    0x8000000000008003ULL, 0x8000000000008002ULL, 0x8000000000000080ULL,
    0x000000000000800aULL, 0x800000008000000aULL, 0x8000000080008081ULL,
    0x8000000000008080ULL, 0x0000000080000001ULL, 0x8000000080008008ULL,
};

constexpr int kRotations[25] = {
    0,  1,  62, 28, 27, 36, 44, 6,  55, 20, 3,  10, 43,
    25, 39, 41, 45, 15, 21, 8,  18, 2,  61, 56, 14,
};

uint64_t rotl(uint64_t x, int n) {
    return n == 0 ? x : (x << n) | (x >> (64 - n));
}

void keccak_f1600(uint64_t st[25]) {
    for (int round = 0; round < kRounds; ++round) {
        // theta
        uint64_t c[5], d[5];
        for (int x = 0; x < 5; ++x)
            c[x] = st[x] ^ st[x + 5] ^ st[x + 10] ^ st[x + 15] ^ st[x + 20];
        for (int x = 0; x < 5; ++x)
            d[x] = c[(x + 4) % 5] ^ rotl(c[(x + 1) % 5], 1);
        for (int i = 0; i < 25; ++i) st[i] ^= d[i % 5];
        // rho + pi
        uint64_t b[25];
        for (int x = 0; x < 5; ++x)
            for (int y = 0; y < 5; ++y)
                b[y + 5 * ((2 * x + 3 * y) % 5)] = rotl(st[x + 5 * y], kRotations[x + 5 * y]);
        // chi
        for (int x = 0; x < 5; ++x)
            for (int y = 0; y < 5; ++y)
                st[x + 5 * y] = b[x + 5 * y] ^ (~b[(x + 1) % 5 + 5 * y] & b[(x + 2) % 5 + 5 * y]);
        // iota
        st[0] ^= kRoundConstants[round];
    }
}

}  // namespace

Hash256 keccak256(const uint8_t* data, size_t len) {
    uint64_t st[25] = {};
    uint8_t block[kRateBytes];

    while (len >= kRateBytes) {
        std::memcpy(block, data, kRateBytes);
        for (size_t i = 0; i < kRateBytes / 8; ++i) {
            uint64_t lane;
            std::memcpy(&lane, block + 8 * i, 8);
            st[i] ^= lane;  // little-endian lanes
        }
        keccak_f1600(st);
        data += kRateBytes;
        len -= kRateBytes;
    }

    std::memset(block, 0, kRateBytes);
    if (len > 0) std::memcpy(block, data, len);
    block[len] ^= 0x01;
    block[kRateBytes - 1] ^= 0x80;
    for (size_t i = 0; i < kRateBytes / 8; ++i) {
        uint64_t lane;
        std::memcpy(&lane, block + 8 * i, 8);
        st[i] ^= lane;
    }
    keccak_f1600(st);

    Hash256 out;
    for (int i = 0; i < 4; ++i) {
        uint64_t lane = st[i];
        for (int j = 0; j < 8; ++j)
            out.bytes[8 * i + j] = static_cast<uint8_t>(lane >> (8 * j));
    }
    return out;
}

Hash256 keccak256(const Bytes& data) {
    return keccak256(data.data(), data.size());
}

Hash256 keccak256(const std::string& data) {
    return keccak256(reinterpret_cast<const uint8_t*>(data.data()), data.size());
}

}  // namespace traceguard
