#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace traceguard {

namespace mp = boost::multiprecision;

// 256-bit EVM word, modulo-2^256 arithmetic.
using Word256 = mp::uint256_t;
// Exact rational for ratio bounds and percentage math.
using Rational = mp::cpp_rational;

using Bytes = std::vector<uint8_t>;

// Trace or metadata that cannot be decoded into the documented shape.
struct MalformedTrace : std::runtime_error {
    explicit MalformedTrace(const std::string& what) : std::runtime_error(what) {}
};

// Calldata or return data that contradicts the catalogued signature.
struct AbiMismatch : std::runtime_error {
    explicit AbiMismatch(const std::string& what) : std::runtime_error(what) {}
};

// Taint stack lost sync with the concrete stack; an opcode arity is unmodeled.
struct TrackerDesync : std::runtime_error {
    explicit TrackerDesync(const std::string& what) : std::runtime_error(what) {}
};

// A required configuration entry is absent.
struct ConfigMissing : std::runtime_error {
    explicit ConfigMissing(const std::string& what) : std::runtime_error(what) {}
};

// Corpus resolved to zero transactions.
struct EmptyCorpus : std::runtime_error {
    explicit EmptyCorpus(const std::string& what) : std::runtime_error(what) {}
};

// Remote trace source unreachable or answering garbage.
struct ProviderUnavailable : std::runtime_error {
    explicit ProviderUnavailable(const std::string& what) : std::runtime_error(what) {}
};

// Cached record disagrees with its locator or with itself.
struct CorruptCache : std::runtime_error {
    explicit CorruptCache(const std::string& what) : std::runtime_error(what) {}
};

// Guard state references locations the manifest does not define.
struct StateCorrupt : std::runtime_error {
    explicit StateCorrupt(const std::string& what) : std::runtime_error(what) {}
};

// 20-byte account address.
struct Address {
    std::array<uint8_t, 20> bytes{};

    auto operator<=>(const Address&) const = default;

    bool is_zero() const {
        for (uint8_t b : bytes)
            if (b != 0) return false;
        return true;
    }
    // Addresses 0x01..0x09 host precompiled contracts.
    bool is_precompile() const {
        for (size_t i = 0; i + 1 < bytes.size(); ++i)
            if (bytes[i] != 0) return false;
        return bytes[19] >= 0x01 && bytes[19] <= 0x09;
    }
};

// 32-byte hash value (keccak digests, transaction hashes).
struct Hash256 {
    std::array<uint8_t, 32> bytes{};

    auto operator<=>(const Hash256&) const = default;
};

// 4-byte function selector.
struct Selector {
    std::array<uint8_t, 4> bytes{};

    auto operator<=>(const Selector&) const = default;
};

// --- hex codecs -------------------------------------------------------------

// Parses "0x..." or bare hex into bytes. Odd-length input gets a leading zero
// nibble. Throws MalformedTrace on non-hex characters.
Bytes hex_to_bytes(const std::string& hex);

std::string bytes_to_hex(const uint8_t* data, size_t len, bool with_prefix = true);
std::string bytes_to_hex(const Bytes& data, bool with_prefix = true);

// Parses a hex quantity into a 256-bit word. Throws MalformedTrace if the
// value needs more than 256 bits.
Word256 hex_to_word(const std::string& hex);

// Accepts "0x..." hex or decimal digits; used for metadata quantity fields.
Word256 parse_quantity(const std::string& text);

// Minimal fixed-width big-endian form, "0x0" for zero.
std::string word_to_hex(const Word256& w);

// 32-byte big-endian encoding.
std::array<uint8_t, 32> word_to_be32(const Word256& w);
Word256 be_bytes_to_word(const uint8_t* data, size_t len);

Address parse_address(const std::string& hex);
std::string to_string(const Address& a);

Hash256 parse_hash(const std::string& hex);
std::string to_string(const Hash256& h);

std::string to_string(const Selector& s);
Selector parse_selector(const std::string& hex);

// Word truncated to its low 160 bits, as call targets are on the stack.
Address word_to_address(const Word256& w);
Word256 address_to_word(const Address& a);

// Reads the 32-byte word starting at `offset`, zero-padded past the end.
Word256 read_word(const Bytes& data, size_t offset);

}  // namespace traceguard
