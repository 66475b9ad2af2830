#include "traceguard/common.hpp"

#include <algorithm>

namespace traceguard {

namespace {

int nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

std::string strip_prefix(const std::string& hex) {
    if (hex.size() >= 2 && hex[0] == '0' && (hex[1] == 'x' || hex[1] == 'X'))
        return hex.substr(2);
    return hex;
}

}  // namespace

Bytes hex_to_bytes(const std::string& hex) {
    std::string h = strip_prefix(hex);
    if (h.size() % 2 != 0) h.insert(h.begin(), '0');
    Bytes out;
    out.reserve(h.size() / 2);
    for (size_t i = 0; i < h.size(); i += 2) {
        int hi = nibble(h[i]);
        int lo = nibble(h[i + 1]);
        if (hi < 0 || lo < 0)
            throw MalformedTrace("bad hex digit in \"" + hex + "\"");
        out.push_back(static_cast<uint8_t>((hi << 4) | lo));
    }
    return out;
}

std::string bytes_to_hex(const uint8_t* data, size_t len, bool with_prefix) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2 + 2);
    if (with_prefix) out += "0x";
    for (size_t i = 0; i < len; ++i) {
        out += digits[data[i] >> 4];
        out += digits[data[i] & 0xf];
    }
    return out;
}

std::string bytes_to_hex(const Bytes& data, bool with_prefix) {
    return bytes_to_hex(data.data(), data.size(), with_prefix);
}

Word256 hex_to_word(const std::string& hex) {
    std::string h = strip_prefix(hex);
    if (h.empty()) throw MalformedTrace("empty hex quantity");
    size_t first = h.find_first_not_of('0');
    if (first == std::string::npos) return 0;
    h = h.substr(first);
    if (h.size() > 64)
        throw MalformedTrace("quantity wider than 256 bits: " + hex);
    Word256 w = 0;
    for (char c : h) {
        int n = nibble(c);
        if (n < 0) throw MalformedTrace("bad hex digit in \"" + hex + "\"");
        w <<= 4;
        w += n;
    }
    return w;
}

Word256 parse_quantity(const std::string& text) {
    if (text.size() >= 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X'))
        return hex_to_word(text);
    if (text.empty()) throw MalformedTrace("empty quantity");
    Word256 w = 0;
    for (char c : text) {
        if (c < '0' || c > '9')
            throw MalformedTrace("bad decimal quantity \"" + text + "\"");
        w = w * 10 + (c - '0');
    }
    return w;
}

std::string word_to_hex(const Word256& w) {
    if (w == 0) return "0x0";
    static const char* digits = "0123456789abcdef";
    std::string out;
    Word256 v = w;
    while (v != 0) {
        out += digits[static_cast<unsigned>(v & 0xf)];
        v >>= 4;
    }
    out += "x0";
    std::reverse(out.begin(), out.end());
    return out;
}

std::array<uint8_t, 32> word_to_be32(const Word256& w) {
    std::array<uint8_t, 32> out{};
    Word256 v = w;
    for (int i = 31; i >= 0; --i) {
        out[i] = static_cast<uint8_t>(v & 0xff);
        v >>= 8;
    }
    return out;
}

Word256 be_bytes_to_word(const uint8_t* data, size_t len) {
    if (len > 32) throw MalformedTrace("word wider than 32 bytes");
    Word256 w = 0;
    for (size_t i = 0; i < len; ++i) {
        w <<= 8;
        w += data[i];
    }
    return w;
}

Address parse_address(const std::string& hex) {
    Bytes b = hex_to_bytes(hex);
    Address a;
    if (b.size() > 20) {
        // Tolerate left-padded 32-byte forms as long as the padding is zero.
        for (size_t i = 0; i + 20 < b.size(); ++i)
            if (b[i] != 0) throw MalformedTrace("address wider than 20 bytes: " + hex);
        std::copy(b.end() - 20, b.end(), a.bytes.begin());
    } else {
        std::copy(b.begin(), b.end(), a.bytes.end() - b.size());
    }
    return a;
}

std::string to_string(const Address& a) {
    return bytes_to_hex(a.bytes.data(), a.bytes.size());
}

Hash256 parse_hash(const std::string& hex) {
    Bytes b = hex_to_bytes(hex);
    if (b.size() != 32) throw MalformedTrace("hash must be 32 bytes: " + hex);
    Hash256 h;
    std::copy(b.begin(), b.end(), h.bytes.begin());
    return h;
}

std::string to_string(const Hash256& h) {
    return bytes_to_hex(h.bytes.data(), h.bytes.size());
}

std::string to_string(const Selector& s) {
    return bytes_to_hex(s.bytes.data(), s.bytes.size());
}

Selector parse_selector(const std::string& hex) {
    Bytes b = hex_to_bytes(hex);
    if (b.size() != 4) throw MalformedTrace("selector must be 4 bytes: " + hex);
    Selector s;
    std::copy(b.begin(), b.end(), s.bytes.begin());
    return s;
}

Address word_to_address(const Word256& w) {
    auto be = word_to_be32(w);
    Address a;
    std::copy(be.begin() + 12, be.end(), a.bytes.begin());
    return a;
}

Word256 address_to_word(const Address& a) {
    return be_bytes_to_word(a.bytes.data(), a.bytes.size());
}

Word256 read_word(const Bytes& data, size_t offset) {
    uint8_t buf[32] = {};
    for (size_t i = 0; i < 32; ++i)
        if (offset + i < data.size()) buf[i] = data[offset + i];
    return be_bytes_to_word(buf, 32);
}

}  // namespace traceguard
