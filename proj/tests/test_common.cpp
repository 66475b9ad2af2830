#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "traceguard/common.hpp"

using namespace traceguard;

TEST_CASE("hex bytes round trip") {
    Bytes b{0xde, 0xad, 0xbe, 0xef};
    CHECK(bytes_to_hex(b) == "0xdeadbeef");
    CHECK(bytes_to_hex(b, false) == "deadbeef");
    CHECK(hex_to_bytes("0xdeadbeef") == b);
    CHECK(hex_to_bytes("deadbeef") == b);
    CHECK(hex_to_bytes("0x").empty());
    CHECK(hex_to_bytes("").empty());
}

TEST_CASE("odd length hex gets a leading zero nibble") {
    CHECK(hex_to_bytes("0xf") == Bytes{0x0f});
    CHECK(hex_to_bytes("0xabc") == Bytes{0x0a, 0xbc});
}

TEST_CASE("bad hex digits are rejected") {
    CHECK_THROWS_AS(hex_to_bytes("0xzz"), MalformedTrace);
    CHECK_THROWS_AS(hex_to_word("0xg1"), MalformedTrace);
}

TEST_CASE("hex words") {
    CHECK(hex_to_word("0x0") == 0);
    CHECK(hex_to_word("0x10") == 16);
    CHECK(hex_to_word("0x000000ff") == 255);
    std::string max(64, 'f');
    CHECK(hex_to_word("0x" + max) == Word256(0) - 1);
    CHECK_THROWS_AS(hex_to_word("0x1" + max), MalformedTrace);
    CHECK_THROWS_AS(hex_to_word(""), MalformedTrace);
}

TEST_CASE("quantities accept hex and decimal") {
    CHECK(parse_quantity("0x2a") == 42);
    CHECK(parse_quantity("42") == 42);
    CHECK(parse_quantity("0") == 0);
    CHECK_THROWS_AS(parse_quantity(""), MalformedTrace);
    CHECK_THROWS_AS(parse_quantity("12a"), MalformedTrace);
}

TEST_CASE("word rendering is minimal") {
    CHECK(word_to_hex(0) == "0x0");
    CHECK(word_to_hex(255) == "0xff");
    CHECK(word_to_hex(256) == "0x100");
    Word256 big = (Word256(0xab) << 248) | 0xcd;
    CHECK(hex_to_word(word_to_hex(big)) == big);
}

TEST_CASE("big endian 32 byte encoding") {
    auto be = word_to_be32(0x0102);
    CHECK(be[30] == 0x01);
    CHECK(be[31] == 0x02);
    CHECK(be[0] == 0);
    CHECK(be_bytes_to_word(be.data(), be.size()) == 0x0102);

    Word256 w = (Word256(0x11) << 248) | (Word256(0x22) << 128) | 0x33;
    auto round = word_to_be32(w);
    CHECK(be_bytes_to_word(round.data(), round.size()) == w);
}

TEST_CASE("read word zero pads past the end") {
    Bytes data(40, 0);
    data[0] = 0xaa;
    data[39] = 0xbb;
    CHECK(read_word(data, 0) == Word256(0xaa) << 248);
    // 24 real bytes remain at offset 16; the low 24 bytes are padding.
    Word256 tail = read_word(data, 16);
    CHECK(tail == Word256(0xbb) << 64);
    CHECK(read_word(data, 40) == 0);
    CHECK(read_word(Bytes{}, 0) == 0);
    CHECK(read_word(Bytes{0x01}, 0) == Word256(1) << 248);
}

TEST_CASE("addresses") {
    std::string hex = "0x56e4b1c10d58605f0efe2d61ca64acbbbd2c3657";
    Address a = parse_address(hex);
    CHECK(to_string(a) == hex);
    CHECK(a.bytes[0] == 0x56);
    CHECK(a.bytes[19] == 0x57);
    CHECK_FALSE(a.is_zero());
    CHECK(parse_address("0x0000000000000000000000000000000000000000").is_zero());
}

TEST_CASE("precompile detection") {
    auto addr_n = [](uint8_t n) {
        Address a;
        a.bytes[19] = n;
        return a;
    };
    CHECK_FALSE(addr_n(0).is_precompile());
    CHECK(addr_n(1).is_precompile());
    CHECK(addr_n(9).is_precompile());
    CHECK_FALSE(addr_n(10).is_precompile());
    Address high = addr_n(5);
    high.bytes[0] = 1;
    CHECK_FALSE(high.is_precompile());
}

TEST_CASE("word address conversion keeps the low 160 bits") {
    Address a = parse_address("0x89d24a6b4ccb1b6faa2625fe562bdd9a23260359");
    Word256 w = address_to_word(a);
    CHECK(word_to_address(w) == a);
    // High 96 bits are noise on the stack and must be dropped.
    CHECK(word_to_address(w | (Word256(0xffff) << 160)) == a);
}

TEST_CASE("hashes and selectors") {
    std::string hex(64, 'a');
    Hash256 h = parse_hash("0x" + hex);
    CHECK(to_string(h) == "0x" + hex);
    CHECK_THROWS_AS(parse_hash("0x1234"), MalformedTrace);

    Selector s = parse_selector("0xa9059cbb");
    CHECK(to_string(s) == "0xa9059cbb");
    CHECK(s.bytes[0] == 0xa9);
    CHECK_THROWS_AS(parse_selector("0xa9059c"), MalformedTrace);
}

TEST_CASE("word arithmetic wraps modulo 2^256") {
    Word256 max = Word256(0) - 1;
    CHECK(max + 1 == 0);
    CHECK(Word256(0) - 1 == max);
    CHECK(max * 2 == max - 1);
}
