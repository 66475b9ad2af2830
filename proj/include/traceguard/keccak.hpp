#pragma once

#include "traceguard/common.hpp"

namespace traceguard {

// Keccak-256 as used by the EVM: sponge over keccak-f[1600], rate 1088 bits,
// 0x01 domain padding (pre-NIST; SHA3-256's 0x06 padding gives different
// digests and must not be substituted).
Hash256 keccak256(const uint8_t* data, size_t len);
Hash256 keccak256(const Bytes& data);
Hash256 keccak256(const std::string& data);

}  // namespace traceguard
