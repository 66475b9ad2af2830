#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "traceguard/common.hpp"

namespace traceguard {

// Decoded ABI value. Numeric kinds keep the raw 256-bit word (two's
// complement for kInt); byte-ish kinds fill `data`; arrays fill `elements`.
struct AbiValue {
    enum class Kind : uint8_t { kUint, kInt, kAddress, kBool, kFixedBytes, kBytes, kString, kArray };

    Kind kind = Kind::kUint;
    Word256 word = 0;
    Bytes data;
    std::vector<AbiValue> elements;

    bool operator==(const AbiValue&) const = default;

    Address as_address() const;
};

struct FunctionSig {
    std::string name;
    std::vector<std::string> inputs;   // canonical type strings
    std::vector<std::string> outputs;

    // "name(type1,type2,...)" — the string keccak hashes to the selector.
    std::string canonical() const;
    Selector selector() const;
};

struct DecodedCall {
    FunctionSig sig;
    std::vector<AbiValue> args;
};

// Per-address selector dictionary. Every signature's selector is recomputed
// on insert; a descriptor carrying an explicit selector that disagrees with
// the recomputed one is rejected with AbiMismatch.
class AbiCatalog {
  public:
    void add(const Address& contract, const FunctionSig& sig,
             std::optional<Selector> declared = std::nullopt);

    const FunctionSig* find(const Address& contract, const Selector& sel) const;
    bool has_contract(const Address& contract) const;

    // Descriptor shape: [{"name": ..., "inputs": [...], "outputs": [...],
    // "selector": optional}, ...]
    void load_descriptor(const Address& contract, const nlohmann::json& doc);

  private:
    std::map<Address, std::map<Selector, FunctionSig>> by_contract_;
};

// Splits calldata into selector + decoded arguments. Returns nullopt when the
// calldata is shorter than 4 bytes (fallback / plain transfer). Unknown
// selectors yield a selector but no DecodedCall. Argument bytes that
// contradict the signature raise AbiMismatch.
struct CallDecodeResult {
    std::optional<Selector> selector;
    std::optional<DecodedCall> decoded;
};

CallDecodeResult decode_function_call(const Bytes& calldata, const Address& contract,
                                      const AbiCatalog& catalog);

// Head/tail ABI decoding of a value block against canonical type strings.
std::vector<AbiValue> decode_abi_values(const std::vector<std::string>& types,
                                        const Bytes& data);

// Inverse of decode_abi_values for fixture construction and serialization.
Bytes encode_abi_values(const std::vector<std::string>& types,
                        const std::vector<AbiValue>& values);

AbiValue make_uint(const Word256& w);
AbiValue make_address(const Address& a);

nlohmann::json abi_value_to_json(const AbiValue& v);
AbiValue abi_value_from_json(const nlohmann::json& doc);

}  // namespace traceguard
