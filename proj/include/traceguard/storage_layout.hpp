#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "traceguard/common.hpp"

namespace traceguard {

// Slot assignment convention the contract was compiled under. The two
// dialects hash mapping accesses in mirrored orders: solidity-style uses
// keccak(key ++ declarationSlot), vyper-style keccak(declarationSlot ++ key).
enum class LayoutDialect : uint8_t { kSolidity, kVyper };

// Parsed declared type of one storage variable. Mappings nest; arrays and
// anything else are kept as opaque tails (resolved one level, then opaque).
struct StorageType {
    enum class Kind : uint8_t { kElementary, kMapping, kArray, kOpaque };

    Kind kind = Kind::kElementary;
    std::string name;                     // canonical source text
    std::string key_type;                 // mapping key, canonical
    std::unique_ptr<StorageType> value;   // mapping value / array element

    // Bytes a value of this type occupies when packed into a slot; mappings,
    // arrays, and opaque types reserve the full slot.
    unsigned byte_width() const;
    unsigned mapping_arity() const;

    static StorageType parse(const std::string& text);
    StorageType clone() const;
};

struct StorageVariable {
    std::string name;
    Word256 slot = 0;
    unsigned offset = 0;  // byte offset within the slot, 0 = low-order bytes
    StorageType type;
};

// Declared storage map of one contract. Validated on load: no two variables
// may overlap the same (slot, byte-range) region.
class StorageLayout {
  public:
    LayoutDialect dialect = LayoutDialect::kSolidity;

    void add(StorageVariable var);

    // All variables declared at `slot` (more than one when the slot packs).
    std::vector<const StorageVariable*> at_slot(const Word256& slot) const;
    const StorageVariable* by_name(const std::string& name) const;
    bool empty() const { return vars_.empty(); }

    // Descriptor shape: {"dialect": "solidity"|"vyper",
    //   "variables": [{"name", "slot", "offset", "type"}, ...]}
    static StorageLayout load_descriptor(const nlohmann::json& doc);

  private:
    std::vector<StorageVariable> vars_;
    std::multimap<Word256, size_t> by_slot_;
};

}  // namespace traceguard
