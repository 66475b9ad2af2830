#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "traceguard/common.hpp"
#include "traceguard/storage_layout.hpp"

namespace traceguard {

// Dictionary of in-trace keccak preimages, restricted to exactly-64-byte
// inputs: the shape both mapping-slot conventions hash. Keyed by digest,
// holding the two 32-byte input words.
class PreimageDictionary {
  public:
    struct Preimage {
        Word256 first = 0;
        Word256 second = 0;
    };

    // Records one observed SHA3. Inputs that are not exactly 64 bytes are
    // ignored; colliding re-records of the same digest are idempotent.
    void record_sha3(const Bytes& input, const Hash256& digest);
    void record_sha3(const Bytes& input);

    const Preimage* find(const Word256& digest_as_word) const;
    size_t size() const { return map_.size(); }

  private:
    std::map<Word256, Preimage> map_;
};

// One step of a resolved mapping access: the concrete key plus the declared
// key type it was checked against.
struct TypedKey {
    Word256 key = 0;
    std::string declared_type;

    bool operator==(const TypedKey&) const = default;
};

// Outcome of resolving a raw storage slot against a layout. Unresolved is a
// value, not an error: slots with no matching declaration or preimage chain
// simply stay opaque.
struct SlotResolution {
    bool resolved = false;
    std::string base_variable;           // declaring variable name
    std::vector<TypedKey> keys;          // outermost mapping key first
    std::string value_type;              // canonical type at the access point
    // All variables packed into the resolved slot; singleton unless packed.
    std::vector<std::string> packed_siblings;
    Word256 raw_slot = 0;

    // "balanceOf[0x1234...]" — concrete access path.
    std::string path() const;
    // "balanceOf[*]" — path with concrete keys generalized away.
    std::string pattern() const;
};

// Walks the keccak preimage chain from `slot_key` back to a declared variable.
// Each chain step consumes one dictionary entry, so recursion is naturally
// bounded by the dictionary size; cycles terminate via a visited set. A chain
// whose key count disagrees with the declared mapping nesting, or that bottoms
// out in an undeclared slot, yields Unresolved.
SlotResolution resolve_slot(const Word256& slot_key, const StorageLayout& layout,
                            const PreimageDictionary& dict);

}  // namespace traceguard
