#include "traceguard/slot_resolution.hpp"

#include <set>

#include "traceguard/keccak.hpp"

namespace traceguard {

void PreimageDictionary::record_sha3(const Bytes& input, const Hash256& digest) {
    if (input.size() != 64) return;
    Preimage p;
    p.first = be_bytes_to_word(input.data(), 32);
    p.second = be_bytes_to_word(input.data() + 32, 32);
    map_.emplace(be_bytes_to_word(digest.bytes.data(), 32), p);
}

void PreimageDictionary::record_sha3(const Bytes& input) {
    if (input.size() != 64) return;
    record_sha3(input, keccak256(input));
}

const PreimageDictionary::Preimage* PreimageDictionary::find(const Word256& digest_as_word) const {
    auto it = map_.find(digest_as_word);
    return it == map_.end() ? nullptr : &it->second;
}

std::string SlotResolution::path() const {
    std::string out = base_variable;
    for (const auto& k : keys) out += "[" + word_to_hex(k.key) + "]";
    return out;
}

std::string SlotResolution::pattern() const {
    std::string out = base_variable;
    for (size_t i = 0; i < keys.size(); ++i) out += "[*]";
    return out;
}

SlotResolution resolve_slot(const Word256& slot_key, const StorageLayout& layout,
                            const PreimageDictionary& dict) {
    SlotResolution out;
    out.raw_slot = slot_key;

    // Peel hashes inner-to-outer: each preimage of the current slot exposes
    // the next key and the slot it was derived from. Keys come off the chain
    // innermost first and are reversed at the end.
    std::vector<Word256> keys_inner_first;
    Word256 cursor = slot_key;
    std::set<Word256> visited;
    while (layout.at_slot(cursor).empty()) {
        const auto* pre = dict.find(cursor);
        if (!pre) return out;
        if (!visited.insert(cursor).second) return out;  // preimage cycle
        if (layout.dialect == LayoutDialect::kSolidity) {
            // keccak(key ++ declarationSlot)
            keys_inner_first.push_back(pre->first);
            cursor = pre->second;
        } else {
            // keccak(declarationSlot ++ key)
            keys_inner_first.push_back(pre->second);
            cursor = pre->first;
        }
    }

    auto declared = layout.at_slot(cursor);
    if (keys_inner_first.empty()) {
        // Direct slot access. More than one declared variable means a packed
        // slot; without a byte range at the access site, the resolution names
        // the whole-slot variable list and leads with the first.
        out.resolved = true;
        out.base_variable = declared.front()->name;
        out.value_type = declared.front()->type.name;
        for (const auto* v : declared) out.packed_siblings.push_back(v->name);
        return out;
    }

    // A hashed chain must land on a lone mapping declaration whose nesting
    // depth matches the number of peeled keys.
    if (declared.size() != 1) return out;
    const StorageVariable* var = declared.front();
    if (var->type.mapping_arity() != keys_inner_first.size()) return out;

    const StorageType* t = &var->type;
    out.base_variable = var->name;
    for (auto it = keys_inner_first.rbegin(); it != keys_inner_first.rend(); ++it) {
        out.keys.push_back({*it, t->key_type});
        t = t->value.get();
    }
    // Mapping to a struct or array resolves one level (the element base) and
    // stays typed as that opaque tail.
    out.value_type = t->name;
    out.resolved = true;
    out.packed_siblings.push_back(var->name);
    return out;
}

}  // namespace traceguard
