#include "traceguard/storage_layout.hpp"

#include <algorithm>

#include <json.hpp>

namespace traceguard {

using nlohmann::json;

namespace {

// Splits "mapping(K => V)" into K and V source texts.
bool split_mapping(const std::string& text, std::string* key, std::string* value) {
    const std::string prefix = "mapping(";
    if (text.compare(0, prefix.size(), prefix) != 0 || text.back() != ')') return false;
    std::string inner = text.substr(prefix.size(), text.size() - prefix.size() - 1);
    int nesting = 0;
    for (size_t i = 0; i + 1 < inner.size(); ++i) {
        if (inner[i] == '(') ++nesting;
        if (inner[i] == ')') --nesting;
        if (nesting == 0 && inner[i] == '=' && inner[i + 1] == '>') {
            *key = inner.substr(0, i);
            *value = inner.substr(i + 2);
            auto trim = [](std::string* s) {
                s->erase(0, s->find_first_not_of(' '));
                s->erase(s->find_last_not_of(' ') + 1);
            };
            trim(key);
            trim(value);
            return true;
        }
    }
    return false;
}

unsigned elementary_width(const std::string& t) {
    if (t == "address") return 20;
    if (t == "bool") return 1;
    if (t.compare(0, 5, "bytes") == 0 && t.size() > 5) {
        unsigned n = 0;
        for (size_t i = 5; i < t.size(); ++i) {
            if (t[i] < '0' || t[i] > '9') return 32;
            n = n * 10 + (t[i] - '0');
        }
        return n >= 1 && n <= 32 ? n : 32;
    }
    auto bits_of = [&](size_t prefix_len) -> unsigned {
        if (t.size() == prefix_len) return 256;
        unsigned bits = 0;
        for (size_t i = prefix_len; i < t.size(); ++i) {
            if (t[i] < '0' || t[i] > '9') return 0;
            bits = bits * 10 + (t[i] - '0');
        }
        return bits;
    };
    if (t.compare(0, 4, "uint") == 0) {
        unsigned bits = bits_of(4);
        if (bits >= 8 && bits <= 256 && bits % 8 == 0) return bits / 8;
    }
    if (t.compare(0, 3, "int") == 0) {
        unsigned bits = bits_of(3);
        if (bits >= 8 && bits <= 256 && bits % 8 == 0) return bits / 8;
    }
    return 32;
}

}  // namespace

unsigned StorageType::byte_width() const {
    if (kind != Kind::kElementary) return 32;
    return elementary_width(name);
}

unsigned StorageType::mapping_arity() const {
    unsigned n = 0;
    const StorageType* t = this;
    while (t->kind == Kind::kMapping) {
        ++n;
        t = t->value.get();
    }
    return n;
}

StorageType StorageType::parse(const std::string& text) {
    StorageType t;
    t.name = text;
    std::string key, value;
    if (split_mapping(text, &key, &value)) {
        t.kind = Kind::kMapping;
        t.key_type = key;
        t.value = std::make_unique<StorageType>(parse(value));
        return t;
    }
    if (text.size() >= 2 && text.back() == ']') {
        t.kind = Kind::kArray;
        auto open = text.rfind('[');
        if (open != std::string::npos)
            t.value = std::make_unique<StorageType>(parse(text.substr(0, open)));
        return t;
    }
    if (text.find('(') != std::string::npos || text.compare(0, 6, "struct") == 0) {
        t.kind = Kind::kOpaque;
        return t;
    }
    t.kind = Kind::kElementary;
    return t;
}

StorageType StorageType::clone() const {
    StorageType t;
    t.kind = kind;
    t.name = name;
    t.key_type = key_type;
    if (value) t.value = std::make_unique<StorageType>(value->clone());
    return t;
}

void StorageLayout::add(StorageVariable var) {
    unsigned width = var.type.byte_width();
    if (var.offset + width > 32)
        throw MalformedTrace("storage variable \"" + var.name + "\" spills past its slot");
    auto [lo, hi] = by_slot_.equal_range(var.slot);
    for (auto it = lo; it != hi; ++it) {
        const StorageVariable& other = vars_[it->second];
        unsigned other_width = other.type.byte_width();
        bool disjoint =
            var.offset + width <= other.offset || other.offset + other_width <= var.offset;
        if (!disjoint)
            throw MalformedTrace("storage variables \"" + var.name + "\" and \"" + other.name +
                                 "\" overlap in slot " + word_to_hex(var.slot));
    }
    by_slot_.emplace(var.slot, vars_.size());
    vars_.push_back(std::move(var));
}

std::vector<const StorageVariable*> StorageLayout::at_slot(const Word256& slot) const {
    std::vector<const StorageVariable*> out;
    auto [lo, hi] = by_slot_.equal_range(slot);
    for (auto it = lo; it != hi; ++it) out.push_back(&vars_[it->second]);
    // Stable presentation order: by offset within the slot.
    std::sort(out.begin(), out.end(),
              [](const StorageVariable* a, const StorageVariable* b) { return a->offset < b->offset; });
    return out;
}

const StorageVariable* StorageLayout::by_name(const std::string& name) const {
    for (const auto& v : vars_)
        if (v.name == name) return &v;
    return nullptr;
}

StorageLayout StorageLayout::load_descriptor(const nlohmann::json& doc) {
    StorageLayout layout;
    if (!doc.is_object()) throw MalformedTrace("storage layout descriptor must be an object");
    if (auto it = doc.find("dialect"); it != doc.end()) {
        std::string d = it->get<std::string>();
        if (d == "solidity") layout.dialect = LayoutDialect::kSolidity;
        else if (d == "vyper") layout.dialect = LayoutDialect::kVyper;
        else throw MalformedTrace("unknown storage dialect \"" + d + "\"");
    }
    auto vars = doc.find("variables");
    if (vars == doc.end() || !vars->is_array())
        throw MalformedTrace("storage layout descriptor missing variables array");
    for (const auto& v : *vars) {
        StorageVariable var;
        var.name = v.at("name").get<std::string>();
        const auto& slot = v.at("slot");
        var.slot = slot.is_string() ? parse_quantity(slot.get<std::string>())
                                    : Word256(slot.get<uint64_t>());
        if (auto it = v.find("offset"); it != v.end()) var.offset = it->get<unsigned>();
        var.type = StorageType::parse(v.at("type").get<std::string>());
        layout.add(std::move(var));
    }
    return layout;
}

}  // namespace traceguard
