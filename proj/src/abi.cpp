#include "traceguard/abi.hpp"

#include <algorithm>

#include <json.hpp>

#include "traceguard/keccak.hpp"

namespace traceguard {

using nlohmann::json;

namespace {

unsigned parse_digits(const std::string& s, const std::string& context) {
    if (s.empty()) throw AbiMismatch("missing digits in \"" + context + "\"");
    unsigned v = 0;
    for (char c : s) {
        if (c < '0' || c > '9') throw AbiMismatch("bad digits in \"" + context + "\"");
        v = v * 10 + (c - '0');
        if (v > 100000) throw AbiMismatch("absurd width in \"" + context + "\"");
    }
    return v;
}

struct ParsedType {
    enum class Base : uint8_t { kUint, kInt, kAddress, kBool, kFixedBytes, kBytes, kString };
    Base base = Base::kUint;
    unsigned bits = 256;       // uint/int width, or bytesN length * 8
    bool is_array = false;
    std::optional<size_t> array_len;  // nullopt = dynamic array
};

ParsedType parse_type(const std::string& type) {
    std::string t = type;
    ParsedType out;
    if (auto pos = t.find('['); pos != std::string::npos) {
        if (t.back() != ']') throw AbiMismatch("bad array type \"" + type + "\"");
        std::string dims = t.substr(pos + 1, t.size() - pos - 2);
        if (dims.find('[') != std::string::npos)
            throw AbiMismatch("nested arrays unsupported: \"" + type + "\"");
        out.is_array = true;
        if (!dims.empty()) out.array_len = parse_digits(dims, type);
        t = t.substr(0, pos);
    }
    auto parse_bits = [&](const std::string& prefix) -> std::optional<unsigned> {
        if (t.compare(0, prefix.size(), prefix) != 0) return std::nullopt;
        std::string rest = t.substr(prefix.size());
        if (rest.empty()) return 256;
        unsigned bits = parse_digits(rest, type);
        if (bits == 0 || bits > 256 || bits % 8 != 0)
            throw AbiMismatch("bad numeric width in \"" + type + "\"");
        return bits;
    };
    if (t == "address") {
        out.base = ParsedType::Base::kAddress;
    } else if (t == "bool") {
        out.base = ParsedType::Base::kBool;
    } else if (t == "bytes") {
        out.base = ParsedType::Base::kBytes;
    } else if (t == "string") {
        out.base = ParsedType::Base::kString;
    } else if (t.compare(0, 5, "bytes") == 0) {
        unsigned n = parse_digits(t.substr(5), type);
        if (n == 0 || n > 32) throw AbiMismatch("bad fixed-bytes width in \"" + type + "\"");
        out.base = ParsedType::Base::kFixedBytes;
        out.bits = n * 8;
    } else if (t.compare(0, 4, "uint") == 0) {
        out.base = ParsedType::Base::kUint;
        out.bits = *parse_bits("uint");
    } else if (t.compare(0, 3, "int") == 0) {
        out.base = ParsedType::Base::kInt;
        out.bits = *parse_bits("int");
    } else {
        throw AbiMismatch("unsupported ABI type \"" + type + "\"");
    }
    return out;
}

bool is_dynamic(const ParsedType& t) {
    if (t.is_array && !t.array_len) return true;
    if (t.base == ParsedType::Base::kBytes || t.base == ParsedType::Base::kString) {
        if (t.is_array) throw AbiMismatch("arrays of dynamic types unsupported");
        return true;
    }
    return false;
}

size_t head_words(const ParsedType& t) {
    if (is_dynamic(t)) return 1;
    if (t.is_array) return *t.array_len;
    return 1;
}

Word256 word_at(const Bytes& data, size_t offset, const char* what) {
    if (offset + 32 > data.size())
        throw AbiMismatch(std::string("calldata too short reading ") + what);
    return be_bytes_to_word(data.data() + offset, 32);
}

AbiValue decode_static_word(const ParsedType& t, const Word256& w) {
    AbiValue v;
    switch (t.base) {
        case ParsedType::Base::kUint:
            v.kind = AbiValue::Kind::kUint;
            v.word = w;
            break;
        case ParsedType::Base::kInt:
            v.kind = AbiValue::Kind::kInt;
            v.word = w;
            break;
        case ParsedType::Base::kAddress:
            v.kind = AbiValue::Kind::kAddress;
            v.word = w;
            if ((w >> 160) != 0) throw AbiMismatch("address word has dirty upper bits");
            break;
        case ParsedType::Base::kBool:
            v.kind = AbiValue::Kind::kBool;
            v.word = w;
            if (w > 1) throw AbiMismatch("bool word is neither 0 nor 1");
            break;
        case ParsedType::Base::kFixedBytes: {
            v.kind = AbiValue::Kind::kFixedBytes;
            auto be = word_to_be32(w);
            v.data.assign(be.begin(), be.begin() + t.bits / 8);
            break;
        }
        default:
            throw AbiMismatch("dynamic type where a static word was expected");
    }
    return v;
}

AbiValue decode_dynamic_tail(const ParsedType& t, const Bytes& data, size_t tail_offset) {
    AbiValue v;
    Word256 len_word = word_at(data, tail_offset, "dynamic length");
    if (len_word > data.size()) throw AbiMismatch("dynamic length exceeds calldata");
    size_t len = static_cast<size_t>(len_word);
    if (t.is_array) {
        v.kind = AbiValue::Kind::kArray;
        ParsedType elem = t;
        elem.is_array = false;
        elem.array_len = std::nullopt;
        for (size_t i = 0; i < len; ++i)
            v.elements.push_back(
                decode_static_word(elem, word_at(data, tail_offset + 32 + 32 * i, "array element")));
        return v;
    }
    v.kind = t.base == ParsedType::Base::kString ? AbiValue::Kind::kString : AbiValue::Kind::kBytes;
    if (tail_offset + 32 + len > data.size())
        throw AbiMismatch("dynamic data exceeds calldata");
    v.data.assign(data.begin() + tail_offset + 32, data.begin() + tail_offset + 32 + len);
    return v;
}

}  // namespace

Address AbiValue::as_address() const {
    return word_to_address(word);
}

std::string FunctionSig::canonical() const {
    std::string out = name + "(";
    for (size_t i = 0; i < inputs.size(); ++i) {
        if (i) out += ",";
        out += inputs[i];
    }
    out += ")";
    return out;
}

Selector FunctionSig::selector() const {
    Hash256 h = keccak256(canonical());
    Selector s;
    std::copy(h.bytes.begin(), h.bytes.begin() + 4, s.bytes.begin());
    return s;
}

void AbiCatalog::add(const Address& contract, const FunctionSig& sig,
                     std::optional<Selector> declared) {
    Selector computed = sig.selector();
    if (declared && *declared != computed)
        throw AbiMismatch("declared selector " + to_string(*declared) + " does not match " +
                          sig.canonical() + " (" + to_string(computed) + ")");
    by_contract_[contract][computed] = sig;
}

const FunctionSig* AbiCatalog::find(const Address& contract, const Selector& sel) const {
    auto c = by_contract_.find(contract);
    if (c == by_contract_.end()) return nullptr;
    auto f = c->second.find(sel);
    if (f == c->second.end()) return nullptr;
    return &f->second;
}

bool AbiCatalog::has_contract(const Address& contract) const {
    return by_contract_.count(contract) != 0;
}

void AbiCatalog::load_descriptor(const Address& contract, const nlohmann::json& doc) {
    if (!doc.is_array()) throw AbiMismatch("ABI descriptor must be an array");
    for (const auto& entry : doc) {
        if (!entry.is_object()) throw AbiMismatch("ABI descriptor entry must be an object");
        // Skip constructor/event/fallback entries from full compiler ABIs.
        if (auto it = entry.find("type"); it != entry.end() && it->get<std::string>() != "function")
            continue;
        FunctionSig sig;
        sig.name = entry.at("name").get<std::string>();
        auto read_types = [&](const char* field, std::vector<std::string>* out) {
            auto it = entry.find(field);
            if (it == entry.end()) return;
            for (const auto& t : *it) {
                if (t.is_string())
                    out->push_back(t.get<std::string>());
                else if (t.is_object())  // compiler shape: {"type": "...", "name": ...}
                    out->push_back(t.at("type").get<std::string>());
                else
                    throw AbiMismatch("bad type entry in ABI descriptor");
            }
        };
        read_types("inputs", &sig.inputs);
        read_types("outputs", &sig.outputs);
        std::optional<Selector> declared;
        if (auto it = entry.find("selector"); it != entry.end() && !it->is_null())
            declared = parse_selector(it->get<std::string>());
        add(contract, sig, declared);
    }
}

std::vector<AbiValue> decode_abi_values(const std::vector<std::string>& types, const Bytes& data) {
    std::vector<ParsedType> parsed;
    parsed.reserve(types.size());
    for (const auto& t : types) parsed.push_back(parse_type(t));

    size_t head_size = 0;
    for (const auto& t : parsed) head_size += 32 * head_words(t);
    if (data.size() < head_size)
        throw AbiMismatch("calldata shorter than static head (" + std::to_string(data.size()) +
                          " < " + std::to_string(head_size) + ")");

    std::vector<AbiValue> out;
    size_t cursor = 0;
    for (const auto& t : parsed) {
        if (is_dynamic(t)) {
            Word256 rel = word_at(data, cursor, "tail offset");
            if (rel > data.size()) throw AbiMismatch("tail offset exceeds calldata");
            out.push_back(decode_dynamic_tail(t, data, static_cast<size_t>(rel)));
            cursor += 32;
        } else if (t.is_array) {
            AbiValue arr;
            arr.kind = AbiValue::Kind::kArray;
            ParsedType elem = t;
            elem.is_array = false;
            elem.array_len = std::nullopt;
            for (size_t i = 0; i < *t.array_len; ++i) {
                arr.elements.push_back(decode_static_word(elem, word_at(data, cursor, "array element")));
                cursor += 32;
            }
            out.push_back(std::move(arr));
        } else {
            out.push_back(decode_static_word(t, word_at(data, cursor, "argument")));
            cursor += 32;
        }
    }
    return out;
}

Bytes encode_abi_values(const std::vector<std::string>& types,
                        const std::vector<AbiValue>& values) {
    if (types.size() != values.size())
        throw AbiMismatch("encode: type/value count mismatch");
    std::vector<ParsedType> parsed;
    for (const auto& t : types) parsed.push_back(parse_type(t));

    size_t head_size = 0;
    for (const auto& t : parsed) head_size += 32 * head_words(t);

    Bytes head, tail;
    auto push_word = [](Bytes* out, const Word256& w) {
        auto be = word_to_be32(w);
        out->insert(out->end(), be.begin(), be.end());
    };
    auto static_word = [&](const ParsedType& t, const AbiValue& v) -> Word256 {
        if (t.base == ParsedType::Base::kFixedBytes) {
            Bytes padded = v.data;
            padded.resize(32, 0);
            return be_bytes_to_word(padded.data(), 32);
        }
        return v.word;
    };
    for (size_t i = 0; i < parsed.size(); ++i) {
        const auto& t = parsed[i];
        const auto& v = values[i];
        if (is_dynamic(t)) {
            push_word(&head, Word256(head_size + tail.size()));
            if (t.is_array) {
                push_word(&tail, Word256(v.elements.size()));
                ParsedType elem = t;
                elem.is_array = false;
                for (const auto& e : v.elements) push_word(&tail, static_word(elem, e));
            } else {
                push_word(&tail, Word256(v.data.size()));
                Bytes padded = v.data;
                padded.resize((padded.size() + 31) / 32 * 32, 0);
                tail.insert(tail.end(), padded.begin(), padded.end());
            }
        } else if (t.is_array) {
            ParsedType elem = t;
            elem.is_array = false;
            for (const auto& e : v.elements) push_word(&head, static_word(elem, e));
        } else {
            push_word(&head, static_word(t, v));
        }
    }
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
}

CallDecodeResult decode_function_call(const Bytes& calldata, const Address& contract,
                                      const AbiCatalog& catalog) {
    CallDecodeResult out;
    if (calldata.size() < 4) return out;
    Selector sel;
    std::copy(calldata.begin(), calldata.begin() + 4, sel.bytes.begin());
    out.selector = sel;
    const FunctionSig* sig = catalog.find(contract, sel);
    if (!sig) return out;
    Bytes args(calldata.begin() + 4, calldata.end());
    DecodedCall call;
    call.sig = *sig;
    call.args = decode_abi_values(sig->inputs, args);
    out.decoded = std::move(call);
    return out;
}

AbiValue make_uint(const Word256& w) {
    AbiValue v;
    v.kind = AbiValue::Kind::kUint;
    v.word = w;
    return v;
}

AbiValue make_address(const Address& a) {
    AbiValue v;
    v.kind = AbiValue::Kind::kAddress;
    v.word = address_to_word(a);
    return v;
}

namespace {
const char* kind_name(AbiValue::Kind k) {
    switch (k) {
        case AbiValue::Kind::kUint: return "uint";
        case AbiValue::Kind::kInt: return "int";
        case AbiValue::Kind::kAddress: return "address";
        case AbiValue::Kind::kBool: return "bool";
        case AbiValue::Kind::kFixedBytes: return "fixedBytes";
        case AbiValue::Kind::kBytes: return "bytes";
        case AbiValue::Kind::kString: return "string";
        case AbiValue::Kind::kArray: return "array";
    }
    return "?";
}
}  // namespace

nlohmann::json abi_value_to_json(const AbiValue& v) {
    json doc;
    doc["kind"] = kind_name(v.kind);
    switch (v.kind) {
        case AbiValue::Kind::kArray: {
            json elems = json::array();
            for (const auto& e : v.elements) elems.push_back(abi_value_to_json(e));
            doc["elements"] = std::move(elems);
            break;
        }
        case AbiValue::Kind::kBytes:
        case AbiValue::Kind::kString:
        case AbiValue::Kind::kFixedBytes:
            doc["data"] = bytes_to_hex(v.data);
            break;
        default:
            doc["word"] = word_to_hex(v.word);
    }
    return doc;
}

AbiValue abi_value_from_json(const nlohmann::json& doc) {
    AbiValue v;
    std::string kind = doc.at("kind").get<std::string>();
    if (kind == "uint") v.kind = AbiValue::Kind::kUint;
    else if (kind == "int") v.kind = AbiValue::Kind::kInt;
    else if (kind == "address") v.kind = AbiValue::Kind::kAddress;
    else if (kind == "bool") v.kind = AbiValue::Kind::kBool;
    else if (kind == "fixedBytes") v.kind = AbiValue::Kind::kFixedBytes;
    else if (kind == "bytes") v.kind = AbiValue::Kind::kBytes;
    else if (kind == "string") v.kind = AbiValue::Kind::kString;
    else if (kind == "array") v.kind = AbiValue::Kind::kArray;
    else throw AbiMismatch("unknown AbiValue kind \"" + kind + "\"");

    if (v.kind == AbiValue::Kind::kArray) {
        for (const auto& e : doc.at("elements")) v.elements.push_back(abi_value_from_json(e));
    } else if (v.kind == AbiValue::Kind::kBytes || v.kind == AbiValue::Kind::kString ||
               v.kind == AbiValue::Kind::kFixedBytes) {
        v.data = hex_to_bytes(doc.at("data").get<std::string>());
    } else {
        v.word = hex_to_word(doc.at("word").get<std::string>());
    }
    return v;
}

}  // namespace traceguard
