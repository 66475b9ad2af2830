#include "traceguard/trace.hpp"

#include <limits>

#include <json.hpp>

#include "traceguard/opcodes.hpp"

namespace traceguard {

using nlohmann::json;

const Word256& StructLogEntry::stack_top(size_t nth_from_top) const {
    if (nth_from_top >= stack.size())
        throw MalformedTrace("stack underflow reading operand of " + op);
    return stack[stack.size() - 1 - nth_from_top];
}

namespace {

uint64_t require_u64(const json& rec, const char* field) {
    auto it = rec.find(field);
    if (it == rec.end())
        throw MalformedTrace(std::string("trace record missing field \"") + field + "\"");
    if (it->is_number_unsigned()) return it->get<uint64_t>();
    if (it->is_number_integer()) {
        int64_t v = it->get<int64_t>();
        if (v < 0) throw MalformedTrace(std::string("negative value for \"") + field + "\"");
        return static_cast<uint64_t>(v);
    }
    if (it->is_string()) {
        Word256 w = parse_quantity(it->get<std::string>());
        if (w > std::numeric_limits<uint64_t>::max())
            throw MalformedTrace(std::string("value too wide for \"") + field + "\"");
        return static_cast<uint64_t>(w);
    }
    throw MalformedTrace(std::string("non-numeric value for \"") + field + "\"");
}

Bytes parse_memory(const json& mem) {
    Bytes out;
    if (mem.is_null()) return out;
    if (mem.is_string()) return hex_to_bytes(mem.get<std::string>());
    if (!mem.is_array())
        throw MalformedTrace("memory must be a hex string or an array of words");
    for (const auto& wordhex : mem) {
        if (!wordhex.is_string())
            throw MalformedTrace("memory word must be a hex string");
        Bytes word = hex_to_bytes(wordhex.get<std::string>());
        if (word.size() != 32) {
            // Tolerate short words by left-padding; archive nodes emit exactly
            // 32-byte chunks but hand-built fixtures may trim zeros.
            Bytes padded(32 - word.size(), 0);
            padded.insert(padded.end(), word.begin(), word.end());
            word = std::move(padded);
        }
        out.insert(out.end(), word.begin(), word.end());
    }
    return out;
}

StructLogEntry parse_record(const json& rec) {
    if (!rec.is_object()) throw MalformedTrace("trace record is not an object");
    StructLogEntry e;
    e.pc = require_u64(rec, "pc");
    auto op_it = rec.find("op");
    if (op_it == rec.end() || !op_it->is_string())
        throw MalformedTrace("trace record missing op mnemonic");
    e.op = op_it->get<std::string>();
    if (!opcode_by_name(e.op))
        throw MalformedTrace("unknown opcode mnemonic \"" + e.op + "\"");
    e.gas_left = require_u64(rec, "gas");
    e.gas_cost = require_u64(rec, "gasCost");
    if (auto it = rec.find("stack"); it != rec.end() && !it->is_null()) {
        if (!it->is_array()) throw MalformedTrace("stack must be an array");
        e.stack.reserve(it->size());
        for (const auto& s : *it) {
            if (!s.is_string()) throw MalformedTrace("stack entry must be a hex string");
            e.stack.push_back(hex_to_word(s.get<std::string>()));
        }
    }
    if (auto it = rec.find("memory"); it != rec.end()) e.memory = parse_memory(*it);
    if (auto it = rec.find("depth"); it != rec.end() && !it->is_null())
        e.depth = static_cast<uint32_t>(require_u64(rec, "depth"));
    return e;
}

}  // namespace

std::vector<StructLogEntry> parse_struct_logs(const nlohmann::json& doc) {
    const json* records = &doc;
    if (doc.is_object()) {
        auto it = doc.find("structLogs");
        if (it == doc.end())
            throw MalformedTrace("trace object has no structLogs array");
        records = &*it;
    }
    if (!records->is_array())
        throw MalformedTrace("trace is neither an array nor a structLogs object");
    std::vector<StructLogEntry> out;
    out.reserve(records->size());
    for (size_t i = 0; i < records->size(); ++i) {
        try {
            out.push_back(parse_record((*records)[i]));
        } catch (const MalformedTrace& err) {
            throw MalformedTrace("entry " + std::to_string(i) + ": " + err.what());
        }
    }
    return out;
}

std::vector<StructLogEntry> parse_struct_logs(const std::string& text) {
    // First try whole-document JSON; fall back to newline-delimited records.
    json doc = json::parse(text, nullptr, false);
    if (!doc.is_discarded()) return parse_struct_logs(doc);

    std::vector<StructLogEntry> out;
    size_t begin = 0, line_no = 0;
    while (begin < text.size()) {
        size_t end = text.find('\n', begin);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(begin, end - begin);
        begin = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded())
            throw MalformedTrace("line " + std::to_string(line_no) + " is not valid JSON");
        out.push_back(parse_record(rec));
    }
    return out;
}

TxMetadata parse_tx_metadata(const nlohmann::json& doc) {
    if (!doc.is_object()) throw MalformedTrace("metadata record is not an object");
    auto get_string = [&](const char* field) -> std::string {
        auto it = doc.find(field);
        if (it == doc.end() || !it->is_string())
            throw MalformedTrace(std::string("metadata missing field \"") + field + "\"");
        return it->get<std::string>();
    };
    auto get_quantity = [&](const char* field) -> Word256 {
        auto it = doc.find(field);
        if (it == doc.end())
            throw MalformedTrace(std::string("metadata missing field \"") + field + "\"");
        if (it->is_number_unsigned()) return Word256(it->get<uint64_t>());
        if (it->is_string()) return parse_quantity(it->get<std::string>());
        throw MalformedTrace(std::string("bad quantity for \"") + field + "\"");
    };

    TxMetadata m;
    m.tx_hash = parse_hash(get_string("txHash"));
    m.block_number = static_cast<uint64_t>(get_quantity("blockNumber"));
    m.block_timestamp = static_cast<uint64_t>(get_quantity("blockTimestamp"));
    if (auto it = doc.find("txIndex"); it != doc.end() && !it->is_null())
        m.tx_index = static_cast<uint32_t>(get_quantity("txIndex"));
    m.origin = parse_address(get_string("from"));
    if (auto it = doc.find("to"); it != doc.end() && !it->is_null() && !it->get<std::string>().empty())
        m.to = parse_address(it->get<std::string>());
    m.call_value = get_quantity("value");
    m.gas_provided = static_cast<uint64_t>(get_quantity("gas"));
    if (auto it = doc.find("input"); it != doc.end() && !it->is_null())
        m.input = hex_to_bytes(it->get<std::string>());
    return m;
}

nlohmann::json tx_metadata_to_json(const TxMetadata& meta) {
    json doc;
    doc["txHash"] = to_string(meta.tx_hash);
    doc["blockNumber"] = meta.block_number;
    doc["blockTimestamp"] = meta.block_timestamp;
    if (meta.tx_index) doc["txIndex"] = *meta.tx_index;
    doc["from"] = to_string(meta.origin);
    doc["to"] = meta.to ? to_string(*meta.to) : "";
    doc["value"] = word_to_hex(meta.call_value);
    doc["gas"] = meta.gas_provided;
    if (!meta.input.empty()) doc["input"] = bytes_to_hex(meta.input);
    return doc;
}

}  // namespace traceguard
