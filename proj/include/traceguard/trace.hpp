#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "traceguard/common.hpp"

namespace traceguard {

// One executed opcode as recorded by an archive node. `stack` is bottom-first,
// top of stack last; `memory` is the frame's memory before the opcode runs.
struct StructLogEntry {
    uint64_t pc = 0;
    std::string op;
    uint64_t gas_left = 0;
    uint64_t gas_cost = 0;
    std::vector<Word256> stack;
    Bytes memory;
    std::optional<uint32_t> depth;

    const Word256& stack_top(size_t nth_from_top = 0) const;
};

// Per-transaction envelope fields required to anchor a trace.
struct TxMetadata {
    Hash256 tx_hash{};
    uint64_t block_number = 0;
    uint64_t block_timestamp = 0;
    std::optional<uint32_t> tx_index;  // position within the block, when known
    Address origin{};                  // signer ("from")
    std::optional<Address> to;         // absent for contract creation
    Word256 call_value = 0;
    uint64_t gas_provided = 0;
    Bytes input;                       // calldata of the outer call, may be empty
};

// Accepts three shapes: a JSON array of records, an object with a "structLogs"
// array (the raw debug_traceTransaction result), or newline-delimited JSON
// records. Values wider than 256 bits, unknown mnemonics, or missing required
// fields raise MalformedTrace.
std::vector<StructLogEntry> parse_struct_logs(const std::string& text);
std::vector<StructLogEntry> parse_struct_logs(const nlohmann::json& doc);

// Metadata record with hex-or-decimal quantity fields.
TxMetadata parse_tx_metadata(const nlohmann::json& doc);
nlohmann::json tx_metadata_to_json(const TxMetadata& meta);

}  // namespace traceguard
