#include "traceguard/opcodes.hpp"

#include <unordered_map>

namespace traceguard {

namespace {

struct TableEntry {
    const char* name;
    uint8_t code;
    uint8_t pops;
    uint8_t pushes;
};

constexpr TableEntry kTable[] = {
    {"STOP", 0x00, 0, 0},
    {"ADD", 0x01, 2, 1},
    {"MUL", 0x02, 2, 1},
    {"SUB", 0x03, 2, 1},
    {"DIV", 0x04, 2, 1},
    {"SDIV", 0x05, 2, 1},
    {"MOD", 0x06, 2, 1},
    {"SMOD", 0x07, 2, 1},
    {"ADDMOD", 0x08, 3, 1},
    {"MULMOD", 0x09, 3, 1},
    {"EXP", 0x0a, 2, 1},
    {"SIGNEXTEND", 0x0b, 2, 1},
    {"LT", 0x10, 2, 1},
    {"GT", 0x11, 2, 1},
    {"SLT", 0x12, 2, 1},
    {"SGT", 0x13, 2, 1},
    {"EQ", 0x14, 2, 1},
    {"ISZERO", 0x15, 1, 1},
    {"AND", 0x16, 2, 1},
    {"OR", 0x17, 2, 1},
    {"XOR", 0x18, 2, 1},
    {"NOT", 0x19, 1, 1},
    {"BYTE", 0x1a, 2, 1},
    {"SHL", 0x1b, 2, 1},
    {"SHR", 0x1c, 2, 1},
    {"SAR", 0x1d, 2, 1},
    {"SHA3", 0x20, 2, 1},
    {"KECCAK256", 0x20, 2, 1},
    {"ADDRESS", 0x30, 0, 1},
    {"BALANCE", 0x31, 1, 1},
    {"ORIGIN", 0x32, 0, 1},
    {"CALLER", 0x33, 0, 1},
    {"CALLVALUE", 0x34, 0, 1},
    {"CALLDATALOAD", 0x35, 1, 1},
    {"CALLDATASIZE", 0x36, 0, 1},
    {"CALLDATACOPY", 0x37, 3, 0},
    {"CODESIZE", 0x38, 0, 1},
    {"CODECOPY", 0x39, 3, 0},
    {"GASPRICE", 0x3a, 0, 1},
    {"EXTCODESIZE", 0x3b, 1, 1},
    {"EXTCODECOPY", 0x3c, 4, 0},
    {"RETURNDATASIZE", 0x3d, 0, 1},
    {"RETURNDATACOPY", 0x3e, 3, 0},
    {"EXTCODEHASH", 0x3f, 1, 1},
    {"BLOCKHASH", 0x40, 1, 1},
    {"COINBASE", 0x41, 0, 1},
    {"TIMESTAMP", 0x42, 0, 1},
    {"NUMBER", 0x43, 0, 1},
    {"DIFFICULTY", 0x44, 0, 1},
    {"PREVRANDAO", 0x44, 0, 1},
    {"GASLIMIT", 0x45, 0, 1},
    {"CHAINID", 0x46, 0, 1},
    {"SELFBALANCE", 0x47, 0, 1},
    {"BASEFEE", 0x48, 0, 1},
    {"BLOBHASH", 0x49, 1, 1},
    {"BLOBBASEFEE", 0x4a, 0, 1},
    {"POP", 0x50, 1, 0},
    {"MLOAD", 0x51, 1, 1},
    {"MSTORE", 0x52, 2, 0},
    {"MSTORE8", 0x53, 2, 0},
    {"SLOAD", 0x54, 1, 1},
    {"SSTORE", 0x55, 2, 0},
    {"JUMP", 0x56, 1, 0},
    {"JUMPI", 0x57, 2, 0},
    {"PC", 0x58, 0, 1},
    {"MSIZE", 0x59, 0, 1},
    {"GAS", 0x5a, 0, 1},
    {"JUMPDEST", 0x5b, 0, 0},
    {"TLOAD", 0x5c, 1, 1},
    {"TSTORE", 0x5d, 2, 0},
    {"MCOPY", 0x5e, 3, 0},
    {"PUSH0", 0x5f, 0, 1},
    {"CREATE", 0xf0, 3, 1},
    {"CALL", 0xf1, 7, 1},
    {"CALLCODE", 0xf2, 7, 1},
    {"RETURN", 0xf3, 2, 0},
    {"DELEGATECALL", 0xf4, 6, 1},
    {"CREATE2", 0xf5, 4, 1},
    {"STATICCALL", 0xfa, 6, 1},
    {"REVERT", 0xfd, 2, 0},
    {"INVALID", 0xfe, 0, 0},
    {"SELFDESTRUCT", 0xff, 1, 0},
};

const std::unordered_map<std::string, OpcodeInfo>& table() {
    static const auto* map = [] {
        auto* m = new std::unordered_map<std::string, OpcodeInfo>;
        for (const auto& e : kTable)
            m->emplace(e.name, OpcodeInfo{e.code, e.name, e.pops, e.pushes});
        for (int n = 1; n <= 32; ++n)
            (*m)["PUSH" + std::to_string(n)] =
                OpcodeInfo{static_cast<uint8_t>(0x5f + n), nullptr, 0, 1};
        for (int n = 1; n <= 16; ++n)
            (*m)["DUP" + std::to_string(n)] = OpcodeInfo{
                static_cast<uint8_t>(0x7f + n), nullptr, static_cast<uint8_t>(n),
                static_cast<uint8_t>(n + 1)};
        for (int n = 1; n <= 16; ++n)
            (*m)["SWAP" + std::to_string(n)] = OpcodeInfo{
                static_cast<uint8_t>(0x8f + n), nullptr, static_cast<uint8_t>(n + 1),
                static_cast<uint8_t>(n + 1)};
        for (int n = 0; n <= 4; ++n)
            (*m)["LOG" + std::to_string(n)] = OpcodeInfo{
                static_cast<uint8_t>(0xa0 + n), nullptr, static_cast<uint8_t>(n + 2), 0};
        return m;
    }();
    return *map;
}

bool suffix_number(const std::string& name, const std::string& prefix, int lo, int hi, int* n) {
    if (name.size() <= prefix.size() || name.compare(0, prefix.size(), prefix) != 0)
        return false;
    int v = 0;
    for (size_t i = prefix.size(); i < name.size(); ++i) {
        char c = name[i];
        if (c < '0' || c > '9') return false;
        v = v * 10 + (c - '0');
    }
    if (v < lo || v > hi) return false;
    if (n) *n = v;
    return true;
}

}  // namespace

std::optional<OpcodeInfo> opcode_by_name(const std::string& name) {
    auto it = table().find(name);
    if (it == table().end()) return std::nullopt;
    return it->second;
}

bool is_call_op(const std::string& name) {
    return call_kind(name).has_value();
}

std::optional<CallOp> call_kind(const std::string& name) {
    if (name == "CALL") return CallOp::kCall;
    if (name == "CALLCODE") return CallOp::kCallCode;
    if (name == "DELEGATECALL") return CallOp::kDelegateCall;
    if (name == "STATICCALL") return CallOp::kStaticCall;
    if (name == "CREATE") return CallOp::kCreate;
    if (name == "CREATE2") return CallOp::kCreate2;
    return std::nullopt;
}

bool is_frame_terminator(const std::string& name) {
    return name == "STOP" || name == "RETURN" || name == "REVERT" ||
           name == "SELFDESTRUCT" || name == "INVALID";
}

bool is_push(const std::string& name, int* n) {
    return suffix_number(name, "PUSH", 0, 32, n);
}

bool is_dup(const std::string& name, int* n) {
    return suffix_number(name, "DUP", 1, 16, n);
}

bool is_swap(const std::string& name, int* n) {
    return suffix_number(name, "SWAP", 1, 16, n);
}

bool is_log(const std::string& name, int* n) {
    return suffix_number(name, "LOG", 0, 4, n);
}

}  // namespace traceguard
