#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace traceguard {

// Stack arity and classification for every opcode a trace may contain.
// `pops`/`pushes` describe the concrete stack effect; the taint engine relies
// on them to keep its shadow stack in lockstep.
struct OpcodeInfo {
    uint8_t code = 0;
    const char* name = nullptr;
    uint8_t pops = 0;
    uint8_t pushes = 0;
};

enum class CallOp : uint8_t { kCall, kCallCode, kDelegateCall, kStaticCall, kCreate, kCreate2 };

// Lookup by trace mnemonic. Accepts both legacy and renamed spellings
// (SHA3/KECCAK256, DIFFICULTY/PREVRANDAO). Returns nullopt for unknown names.
std::optional<OpcodeInfo> opcode_by_name(const std::string& name);

// Mnemonic classification helpers; all take the canonical info returned by
// opcode_by_name.
bool is_call_op(const std::string& name);
std::optional<CallOp> call_kind(const std::string& name);
// STOP / RETURN / REVERT / SELFDESTRUCT / INVALID.
bool is_frame_terminator(const std::string& name);
bool is_push(const std::string& name, int* n = nullptr);
bool is_dup(const std::string& name, int* n = nullptr);
bool is_swap(const std::string& name, int* n = nullptr);
bool is_log(const std::string& name, int* n = nullptr);

}  // namespace traceguard
