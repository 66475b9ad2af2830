#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "traceguard/abi.hpp"
#include "traceguard/common.hpp"
#include "traceguard/trace.hpp"

namespace traceguard {

enum class CallKind : uint8_t {
    kRoot,
    kCall,
    kCallCode,
    kDelegateCall,
    kStaticCall,
    kCreate,
    kCreate2,
};

const char* to_string(CallKind k);

// Half-open [begin, end) range of trace entry indices.
struct IndexRange {
    size_t begin = 0;
    size_t end = 0;

    auto operator<=>(const IndexRange&) const = default;
};

// One call frame of the reconstructed invocation tree. `addr` is the address
// whose storage the frame touches: DELEGATECALL and CALLCODE inherit the
// caller frame's addr while `code_addr` names where the bytecode lives, which
// is how proxy patterns surface the implementation.
struct InvocationNode {
    uint32_t id = 0;  // pre-order index, stable within one tree
    Address addr{};
    Address code_addr{};
    Address caller{};
    CallKind kind = CallKind::kRoot;
    Word256 call_value = 0;

    Bytes calldata;                       // raw input, empty for plain transfers
    std::optional<Selector> selector;     // absent when calldata < 4 bytes
    std::optional<DecodedCall> decoded;   // present when the catalog matched
    bool decode_failed = false;           // selector known but arguments did not decode
    Bytes ret_data;

    // Trace index of the parent's call opcode that opened this frame.
    std::optional<size_t> call_site;

    // This frame's own entries, excluding those of descendants. A frame
    // re-acquires a range after each child returns.
    std::vector<IndexRange> ins;
    uint64_t gas_entry = 0;
    uint64_t gas_exit = 0;
    bool reverted = false;

    std::vector<std::unique_ptr<InvocationNode>> children;
    InvocationNode* parent = nullptr;  // non-owning

    // Full extent of the frame including descendants, [first own index,
    // one past the last index owned by this frame or any descendant).
    IndexRange span() const;
    bool owns_entries() const { return !ins.empty(); }
};

struct InvocationTree {
    std::unique_ptr<InvocationNode> root;
    // Pre-order node list for id-indexed lookup; pointers into the tree.
    std::vector<InvocationNode*> nodes;
};

// Rebuilds the call tree from a complete transaction trace. When entries carry
// a depth field it is cross-checked against the derived nesting (jumps of more
// than one frame are MalformedTrace); without depth the nesting is derived
// from call opcodes, pc==0 frame entries, and terminator opcodes alone.
InvocationTree build_invocation_tree(const std::vector<StructLogEntry>& entries,
                                     const TxMetadata& meta,
                                     const AbiCatalog& catalog);

// All frames executing as `target` (addr == target), in pre-order. Nodes point
// into `tree`, which must outlive the result.
struct TraceSegment {
    Address target{};
    std::vector<InvocationNode*> frames;
};

TraceSegment segment_for_target(const InvocationTree& tree, const Address& target);

// Depth of target-frame nesting: 1 when no target frame contains another,
// 2 when a target frame executes inside another target frame, and so on.
// 0 when the segment is empty.
uint32_t max_target_nesting(const TraceSegment& segment);

}  // namespace traceguard
