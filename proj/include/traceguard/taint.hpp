#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "traceguard/common.hpp"
#include "traceguard/invocation.hpp"
#include "traceguard/slot_resolution.hpp"
#include "traceguard/storage_layout.hpp"
#include "traceguard/trace.hpp"

namespace traceguard {

// Rows of the source table. Every label names exactly one row, and the
// opcode that minted it belongs to that row.
enum class SourceKind : uint8_t {
    kExternalAddress,  // balance, extcodesize, extcodecopy, extcodehash
    kExecutionContext, // origin, caller, address, codesize, selfbalance, pc, msize, gas
    kCallData,         // callvalue, calldataload, calldatasize, calldatacopy
    kReturnData,       // returndatasize, returndatacopy
    kBlock,            // blockhash, coinbase, timestamp, number, prevrandao, gasprice, gaslimit, chainid
    kStorage,          // sload of a slot with empty tracker state
};

const char* to_string(SourceKind k);

enum class SinkKind : uint8_t {
    kEtherTransfer,      // CALL with a nonzero value operand
    kEtherTransferFrom,  // CALLVALUE observed in a target frame
    kErc20Transfer,      // token.transfer(address,uint256)
    kErc20TransferFrom,  // token.transferFrom(from, target, uint256)
};

const char* to_string(SinkKind k);

// One minted taint label: which source row, which opcode, where in the trace,
// the storage resolution when the source was an SLOAD, and the concrete value
// the source produced (read from the following in-frame entry).
struct TaintLabel {
    SourceKind kind = SourceKind::kCallData;
    std::string source_op;
    uint32_t frame_id = 0;
    size_t trace_index = 0;
    std::optional<SlotResolution> slot;
    Word256 source_value = 0;
};

struct SinkHit {
    SinkKind kind = SinkKind::kEtherTransfer;
    Word256 amount = 0;
    std::optional<Address> token;  // ERC-20 sinks only
    uint32_t frame_id = 0;
    size_t trace_index = 0;
    std::vector<uint32_t> labels;  // sorted indices into TaintResult::labels
};

struct TaintResult {
    std::vector<TaintLabel> labels;
    std::vector<SinkHit> hits;
};

struct TaintConfig {
    Address target{};
    std::set<Address> tokens;
};

// Bit-level shadow state. Label sets are interned: a SetId names a sorted
// label-id vector in the engine's table, id 0 being the empty set, so word
// copies are cheap and unions memoize.
using SetId = uint32_t;
using WordTaint = std::array<SetId, 256>;  // bit 0 = least significant

class TaintEngine {
  public:
    TaintEngine(const PreimageDictionary& dict, const StorageLayout& layout,
                const TaintConfig& cfg);
    ~TaintEngine();

    // Frame lifecycle: each target frame gets fresh stack and memory trackers;
    // the storage tracker is shared across frames, as every segment frame
    // writes the same account's storage.
    void enter_frame(const InvocationNode& node);
    void exit_frame();

    // Applies one entry's transfer function. `next_in_frame` supplies the
    // concrete result for source-value capture; pass nullptr when the frame
    // has no further entries. Raises TrackerDesync when the shadow stack and
    // the entry's concrete stack disagree, or when an unmodeled opcode would
    // push a result.
    void step(const StructLogEntry& entry, const StructLogEntry* next_in_frame,
              const InvocationNode& node);

    // Trace position of the entry about to be stepped; stamped into minted
    // labels and sink hits.
    void set_current_index(size_t index) { current_index_ = index; }

    TaintResult take_result();

    // Introspection for tests.
    size_t stack_depth() const;
    std::vector<uint32_t> stack_word_labels(size_t from_top) const;   // union over bits
    std::vector<uint32_t> stack_bit_labels(size_t from_top, unsigned bit) const;
    std::vector<uint32_t> storage_word_labels(const Word256& slot) const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    size_t current_index_ = 0;
};

// Walks every target frame of the segment through the engine in trace order
// and collects the sink hits. `entries` must be the full trace the segment's
// tree was built from; `dict` should have been filled from all frames
// beforehand.
TaintResult run_taint(const TraceSegment& segment, const std::vector<StructLogEntry>& entries,
                      const PreimageDictionary& dict, const StorageLayout& layout,
                      const TaintConfig& cfg);

// Records every in-trace SHA3/KECCAK256 over exactly 64 bytes, from all
// frames, into the dictionary.
void collect_preimages(const std::vector<StructLogEntry>& entries, PreimageDictionary* dict);

}  // namespace traceguard
