#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "traceguard/common.hpp"
#include "traceguard/invocation.hpp"
#include "traceguard/slot_resolution.hpp"
#include "traceguard/storage_layout.hpp"
#include "traceguard/taint.hpp"
#include "traceguard/trace.hpp"

namespace traceguard {

// Pseudo-token key used for plain ether in flow observations and the ledger.
Address ether_address();

struct OracleEndpoint {
    Address addr{};
    Selector selector{};
    size_t return_word = 0;  // word offset into the oracle's return data

    bool operator==(const OracleEndpoint&) const = default;
};

struct ExtractionConfig {
    Address target{};
    std::set<Address> tokens;
    std::vector<OracleEndpoint> oracles;
    std::optional<std::string> total_supply_name;
    std::optional<std::string> total_borrow_name;
};

// One external invocation of the target. Delegatecall frames inherit the
// target address but stay inside the caller's message, so only root, CALL and
// STATICCALL frames produce records; reverted attempts are kept (the call
// happened) and filtered per consumer.
struct TargetCallObs {
    uint32_t node_id = 0;
    std::optional<Selector> selector;  // absent for fallback/receive entry
    Address caller{};
    Address origin{};
    uint64_t gas_entry = 0;
    uint64_t gas_exit = 0;
    Word256 call_value = 0;
    bool reverted = false;
    uint32_t nesting = 1;  // 1 = outermost target invocation on its path
};

struct FlowEvent {
    Address token{};  // ether_address() for plain value transfers
    bool inbound = false;
    Word256 amount = 0;
    std::optional<Selector> selector;  // enclosing target invocation, if any
    uint32_t node_id = 0;
};

struct OracleObs {
    size_t oracle_index = 0;  // into ExtractionConfig::oracles
    Word256 price = 0;
    uint32_t node_id = 0;
};

struct MappingStoreObs {
    std::string pattern;  // "balanceOf[*]"
    std::string path;     // "balanceOf[0x1234...]"
    Word256 value = 0;
    size_t trace_index = 0;
};

struct DataflowObs {
    SourceKind kind = SourceKind::kCallData;
    std::string location;  // source descriptor, see dataflow_location()
    Word256 value = 0;     // concrete word observed at the source site
    size_t trace_index = 0;
};

// Source descriptor key: the source row alone for non-storage rows,
// "storage:<pattern>" for resolved slots, "storage:slot:<hex>" otherwise.
std::string dataflow_location(const TaintLabel& label);

struct ObservationSet {
    Hash256 tx_hash{};
    uint64_t block_number = 0;
    uint64_t block_timestamp = 0;
    bool touches_target = false;
    uint32_t max_nesting = 0;  // maximal nesting of target invocations

    std::vector<TargetCallObs> calls;
    std::vector<FlowEvent> flows;
    std::vector<OracleObs> oracle;
    std::map<std::string, Word256> storage_final;  // configured variable name -> post-tx value
    std::vector<MappingStoreObs> mapping_stores;
    std::vector<DataflowObs> dataflow;

    // Filled by run_ledger_pass, not by extract(): balances before this
    // transaction and tokens whose ledger went unreliable at or before it.
    std::map<Address, Word256> pre_balances;
    std::set<Address> unreliable_tokens;
};

// Running target balance per token, reconstructed from flow history. A
// withdrawal exceeding the tracked balance flags the token unreliable (the
// history is incomplete) instead of failing.
class BalanceLedger {
  public:
    Word256 balance(const Address& token) const;
    bool unreliable(const Address& token) const;
    const std::set<Address>& unreliable_tokens() const { return unreliable_; }

    // Applies one transaction's flows: all inbound first, then outbound.
    void apply(const std::vector<FlowEvent>& flows);

  private:
    std::map<Address, Word256> balances_;
    std::set<Address> unreliable_;
};

// Converts one parsed, taint-analyzed transaction into observations. Pure in
// its inputs; ledger-dependent fields are stamped later by run_ledger_pass.
ObservationSet extract(const InvocationTree& tree, const TraceSegment& segment,
                       const std::vector<StructLogEntry>& entries, const TxMetadata& meta,
                       const TaintResult& taint, const PreimageDictionary& dict,
                       const StorageLayout& layout, const ExtractionConfig& cfg);

// Sequential corpus-order pass: stamps each set's pre-transaction balances
// and unreliability flags, then feeds its flows into the ledger.
void run_ledger_pass(std::vector<ObservationSet>& corpus, BalanceLedger* ledger);

struct EnterExitSets {
    std::set<Selector> enter;
    std::set<Selector> exit_set;
};

// Data-driven role classification: a selector is enter when training ever
// shows inbound flow inside its frame, exit when outbound. Per-selector
// overrides accept "enter" | "exit" | "both" | "none".
EnterExitSets classify_enter_exit(const std::vector<ObservationSet>& train,
                                  const std::map<Selector, std::string>& overrides);

// Cache round-trip for parsed observations; identity on every field.
nlohmann::json observation_to_json(const ObservationSet& obs);
ObservationSet observation_from_json(const nlohmann::json& doc);

}  // namespace traceguard
