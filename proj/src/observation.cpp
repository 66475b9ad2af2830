#include "traceguard/observation.hpp"

#include <algorithm>
#include <tuple>

namespace traceguard {
namespace {

// ERC-20 transfer(address,uint256) / transferFrom(address,address,uint256).
const Selector kTransferSel{{0xa9, 0x05, 0x9c, 0xbb}};
const Selector kTransferFromSel{{0x23, 0xb8, 0x72, 0xdd}};

bool effective_reverted(const InvocationNode* n) {
    for (; n != nullptr; n = n->parent)
        if (n->reverted) return true;
    return false;
}

// A frame opens a new message to the target: root entry, CALL or STATICCALL.
// Delegatecall and callcode run foreign code inside the existing message.
bool is_invocation_frame(const InvocationNode& n, const Address& target) {
    if (n.addr != target) return false;
    return n.kind == CallKind::kRoot || n.kind == CallKind::kCall ||
           n.kind == CallKind::kStaticCall;
}

// Selector of the nearest enclosing target invocation, if any.
std::optional<Selector> enclosing_target_selector(const InvocationNode* n,
                                                 const Address& target) {
    for (; n != nullptr; n = n->parent)
        if (is_invocation_frame(*n, target)) return n->selector;
    return std::nullopt;
}

// An ERC-20 call that returns nothing succeeded (pre-standard tokens); one
// that returns a word succeeded iff the word is nonzero.
bool transfer_succeeded(const InvocationNode& n) {
    if (n.ret_data.empty()) return true;
    return read_word(n.ret_data, 0) != 0;
}

Word256 mask_to_width(const Word256& value, size_t byte_offset, size_t byte_width) {
    if (byte_width >= 32 && byte_offset == 0) return value;
    Word256 shifted = value >> (8 * byte_offset);
    if (byte_width >= 32) return shifted;
    Word256 mask = (Word256(1) << (8 * byte_width)) - 1;
    return shifted & mask;
}

void collect_ether_flows(const InvocationTree& tree, const ExtractionConfig& cfg,
                         std::vector<FlowEvent>* out) {
    for (const InvocationNode* n : tree.nodes) {
        if (n->call_value == 0 || effective_reverted(n)) continue;
        bool transfers = n->kind == CallKind::kRoot || n->kind == CallKind::kCall ||
                         n->kind == CallKind::kCreate || n->kind == CallKind::kCreate2;
        if (!transfers) continue;
        const Address& src = n->caller;
        const Address& dst = n->addr;
        if (dst == cfg.target && src != cfg.target &&
            (n->kind == CallKind::kRoot || n->kind == CallKind::kCall)) {
            out->push_back({ether_address(), true, n->call_value, n->selector, n->id});
        }
        if (src == cfg.target && dst != cfg.target) {
            out->push_back({ether_address(), false, n->call_value,
                            enclosing_target_selector(n->parent, cfg.target), n->id});
        }
    }
}

void collect_token_flows(const InvocationTree& tree, const ExtractionConfig& cfg,
                         std::vector<FlowEvent>* out) {
    for (const InvocationNode* n : tree.nodes) {
        if (!cfg.tokens.count(n->addr)) continue;
        if (n->kind != CallKind::kCall && n->kind != CallKind::kRoot) continue;
        if (!n->selector || effective_reverted(n) || !transfer_succeeded(*n)) continue;

        Address from, to;
        Word256 amount;
        if (*n->selector == kTransferSel && n->calldata.size() >= 4 + 64) {
            from = n->caller;
            to = word_to_address(read_word(n->calldata, 4));
            amount = read_word(n->calldata, 4 + 32);
        } else if (*n->selector == kTransferFromSel && n->calldata.size() >= 4 + 96) {
            from = word_to_address(read_word(n->calldata, 4));
            to = word_to_address(read_word(n->calldata, 4 + 32));
            amount = read_word(n->calldata, 4 + 64);
        } else {
            continue;
        }
        auto sel = enclosing_target_selector(n->parent, cfg.target);
        if (to == cfg.target && from != cfg.target)
            out->push_back({n->addr, true, amount, sel, n->id});
        if (from == cfg.target && to != cfg.target)
            out->push_back({n->addr, false, amount, sel, n->id});
    }
}

void collect_oracle_obs(const InvocationTree& tree, const ExtractionConfig& cfg,
                        std::vector<OracleObs>* out) {
    for (const InvocationNode* n : tree.nodes) {
        if (n->kind != CallKind::kCall && n->kind != CallKind::kStaticCall) continue;
        if (!n->selector || n->reverted || effective_reverted(n)) continue;
        for (size_t i = 0; i < cfg.oracles.size(); ++i) {
            const OracleEndpoint& ep = cfg.oracles[i];
            if (n->addr != ep.addr || *n->selector != ep.selector) continue;
            if (n->ret_data.size() < 32 * (ep.return_word + 1)) continue;
            out->push_back({i, read_word(n->ret_data, 32 * ep.return_word), n->id});
        }
    }
}

void collect_storage_obs(const TraceSegment& segment,
                         const std::vector<StructLogEntry>& entries,
                         const PreimageDictionary& dict, const StorageLayout& layout,
                         const ExtractionConfig& cfg, ObservationSet* obs) {
    // Last committed write per slot, plus every committed mapping store.
    std::map<Word256, Word256> final_write;
    std::vector<std::pair<size_t, std::pair<Word256, Word256>>> stores;
    for (const InvocationNode* f : segment.frames) {
        if (effective_reverted(f)) continue;
        for (const IndexRange& r : f->ins) {
            for (size_t i = r.begin; i < r.end; ++i) {
                const StructLogEntry& e = entries[i];
                if (e.op != "SSTORE" || e.stack.size() < 2) continue;
                stores.push_back({i, {e.stack_top(0), e.stack_top(1)}});
            }
        }
    }
    std::sort(stores.begin(), stores.end());
    for (const auto& [idx, kv] : stores) {
        final_write[kv.first] = kv.second;
        SlotResolution res = resolve_slot(kv.first, layout, dict);
        if (!res.resolved || res.keys.empty()) continue;
        Word256 value = kv.second;
        StorageType vt = StorageType::parse(res.value_type);
        value = mask_to_width(value, 0, vt.byte_width());
        obs->mapping_stores.push_back({res.pattern(), res.path(), value, idx});
    }

    auto record_named = [&](const std::optional<std::string>& name) {
        if (!name) return;
        const StorageVariable* var = layout.by_name(*name);
        if (var == nullptr) return;
        auto it = final_write.find(var->slot);
        if (it == final_write.end()) return;
        obs->storage_final[*name] =
            mask_to_width(it->second, var->offset, var->type.byte_width());
    };
    record_named(cfg.total_supply_name);
    record_named(cfg.total_borrow_name);
}

void collect_dataflow_obs(const InvocationTree& tree, const TaintResult& taint,
                          ObservationSet* obs) {
    std::set<uint32_t> reaching;
    for (const SinkHit& h : taint.hits) {
        if (h.frame_id < tree.nodes.size() &&
            effective_reverted(tree.nodes[h.frame_id]))
            continue;
        for (uint32_t id : h.labels) reaching.insert(id);
    }
    for (uint32_t id : reaching) {
        const TaintLabel& lbl = taint.labels[id];
        if (lbl.source_op == "CALLVALUE") continue;  // CVU's territory
        obs->dataflow.push_back(
            {lbl.kind, dataflow_location(lbl), lbl.source_value, lbl.trace_index});
    }
    std::sort(obs->dataflow.begin(), obs->dataflow.end(),
              [](const DataflowObs& a, const DataflowObs& b) {
                  return a.trace_index < b.trace_index;
              });
}

}  // namespace

Address ether_address() {
    Address a;
    a.bytes.fill(0xee);
    return a;
}

std::string dataflow_location(const TaintLabel& label) {
    std::string base = to_string(label.kind);
    if (label.slot) {
        if (label.slot->resolved) return base + ":" + label.slot->pattern();
        return base + ":slot:" + word_to_hex(label.slot->raw_slot);
    }
    return base;
}

Word256 BalanceLedger::balance(const Address& token) const {
    auto it = balances_.find(token);
    return it == balances_.end() ? Word256(0) : it->second;
}

bool BalanceLedger::unreliable(const Address& token) const {
    return unreliable_.count(token) != 0;
}

void BalanceLedger::apply(const std::vector<FlowEvent>& flows) {
    std::map<Address, Word256> in_sum, out_sum;
    for (const FlowEvent& f : flows)
        (f.inbound ? in_sum : out_sum)[f.token] += f.amount;
    for (const auto& [token, amount] : in_sum) balances_[token] += amount;
    for (const auto& [token, amount] : out_sum) {
        Word256& bal = balances_[token];
        if (amount > bal) {
            unreliable_.insert(token);
            bal = 0;
        } else {
            bal -= amount;
        }
    }
}

ObservationSet extract(const InvocationTree& tree, const TraceSegment& segment,
                       const std::vector<StructLogEntry>& entries, const TxMetadata& meta,
                       const TaintResult& taint, const PreimageDictionary& dict,
                       const StorageLayout& layout, const ExtractionConfig& cfg) {
    ObservationSet obs;
    obs.tx_hash = meta.tx_hash;
    obs.block_number = meta.block_number;
    obs.block_timestamp = meta.block_timestamp;
    obs.touches_target = !segment.frames.empty();

    for (const InvocationNode* f : segment.frames) {
        if (!is_invocation_frame(*f, cfg.target)) continue;
        TargetCallObs c;
        c.node_id = f->id;
        c.selector = f->selector;
        c.caller = f->caller;
        c.origin = meta.origin;
        c.gas_entry = f->gas_entry;
        c.gas_exit = f->gas_exit;
        c.call_value = f->call_value;
        c.reverted = f->reverted;
        c.nesting = 1;
        for (const InvocationNode* a = f->parent; a != nullptr; a = a->parent)
            if (is_invocation_frame(*a, cfg.target)) ++c.nesting;
        obs.max_nesting = std::max(obs.max_nesting, c.nesting);
        obs.calls.push_back(c);
    }

    collect_ether_flows(tree, cfg, &obs.flows);
    collect_token_flows(tree, cfg, &obs.flows);
    std::sort(obs.flows.begin(), obs.flows.end(),
              [](const FlowEvent& a, const FlowEvent& b) { return a.node_id < b.node_id; });

    collect_oracle_obs(tree, cfg, &obs.oracle);
    std::sort(obs.oracle.begin(), obs.oracle.end(),
              [](const OracleObs& a, const OracleObs& b) {
                  return std::tie(a.node_id, a.oracle_index) <
                         std::tie(b.node_id, b.oracle_index);
              });

    collect_storage_obs(segment, entries, dict, layout, cfg, &obs);
    collect_dataflow_obs(tree, taint, &obs);
    return obs;
}

void run_ledger_pass(std::vector<ObservationSet>& corpus, BalanceLedger* ledger) {
    for (ObservationSet& obs : corpus) {
        std::set<Address> tokens;
        tokens.insert(ether_address());
        for (const FlowEvent& f : obs.flows) tokens.insert(f.token);
        obs.pre_balances.clear();
        for (const Address& t : tokens) obs.pre_balances[t] = ledger->balance(t);
        ledger->apply(obs.flows);
        obs.unreliable_tokens = ledger->unreliable_tokens();
    }
}

EnterExitSets classify_enter_exit(const std::vector<ObservationSet>& train,
                                  const std::map<Selector, std::string>& overrides) {
    EnterExitSets sets;
    for (const ObservationSet& obs : train) {
        for (const FlowEvent& f : obs.flows) {
            if (!f.selector) continue;
            (f.inbound ? sets.enter : sets.exit_set).insert(*f.selector);
        }
    }
    for (const auto& [sel, mode] : overrides) {
        sets.enter.erase(sel);
        sets.exit_set.erase(sel);
        if (mode == "enter" || mode == "both") sets.enter.insert(sel);
        if (mode == "exit" || mode == "both") sets.exit_set.insert(sel);
    }
    return sets;
}

namespace {

nlohmann::json selector_to_json(const std::optional<Selector>& sel) {
    return sel ? nlohmann::json(to_string(*sel)) : nlohmann::json();
}

std::optional<Selector> selector_from_json(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return parse_selector(j.get<std::string>());
}

SourceKind source_kind_from_string(const std::string& name) {
    for (SourceKind k :
         {SourceKind::kExternalAddress, SourceKind::kExecutionContext, SourceKind::kCallData,
          SourceKind::kReturnData, SourceKind::kBlock, SourceKind::kStorage})
        if (to_string(k) == name) return k;
    throw CorruptCache("unknown taint source \"" + name + "\"");
}

}  // namespace

nlohmann::json observation_to_json(const ObservationSet& obs) {
    nlohmann::json doc;
    doc["txHash"] = to_string(obs.tx_hash);
    doc["blockNumber"] = obs.block_number;
    doc["blockTimestamp"] = obs.block_timestamp;
    doc["touchesTarget"] = obs.touches_target;
    doc["maxNesting"] = obs.max_nesting;
    nlohmann::json calls = nlohmann::json::array();
    for (const TargetCallObs& c : obs.calls) {
        nlohmann::json j;
        j["nodeId"] = c.node_id;
        j["selector"] = selector_to_json(c.selector);
        j["caller"] = to_string(c.caller);
        j["origin"] = to_string(c.origin);
        j["gasEntry"] = c.gas_entry;
        j["gasExit"] = c.gas_exit;
        j["callValue"] = word_to_hex(c.call_value);
        j["reverted"] = c.reverted;
        j["nesting"] = c.nesting;
        calls.push_back(j);
    }
    doc["calls"] = calls;
    nlohmann::json flows = nlohmann::json::array();
    for (const FlowEvent& f : obs.flows) {
        nlohmann::json j;
        j["token"] = to_string(f.token);
        j["inbound"] = f.inbound;
        j["amount"] = word_to_hex(f.amount);
        j["selector"] = selector_to_json(f.selector);
        j["nodeId"] = f.node_id;
        flows.push_back(j);
    }
    doc["flows"] = flows;
    nlohmann::json oracle = nlohmann::json::array();
    for (const OracleObs& o : obs.oracle) {
        nlohmann::json j;
        j["index"] = o.oracle_index;
        j["price"] = word_to_hex(o.price);
        j["nodeId"] = o.node_id;
        oracle.push_back(j);
    }
    doc["oracle"] = oracle;
    nlohmann::json storage = nlohmann::json::object();
    for (const auto& [name, value] : obs.storage_final) storage[name] = word_to_hex(value);
    doc["storageFinal"] = storage;
    nlohmann::json stores = nlohmann::json::array();
    for (const MappingStoreObs& s : obs.mapping_stores) {
        nlohmann::json j;
        j["pattern"] = s.pattern;
        j["path"] = s.path;
        j["value"] = word_to_hex(s.value);
        j["traceIndex"] = s.trace_index;
        stores.push_back(j);
    }
    doc["mappingStores"] = stores;
    nlohmann::json dataflow = nlohmann::json::array();
    for (const DataflowObs& d : obs.dataflow) {
        nlohmann::json j;
        j["kind"] = to_string(d.kind);
        j["location"] = d.location;
        j["value"] = word_to_hex(d.value);
        j["traceIndex"] = d.trace_index;
        dataflow.push_back(j);
    }
    doc["dataflow"] = dataflow;
    nlohmann::json pre = nlohmann::json::object();
    for (const auto& [token, value] : obs.pre_balances) pre[to_string(token)] = word_to_hex(value);
    doc["preBalances"] = pre;
    nlohmann::json unreliable = nlohmann::json::array();
    for (const Address& t : obs.unreliable_tokens) unreliable.push_back(to_string(t));
    doc["unreliableTokens"] = unreliable;
    return doc;
}

ObservationSet observation_from_json(const nlohmann::json& doc) {
    ObservationSet obs;
    try {
        obs.tx_hash = parse_hash(doc.at("txHash").get<std::string>());
        obs.block_number = doc.at("blockNumber").get<uint64_t>();
        obs.block_timestamp = doc.at("blockTimestamp").get<uint64_t>();
        obs.touches_target = doc.at("touchesTarget").get<bool>();
        obs.max_nesting = doc.at("maxNesting").get<uint32_t>();
        for (const nlohmann::json& j : doc.at("calls")) {
            TargetCallObs c;
            c.node_id = j.at("nodeId").get<uint32_t>();
            c.selector = selector_from_json(j.at("selector"));
            c.caller = parse_address(j.at("caller").get<std::string>());
            c.origin = parse_address(j.at("origin").get<std::string>());
            c.gas_entry = j.at("gasEntry").get<uint64_t>();
            c.gas_exit = j.at("gasExit").get<uint64_t>();
            c.call_value = hex_to_word(j.at("callValue").get<std::string>());
            c.reverted = j.at("reverted").get<bool>();
            c.nesting = j.at("nesting").get<uint32_t>();
            obs.calls.push_back(c);
        }
        for (const nlohmann::json& j : doc.at("flows")) {
            FlowEvent f;
            f.token = parse_address(j.at("token").get<std::string>());
            f.inbound = j.at("inbound").get<bool>();
            f.amount = hex_to_word(j.at("amount").get<std::string>());
            f.selector = selector_from_json(j.at("selector"));
            f.node_id = j.at("nodeId").get<uint32_t>();
            obs.flows.push_back(f);
        }
        for (const nlohmann::json& j : doc.at("oracle")) {
            OracleObs o;
            o.oracle_index = j.at("index").get<size_t>();
            o.price = hex_to_word(j.at("price").get<std::string>());
            o.node_id = j.at("nodeId").get<uint32_t>();
            obs.oracle.push_back(o);
        }
        for (const auto& [name, value] : doc.at("storageFinal").items())
            obs.storage_final[name] = hex_to_word(value.get<std::string>());
        for (const nlohmann::json& j : doc.at("mappingStores")) {
            MappingStoreObs s;
            s.pattern = j.at("pattern").get<std::string>();
            s.path = j.at("path").get<std::string>();
            s.value = hex_to_word(j.at("value").get<std::string>());
            s.trace_index = j.at("traceIndex").get<size_t>();
            obs.mapping_stores.push_back(s);
        }
        for (const nlohmann::json& j : doc.at("dataflow")) {
            DataflowObs d;
            d.kind = source_kind_from_string(j.at("kind").get<std::string>());
            d.location = j.at("location").get<std::string>();
            d.value = hex_to_word(j.at("value").get<std::string>());
            d.trace_index = j.at("traceIndex").get<size_t>();
            obs.dataflow.push_back(d);
        }
        for (const auto& [token, value] : doc.at("preBalances").items())
            obs.pre_balances[parse_address(token)] = hex_to_word(value.get<std::string>());
        for (const nlohmann::json& t : doc.at("unreliableTokens"))
            obs.unreliable_tokens.insert(parse_address(t.get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
        throw CorruptCache(std::string("bad cached observation: ") + e.what());
    }
    return obs;
}

}  // namespace traceguard
