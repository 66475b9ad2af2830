#include "traceguard/taint.hpp"

#include <algorithm>

#include "traceguard/keccak.hpp"
#include "traceguard/opcodes.hpp"

namespace traceguard {

const char* to_string(SourceKind k) {
    switch (k) {
        case SourceKind::kExternalAddress: return "externalAddress";
        case SourceKind::kExecutionContext: return "executionContext";
        case SourceKind::kCallData: return "callData";
        case SourceKind::kReturnData: return "returnData";
        case SourceKind::kBlock: return "block";
        case SourceKind::kStorage: return "storage";
    }
    return "?";
}

const char* to_string(SinkKind k) {
    switch (k) {
        case SinkKind::kEtherTransfer: return "etherTransfer";
        case SinkKind::kEtherTransferFrom: return "etherTransferFrom";
        case SinkKind::kErc20Transfer: return "erc20Transfer";
        case SinkKind::kErc20TransferFrom: return "erc20TransferFrom";
    }
    return "?";
}

namespace {

std::optional<SourceKind> source_kind_of(const std::string& op) {
    if (op == "BALANCE" || op == "EXTCODESIZE" || op == "EXTCODECOPY" || op == "EXTCODEHASH")
        return SourceKind::kExternalAddress;
    if (op == "ORIGIN" || op == "CALLER" || op == "ADDRESS" || op == "CODESIZE" ||
        op == "SELFBALANCE" || op == "PC" || op == "MSIZE" || op == "GAS")
        return SourceKind::kExecutionContext;
    if (op == "CALLVALUE" || op == "CALLDATALOAD" || op == "CALLDATASIZE" || op == "CALLDATACOPY")
        return SourceKind::kCallData;
    if (op == "RETURNDATASIZE" || op == "RETURNDATACOPY")
        return SourceKind::kReturnData;
    if (op == "BLOCKHASH" || op == "COINBASE" || op == "TIMESTAMP" || op == "NUMBER" ||
        op == "DIFFICULTY" || op == "PREVRANDAO" || op == "GASPRICE" || op == "GASLIMIT" ||
        op == "CHAINID")
        return SourceKind::kBlock;
    return std::nullopt;
}

// Ops whose result mixes every operand bit into every result bit.
bool is_full_mix(const std::string& op) {
    return op == "ADD" || op == "MUL" || op == "SUB" || op == "DIV" || op == "SDIV" ||
           op == "MOD" || op == "SMOD" || op == "ADDMOD" || op == "MULMOD" || op == "EXP" ||
           op == "SIGNEXTEND" || op == "LT" || op == "GT" || op == "SLT" || op == "SGT" ||
           op == "EQ" || op == "ISZERO";
}

bool concrete_bit(const Word256& w, unsigned bit) {
    return mp::bit_test(w, bit);
}

const Selector& transfer_selector() {
    static const Selector s = FunctionSig{"transfer", {"address", "uint256"}, {}}.selector();
    return s;
}

const Selector& transfer_from_selector() {
    static const Selector s =
        FunctionSig{"transferFrom", {"address", "address", "uint256"}, {}}.selector();
    return s;
}

}  // namespace

struct TaintEngine::Impl {
    const PreimageDictionary& dict;
    const StorageLayout& layout;
    TaintConfig cfg;

    // Interned label sets. sets[0] is the empty set.
    std::vector<std::vector<uint32_t>> sets{{}};
    std::map<std::vector<uint32_t>, SetId> set_index{{{}, 0}};
    std::unordered_map<uint64_t, SetId> union_memo;

    std::vector<TaintLabel> labels;
    std::vector<SinkHit> hits;

    struct FrameCtx {
        uint32_t frame_id = 0;
        std::vector<WordTaint> stack;
        // Byte offset -> per-bit label sets for that byte.
        std::map<uint64_t, std::array<SetId, 8>> memory;
    };
    std::vector<FrameCtx> frames;
    std::map<Word256, WordTaint> storage;

    Impl(const PreimageDictionary& d, const StorageLayout& l, const TaintConfig& c)
        : dict(d), layout(l), cfg(c) {}

    // --- label-set interning -------------------------------------------------

    SetId intern(std::vector<uint32_t> v) {
        auto it = set_index.find(v);
        if (it != set_index.end()) return it->second;
        SetId id = static_cast<SetId>(sets.size());
        set_index.emplace(v, id);
        sets.push_back(std::move(v));
        return id;
    }

    SetId singleton(uint32_t label) { return intern({label}); }

    SetId set_union(SetId a, SetId b) {
        if (a == b || b == 0) return a;
        if (a == 0) return b;
        if (a > b) std::swap(a, b);
        uint64_t key = (static_cast<uint64_t>(a) << 32) | b;
        auto it = union_memo.find(key);
        if (it != union_memo.end()) return it->second;
        std::vector<uint32_t> merged;
        std::set_union(sets[a].begin(), sets[a].end(), sets[b].begin(), sets[b].end(),
                       std::back_inserter(merged));
        SetId id = intern(std::move(merged));
        union_memo.emplace(key, id);
        return id;
    }

    // --- word/memory taint helpers ------------------------------------------

    static WordTaint empty_word() { return WordTaint{}; }

    static WordTaint uniform_word(SetId s) {
        WordTaint w;
        w.fill(s);
        return w;
    }

    SetId word_union(const WordTaint& w) {
        SetId u = 0;
        for (SetId s : w) u = set_union(u, s);
        return u;
    }

    static bool word_has_taint(const WordTaint& w) {
        for (SetId s : w)
            if (s != 0) return true;
        return false;
    }

    WordTaint overlay(const WordTaint& w, SetId extra) {
        if (extra == 0) return w;
        WordTaint out;
        for (unsigned i = 0; i < 256; ++i) out[i] = set_union(w[i], extra);
        return out;
    }

    SetId memory_bit(const FrameCtx& f, uint64_t byte_off, unsigned bit) const {
        auto it = f.memory.find(byte_off);
        return it == f.memory.end() ? 0 : it->second[bit];
    }

    void set_memory_bit(FrameCtx& f, uint64_t byte_off, unsigned bit, SetId s) {
        auto it = f.memory.find(byte_off);
        if (it == f.memory.end()) {
            if (s == 0) return;
            it = f.memory.emplace(byte_off, std::array<SetId, 8>{}).first;
        }
        it->second[bit] = s;
    }

    SetId memory_range_union(const FrameCtx& f, uint64_t off, uint64_t len) {
        SetId u = 0;
        if (len == 0) return u;
        // Only materialized bytes can carry labels; walk the overlap.
        auto it = f.memory.lower_bound(off);
        for (; it != f.memory.end() && it->first < off + len; ++it)
            for (SetId s : it->second) u = set_union(u, s);
        return u;
    }

    void overwrite_memory_range(FrameCtx& f, uint64_t off, uint64_t len, SetId s) {
        for (uint64_t i = 0; i < len; ++i)
            for (unsigned bit = 0; bit < 8; ++bit) set_memory_bit(f, off + i, bit, s);
    }

    // --- frame plumbing ------------------------------------------------------

    FrameCtx& frame() {
        if (frames.empty()) throw TrackerDesync("no active frame");
        return frames.back();
    }

    std::vector<WordTaint> pop_words(size_t n, const std::string& op) {
        auto& st = frame().stack;
        if (st.size() < n)
            throw TrackerDesync("shadow stack underflow at " + op);
        std::vector<WordTaint> out(st.end() - n, st.end());
        std::reverse(out.begin(), out.end());  // out[0] = top of stack
        st.resize(st.size() - n);
        return out;
    }

    void push_word(WordTaint w) { frame().stack.push_back(std::move(w)); }

    uint32_t mint_label(SourceKind kind, const std::string& op, const InvocationNode& node,
                        size_t trace_index, Word256 source_value,
                        std::optional<SlotResolution> slot = std::nullopt) {
        TaintLabel l;
        l.kind = kind;
        l.source_op = op;
        l.frame_id = node.id;
        l.trace_index = trace_index;
        l.source_value = source_value;
        l.slot = std::move(slot);
        labels.push_back(std::move(l));
        return static_cast<uint32_t>(labels.size() - 1);
    }

    std::vector<uint32_t> labels_of(SetId s) const { return sets[s]; }

    void emit_hit(SinkKind kind, Word256 amount, std::optional<Address> token,
                  const InvocationNode& node, size_t trace_index, SetId label_set) {
        SinkHit h;
        h.kind = kind;
        h.amount = amount;
        h.token = token;
        h.frame_id = node.id;
        h.trace_index = trace_index;
        h.labels = labels_of(label_set);
        hits.push_back(std::move(h));
    }

    // Concrete result value of a pushing source op, read from the entry that
    // follows within the same frame.
    static Word256 pushed_value(const StructLogEntry* next) {
        if (!next || next->stack.empty()) return 0;
        return next->stack.back();
    }

    static Word256 memory_word_value(const StructLogEntry* next, uint64_t off) {
        if (!next) return 0;
        return read_word(next->memory, off);
    }
};

TaintEngine::TaintEngine(const PreimageDictionary& dict, const StorageLayout& layout,
                         const TaintConfig& cfg)
    : impl_(std::make_unique<Impl>(dict, layout, cfg)) {}

TaintEngine::~TaintEngine() = default;

void TaintEngine::enter_frame(const InvocationNode& node) {
    Impl::FrameCtx f;
    f.frame_id = node.id;
    impl_->frames.push_back(std::move(f));
}

void TaintEngine::exit_frame() {
    if (impl_->frames.empty()) throw TrackerDesync("frame exit without entry");
    impl_->frames.pop_back();
}

void TaintEngine::step(const StructLogEntry& e, const StructLogEntry* next_in_frame,
                       const InvocationNode& node) {
    Impl& im = *impl_;
    Impl::FrameCtx& f = im.frame();

    // The shadow stack must mirror the concrete stack entry for entry.
    if (f.stack.size() != e.stack.size())
        throw TrackerDesync("shadow stack depth " + std::to_string(f.stack.size()) +
                            " != concrete depth " + std::to_string(e.stack.size()) + " at " +
                            e.op + " (trace index unknown frame " + std::to_string(f.frame_id) +
                            ")");

    const std::string& op = e.op;
    auto info = opcode_by_name(op);
    if (!info) throw TrackerDesync("unknown opcode " + op);

    // The entry's own index is not part of StructLogEntry; the walker stamps
    // it via set_current_index before each step.
    size_t trace_index = current_index_;

    int n = 0;

    // Stack shuffles first: they carry taint words around unchanged.
    if (is_push(op, &n)) {
        im.push_word(Impl::empty_word());
        return;
    }
    if (is_dup(op, &n)) {
        auto& st = f.stack;
        if (st.size() < static_cast<size_t>(n)) throw TrackerDesync("DUP underflow");
        st.push_back(st[st.size() - n]);
        return;
    }
    if (is_swap(op, &n)) {
        auto& st = f.stack;
        if (st.size() < static_cast<size_t>(n) + 1) throw TrackerDesync("SWAP underflow");
        std::swap(st[st.size() - 1], st[st.size() - 1 - n]);
        return;
    }
    if (is_log(op, &n)) {
        im.pop_words(n + 2, op);
        return;
    }
    if (op == "POP") {
        im.pop_words(1, op);
        return;
    }
    if (op == "JUMPDEST" || op == "STOP" || op == "INVALID") return;
    if (op == "JUMP") {
        im.pop_words(1, op);
        return;
    }
    if (op == "JUMPI") {
        im.pop_words(2, op);
        return;
    }
    if (op == "RETURN" || op == "REVERT") {
        im.pop_words(2, op);
        return;
    }
    if (op == "SELFDESTRUCT") {
        im.pop_words(1, op);
        return;
    }

    // Source table rows that push straight onto the stack.
    if (auto kind = source_kind_of(op)) {
        if (op == "CALLDATACOPY" || op == "RETURNDATACOPY" || op == "EXTCODECOPY") {
            // Copy sources: the written bytes become fresh-source data.
            auto ops = im.pop_words(info->pops, op);
            SetId control = 0;
            for (const auto& w : ops) control = im.set_union(control, im.word_union(w));
            size_t dst_idx = (op == "EXTCODECOPY") ? 1 : 0;
            uint64_t dst = static_cast<uint64_t>(e.stack_top(dst_idx));
            uint64_t len = static_cast<uint64_t>(e.stack_top(op == "EXTCODECOPY" ? 3 : 2));
            Word256 value = Impl::memory_word_value(next_in_frame, dst);
            uint32_t label = im.mint_label(*kind, op, node, trace_index, value);
            SetId written = im.set_union(im.singleton(label), control);
            im.overwrite_memory_range(f, dst, len, written);
            return;
        }
        auto ops = im.pop_words(info->pops, op);
        SetId control = 0;
        for (const auto& w : ops) control = im.set_union(control, im.word_union(w));
        Word256 value = Impl::pushed_value(next_in_frame);
        uint32_t label = im.mint_label(*kind, op, node, trace_index, value);
        SetId set = im.set_union(im.singleton(label), control);
        im.push_word(im.uniform_word(set));
        if (op == "CALLVALUE") {
            // Dual role: the same opcode is the incoming-ether sink.
            im.emit_hit(SinkKind::kEtherTransferFrom, node.call_value, std::nullopt, node,
                        trace_index, im.singleton(label));
        }
        return;
    }

    if (op == "SLOAD") {
        auto ops = im.pop_words(1, op);
        SetId control = im.word_union(ops[0]);
        const Word256& slot = e.stack_top(0);
        auto it = im.storage.find(slot);
        if (it != im.storage.end() && Impl::word_has_taint(it->second)) {
            // R2: a tainted slot hands its per-bit labels to the loaded word.
            im.push_word(im.overlay(it->second, control));
            return;
        }
        // Empty tracker state: the load is a fresh storage source, resolved
        // against the layout when the preimage chain allows.
        SlotResolution res = resolve_slot(slot, im.layout, im.dict);
        uint32_t label = im.mint_label(SourceKind::kStorage, op, node, trace_index,
                                       Impl::pushed_value(next_in_frame), std::move(res));
        im.push_word(im.uniform_word(im.set_union(im.singleton(label), control)));
        return;
    }

    if (op == "SSTORE") {
        auto ops = im.pop_words(2, op);
        im.storage[e.stack_top(0)] = ops[1];  // value word taint overwrites the slot
        return;
    }

    if (op == "MLOAD") {
        auto ops = im.pop_words(1, op);
        SetId control = im.word_union(ops[0]);
        uint64_t off = static_cast<uint64_t>(e.stack_top(0));
        WordTaint out{};
        for (unsigned byte = 0; byte < 32; ++byte)
            for (unsigned bit = 0; bit < 8; ++bit)
                out[(31 - byte) * 8 + bit] = im.memory_bit(f, off + byte, bit);
        im.push_word(im.overlay(out, control));
        return;
    }

    if (op == "MSTORE") {
        auto ops = im.pop_words(2, op);
        SetId control = im.word_union(ops[0]);
        const WordTaint& value = ops[1];
        uint64_t off = static_cast<uint64_t>(e.stack_top(0));
        for (unsigned byte = 0; byte < 32; ++byte)
            for (unsigned bit = 0; bit < 8; ++bit)
                im.set_memory_bit(f, off + byte, bit,
                                  im.set_union(value[(31 - byte) * 8 + bit], control));
        return;
    }

    if (op == "MSTORE8") {
        auto ops = im.pop_words(2, op);
        SetId control = im.word_union(ops[0]);
        const WordTaint& value = ops[1];
        uint64_t off = static_cast<uint64_t>(e.stack_top(0));
        for (unsigned bit = 0; bit < 8; ++bit)
            im.set_memory_bit(f, off, bit, im.set_union(value[bit], control));
        return;
    }

    if (op == "MCOPY") {
        auto ops = im.pop_words(3, op);
        SetId control = 0;
        for (const auto& w : ops) control = im.set_union(control, im.word_union(w));
        uint64_t dst = static_cast<uint64_t>(e.stack_top(0));
        uint64_t src = static_cast<uint64_t>(e.stack_top(1));
        uint64_t len = static_cast<uint64_t>(e.stack_top(2));
        // Read first to keep overlapping copies well-defined.
        std::vector<std::array<SetId, 8>> tmp(len);
        for (uint64_t i = 0; i < len; ++i)
            for (unsigned bit = 0; bit < 8; ++bit) tmp[i][bit] = im.memory_bit(f, src + i, bit);
        for (uint64_t i = 0; i < len; ++i)
            for (unsigned bit = 0; bit < 8; ++bit)
                im.set_memory_bit(f, dst + i, bit, im.set_union(tmp[i][bit], control));
        return;
    }

    if (op == "CODECOPY") {
        // Code is static program text, not a source row: the copy clears the
        // destination (possibly smeared with operand control labels).
        auto ops = im.pop_words(3, op);
        SetId control = 0;
        for (const auto& w : ops) control = im.set_union(control, im.word_union(w));
        uint64_t dst = static_cast<uint64_t>(e.stack_top(0));
        uint64_t len = static_cast<uint64_t>(e.stack_top(2));
        im.overwrite_memory_range(f, dst, len, control);
        return;
    }

    if (op == "SHA3" || op == "KECCAK256") {
        auto ops = im.pop_words(2, op);
        SetId control = im.set_union(im.word_union(ops[0]), im.word_union(ops[1]));
        uint64_t off = static_cast<uint64_t>(e.stack_top(0));
        uint64_t len = static_cast<uint64_t>(e.stack_top(1));
        SetId data = im.memory_range_union(f, off, len);
        im.push_word(im.uniform_word(im.set_union(data, control)));
        return;
    }

    if (is_full_mix(op)) {
        auto ops = im.pop_words(info->pops, op);
        SetId u = 0;
        for (const auto& w : ops) u = im.set_union(u, im.word_union(w));
        im.push_word(im.uniform_word(u));
        return;
    }

    if (op == "NOT") {
        auto ops = im.pop_words(1, op);
        im.push_word(ops[0]);
        return;
    }

    if (op == "AND" || op == "OR") {
        auto ops = im.pop_words(2, op);
        const Word256& ca = e.stack_top(0);
        const Word256& cb = e.stack_top(1);
        // An operand bit can influence the result only when the other side
        // does not force the bit (0 forces under AND, 1 forces under OR) or is
        // itself tainted; forced-out bits drop their labels.
        bool and_op = (op == "AND");
        WordTaint out{};
        for (unsigned i = 0; i < 256; ++i) {
            bool a_bit = concrete_bit(ca, i);
            bool b_bit = concrete_bit(cb, i);
            SetId s = 0;
            bool b_lets_a = (and_op ? b_bit : !b_bit) || ops[1][i] != 0;
            bool a_lets_b = (and_op ? a_bit : !a_bit) || ops[0][i] != 0;
            if (b_lets_a) s = im.set_union(s, ops[0][i]);
            if (a_lets_b) s = im.set_union(s, ops[1][i]);
            out[i] = s;
        }
        im.push_word(out);
        return;
    }

    if (op == "XOR") {
        auto ops = im.pop_words(2, op);
        WordTaint out{};
        for (unsigned i = 0; i < 256; ++i) out[i] = im.set_union(ops[0][i], ops[1][i]);
        im.push_word(out);
        return;
    }

    if (op == "SHL" || op == "SHR" || op == "SAR") {
        auto ops = im.pop_words(2, op);
        SetId control = im.word_union(ops[0]);
        const Word256& shift_w = e.stack_top(0);
        unsigned shift = shift_w > 256 ? 256 : static_cast<unsigned>(shift_w);
        const WordTaint& value = ops[1];
        WordTaint out{};
        if (op == "SHL") {
            for (unsigned i = shift; i < 256; ++i) out[i] = value[i - shift];
        } else if (op == "SHR") {
            for (unsigned i = 0; i + shift < 256; ++i) out[i] = value[i + shift];
        } else {  // SAR: vacated high bits replicate the sign bit
            for (unsigned i = 0; i < 256; ++i)
                out[i] = (i + shift < 256) ? value[i + shift] : value[255];
        }
        im.push_word(im.overlay(out, control));
        return;
    }

    if (op == "BYTE") {
        auto ops = im.pop_words(2, op);
        SetId control = im.word_union(ops[0]);
        const Word256& index_w = e.stack_top(0);
        WordTaint out{};
        if (index_w < 32) {
            unsigned idx = static_cast<unsigned>(index_w);
            for (unsigned bit = 0; bit < 8; ++bit)
                out[bit] = ops[1][(31 - idx) * 8 + bit];
        }
        if (control != 0)
            for (unsigned bit = 0; bit < 8; ++bit) out[bit] = im.set_union(out[bit], control);
        im.push_word(out);
        return;
    }

    if (auto call = call_kind(op)) {
        auto ops = im.pop_words(info->pops, op);
        bool has_value = (*call == CallOp::kCall || *call == CallOp::kCallCode);
        bool is_create = (*call == CallOp::kCreate || *call == CallOp::kCreate2);

        uint64_t args_off = 0, args_len = 0, ret_off = 0, ret_len = 0;
        if (is_create) {
            args_off = static_cast<uint64_t>(e.stack_top(1));
            args_len = static_cast<uint64_t>(e.stack_top(2));
        } else if (has_value) {
            args_off = static_cast<uint64_t>(e.stack_top(3));
            args_len = static_cast<uint64_t>(e.stack_top(4));
            ret_off = static_cast<uint64_t>(e.stack_top(5));
            ret_len = static_cast<uint64_t>(e.stack_top(6));
        } else {
            args_off = static_cast<uint64_t>(e.stack_top(2));
            args_len = static_cast<uint64_t>(e.stack_top(3));
            ret_off = static_cast<uint64_t>(e.stack_top(4));
            ret_len = static_cast<uint64_t>(e.stack_top(5));
        }

        // R4 at buffer granularity: tainted argument memory taints the whole
        // return buffer with the union of the argument labels.
        SetId args_union = im.memory_range_union(f, args_off, args_len);
        if (!is_create) im.overwrite_memory_range(f, ret_off, ret_len, args_union);
        im.push_word(im.uniform_word(args_union));

        // Sinks. Value-bearing CALLs move ether no matter the calldata size.
        if (*call == CallOp::kCall) {
            const Word256& value = e.stack_top(2);
            if (value != 0)
                im.emit_hit(SinkKind::kEtherTransfer, value, std::nullopt, node, trace_index,
                            im.word_union(ops[2]));

            Address callee = word_to_address(e.stack_top(1));
            if (im.cfg.tokens.count(callee) && args_len >= 4) {
                Bytes calldata(args_len, 0);
                for (uint64_t i = 0; i < args_len && args_off + i < e.memory.size(); ++i)
                    calldata[i] = e.memory[args_off + i];
                Selector sel;
                std::copy(calldata.begin(), calldata.begin() + 4, sel.bytes.begin());
                if (sel == transfer_selector() && args_len >= 4 + 64) {
                    Word256 amount = read_word(calldata, 4 + 32);
                    SetId amount_labels = 0;
                    for (uint64_t i = 0; i < 32; ++i)
                        for (unsigned bit = 0; bit < 8; ++bit)
                            amount_labels = im.set_union(
                                amount_labels, im.memory_bit(f, args_off + 4 + 32 + i, bit));
                    im.emit_hit(SinkKind::kErc20Transfer, amount, callee, node, trace_index,
                                amount_labels);
                } else if (sel == transfer_from_selector() && args_len >= 4 + 96) {
                    Address recipient = word_to_address(read_word(calldata, 4 + 32));
                    if (recipient == im.cfg.target) {
                        Word256 amount = read_word(calldata, 4 + 64);
                        SetId amount_labels = 0;
                        for (uint64_t i = 0; i < 32; ++i)
                            for (unsigned bit = 0; bit < 8; ++bit)
                                amount_labels = im.set_union(
                                    amount_labels, im.memory_bit(f, args_off + 4 + 64 + i, bit));
                        im.emit_hit(SinkKind::kErc20TransferFrom, amount, callee, node,
                                    trace_index, amount_labels);
                    }
                }
            }
        }
        return;
    }

    // Anything else that pushes has no transfer function; failing fast beats
    // silently untainting (BASEFEE, TLOAD, BLOBHASH, ...).
    if (info->pushes > 0)
        throw TrackerDesync("no transfer function for pushing opcode " + op);
    im.pop_words(info->pops, op);
}

TaintResult TaintEngine::take_result() {
    TaintResult r;
    r.labels = std::move(impl_->labels);
    r.hits = std::move(impl_->hits);
    impl_->labels.clear();
    impl_->hits.clear();
    return r;
}

size_t TaintEngine::stack_depth() const {
    return impl_->frames.empty() ? 0 : impl_->frames.back().stack.size();
}

std::vector<uint32_t> TaintEngine::stack_word_labels(size_t from_top) const {
    const auto& st = impl_->frames.back().stack;
    const WordTaint& w = st.at(st.size() - 1 - from_top);
    SetId u = 0;
    for (SetId s : w) u = const_cast<Impl&>(*impl_).set_union(u, s);
    return impl_->sets[u];
}

std::vector<uint32_t> TaintEngine::stack_bit_labels(size_t from_top, unsigned bit) const {
    const auto& st = impl_->frames.back().stack;
    const WordTaint& w = st.at(st.size() - 1 - from_top);
    return impl_->sets[w[bit]];
}

std::vector<uint32_t> TaintEngine::storage_word_labels(const Word256& slot) const {
    auto it = impl_->storage.find(slot);
    if (it == impl_->storage.end()) return {};
    SetId u = 0;
    for (SetId s : it->second) u = const_cast<Impl&>(*impl_).set_union(u, s);
    return impl_->sets[u];
}

void collect_preimages(const std::vector<StructLogEntry>& entries, PreimageDictionary* dict) {
    for (const auto& e : entries) {
        if (e.op != "SHA3" && e.op != "KECCAK256") continue;
        if (e.stack.size() < 2) continue;
        const Word256& off = e.stack_top(0);
        const Word256& len = e.stack_top(1);
        if (len != 64) continue;
        if (off > 0xffffffffu) continue;
        size_t o = static_cast<size_t>(off);
        Bytes input(64, 0);
        for (size_t i = 0; i < 64 && o + i < e.memory.size(); ++i) input[i] = e.memory[o + i];
        dict->record_sha3(input);
    }
}

TaintResult run_taint(const TraceSegment& segment, const std::vector<StructLogEntry>& entries,
                      const PreimageDictionary& dict, const StorageLayout& layout,
                      const TaintConfig& cfg) {
    TaintEngine engine(dict, layout, cfg);

    // Target children of a target frame, by spawning call site.
    auto walk = [&](auto&& self, InvocationNode* node) -> void {
        std::map<size_t, InvocationNode*> child_by_site;
        for (const auto& c : node->children)
            if (c->addr == segment.target && c->owns_entries() && c->call_site)
                child_by_site[*c->call_site] = c.get();

        engine.enter_frame(*node);
        for (const IndexRange& range : node->ins) {
            for (size_t i = range.begin; i < range.end; ++i) {
                // Next entry within this same frame, if any.
                const StructLogEntry* next = nullptr;
                if (i + 1 < range.end) {
                    next = &entries[i + 1];
                } else {
                    for (const IndexRange& later : node->ins)
                        if (later.begin > i) {
                            next = &entries[later.begin];
                            break;
                        }
                }
                engine.set_current_index(i);
                engine.step(entries[i], next, *node);
                if (auto it = child_by_site.find(i); it != child_by_site.end())
                    self(self, it->second);
            }
        }
        engine.exit_frame();
    };

    for (InvocationNode* top : segment.frames) {
        // Only walk top-level target frames here; nested target frames are
        // reached through the recursion so that storage-tracker order follows
        // the trace.
        bool nested = false;
        for (InvocationNode* p = top->parent; p; p = p->parent)
            if (p->addr == segment.target) nested = true;
        if (nested) continue;
        if (!top->owns_entries()) continue;
        walk(walk, top);
    }

    return engine.take_result();
}

}  // namespace traceguard
