#include "traceguard/invocation.hpp"

#include <algorithm>

#include "traceguard/keccak.hpp"
#include "traceguard/opcodes.hpp"

namespace traceguard {

namespace {

Bytes read_memory_slice(const Bytes& memory, const Word256& offset, const Word256& length) {
    // Offsets beyond 2^32 never appear in real traces; clamp instead of
    // allocating absurd buffers.
    if (length == 0) return {};
    if (offset > 0xffffffffu || length > 0xffffffffu)
        throw MalformedTrace("memory slice beyond tracked range");
    size_t off = static_cast<size_t>(offset);
    size_t len = static_cast<size_t>(length);
    Bytes out(len, 0);
    for (size_t i = 0; i < len && off + i < memory.size(); ++i) out[i] = memory[off + i];
    return out;
}

Address create2_address(const Address& sender, const Word256& salt, const Bytes& init_code) {
    Bytes buf;
    buf.push_back(0xff);
    buf.insert(buf.end(), sender.bytes.begin(), sender.bytes.end());
    auto salt_be = word_to_be32(salt);
    buf.insert(buf.end(), salt_be.begin(), salt_be.end());
    Hash256 code_hash = keccak256(init_code);
    buf.insert(buf.end(), code_hash.bytes.begin(), code_hash.bytes.end());
    Hash256 h = keccak256(buf);
    Address a;
    std::copy(h.bytes.begin() + 12, h.bytes.end(), a.bytes.begin());
    return a;
}

CallKind to_call_kind(CallOp op) {
    switch (op) {
        case CallOp::kCall: return CallKind::kCall;
        case CallOp::kCallCode: return CallKind::kCallCode;
        case CallOp::kDelegateCall: return CallKind::kDelegateCall;
        case CallOp::kStaticCall: return CallKind::kStaticCall;
        case CallOp::kCreate: return CallKind::kCreate;
        case CallOp::kCreate2: return CallKind::kCreate2;
    }
    return CallKind::kCall;
}

struct OpenFrame {
    InvocationNode* node = nullptr;
    uint32_t depth = 0;  // derived nesting depth, root = base
};

struct Builder {
    const std::vector<StructLogEntry>& entries;
    const AbiCatalog& catalog;
    std::vector<OpenFrame> open;

    // Set after a call opcode; the next entry decides whether a deeper frame
    // was entered or the call completed without producing trace entries.
    InvocationNode* pending_child = nullptr;
    // Set after a frame closed; the parent's resumption entry carries the
    // success flag (or the created address) on top of its stack.
    InvocationNode* await_flag = nullptr;

    explicit Builder(const std::vector<StructLogEntry>& e, const AbiCatalog& c)
        : entries(e), catalog(c) {}

    InvocationNode* current() { return open.back().node; }

    void decode_node(InvocationNode* node) {
        if (node->kind == CallKind::kCreate || node->kind == CallKind::kCreate2) return;
        if (node->addr.is_precompile()) return;  // raw data, not a function call
        try {
            auto res = decode_function_call(node->calldata, node->code_addr, catalog);
            node->selector = res.selector;
            node->decoded = std::move(res.decoded);
        } catch (const AbiMismatch&) {
            // Keep the raw calldata and the selector; mark the failure.
            if (node->calldata.size() >= 4) {
                Selector sel;
                std::copy(node->calldata.begin(), node->calldata.begin() + 4, sel.bytes.begin());
                node->selector = sel;
            }
            node->decode_failed = true;
        }
    }

    void attribute(size_t i, InvocationNode* node) {
        if (!node->ins.empty() && node->ins.back().end == i) {
            node->ins.back().end = i + 1;
        } else {
            node->ins.push_back({i, i + 1});
        }
        if (node->ins.size() == 1 && node->ins.front().begin == i)
            node->gas_entry = entries[i].gas_left;
    }

    // Out-of-gas close: the frame ended without a terminator opcode.
    void close_abnormal() {
        OpenFrame f = open.back();
        open.pop_back();
        f.node->reverted = true;
        f.node->gas_exit = 0;
        await_flag = f.node;
    }

    void close_normal(const StructLogEntry& e) {
        OpenFrame f = open.back();
        open.pop_back();
        InvocationNode* node = f.node;
        if (e.op == "REVERT" || e.op == "RETURN") {
            node->ret_data = read_memory_slice(e.memory, e.stack_top(0), e.stack_top(1));
        }
        if (e.op == "REVERT") node->reverted = true;
        if (e.op == "INVALID") {
            // Burns all remaining gas.
            node->reverted = true;
            node->gas_exit = 0;
        } else {
            node->gas_exit = e.gas_left;
        }
        await_flag = node;
    }

    // Reads the parent-side outcome from the resumption entry: a zero success
    // flag marks the child reverted; CREATE frames learn their address here.
    void consume_flag(const StructLogEntry& e) {
        InvocationNode* child = await_flag;
        await_flag = nullptr;
        if (!child || child->kind == CallKind::kRoot) return;
        if (e.stack.empty()) return;
        const Word256& flag = e.stack.back();
        if (child->kind == CallKind::kCreate || child->kind == CallKind::kCreate2) {
            if (flag == 0) {
                child->reverted = true;
            } else if (child->addr.is_zero()) {
                child->addr = word_to_address(flag);
                child->code_addr = child->addr;
            }
        } else if (flag == 0) {
            child->reverted = true;
        }
    }

    InvocationNode* spawn_child(const StructLogEntry& e, size_t index, CallOp op) {
        InvocationNode* parent = current();
        auto child = std::make_unique<InvocationNode>();
        child->kind = to_call_kind(op);
        child->parent = parent;
        child->call_site = index;
        switch (op) {
            case CallOp::kCall: {
                Address target = word_to_address(e.stack_top(1));
                child->addr = target;
                child->code_addr = target;
                child->caller = parent->addr;
                child->call_value = e.stack_top(2);
                child->calldata = read_memory_slice(e.memory, e.stack_top(3), e.stack_top(4));
                break;
            }
            case CallOp::kCallCode: {
                Address target = word_to_address(e.stack_top(1));
                child->addr = parent->addr;  // runs against the caller's storage
                child->code_addr = target;
                child->caller = parent->addr;
                child->call_value = e.stack_top(2);
                child->calldata = read_memory_slice(e.memory, e.stack_top(3), e.stack_top(4));
                break;
            }
            case CallOp::kDelegateCall: {
                Address target = word_to_address(e.stack_top(1));
                child->addr = parent->addr;       // proxy pattern: storage stays home
                child->code_addr = target;
                child->caller = parent->caller;   // msg.sender passes through
                child->call_value = parent->call_value;
                child->calldata = read_memory_slice(e.memory, e.stack_top(2), e.stack_top(3));
                break;
            }
            case CallOp::kStaticCall: {
                Address target = word_to_address(e.stack_top(1));
                child->addr = target;
                child->code_addr = target;
                child->caller = parent->addr;
                child->call_value = 0;
                child->calldata = read_memory_slice(e.memory, e.stack_top(2), e.stack_top(3));
                break;
            }
            case CallOp::kCreate: {
                // The created address needs the account nonce, which traces
                // do not carry; the resumption entry supplies it instead.
                child->caller = parent->addr;
                child->call_value = e.stack_top(0);
                child->calldata = read_memory_slice(e.memory, e.stack_top(1), e.stack_top(2));
                break;
            }
            case CallOp::kCreate2: {
                Bytes init = read_memory_slice(e.memory, e.stack_top(1), e.stack_top(2));
                child->addr = create2_address(parent->addr, e.stack_top(3), init);
                child->code_addr = child->addr;
                child->caller = parent->addr;
                child->call_value = e.stack_top(0);
                child->calldata = std::move(init);
                break;
            }
        }
        decode_node(child.get());
        InvocationNode* raw = child.get();
        parent->children.push_back(std::move(child));
        return raw;
    }
};

void index_preorder(InvocationNode* node, std::vector<InvocationNode*>* out) {
    node->id = static_cast<uint32_t>(out->size());
    out->push_back(node);
    for (auto& c : node->children) index_preorder(c.get(), out);
}

}  // namespace

const char* to_string(CallKind k) {
    switch (k) {
        case CallKind::kRoot: return "root";
        case CallKind::kCall: return "call";
        case CallKind::kCallCode: return "callcode";
        case CallKind::kDelegateCall: return "delegatecall";
        case CallKind::kStaticCall: return "staticcall";
        case CallKind::kCreate: return "create";
        case CallKind::kCreate2: return "create2";
    }
    return "?";
}

IndexRange InvocationNode::span() const {
    IndexRange r{0, 0};
    bool any = false;
    if (!ins.empty()) {
        r = {ins.front().begin, ins.back().end};
        any = true;
    }
    for (const auto& c : children) {
        if (!c->owns_entries() && c->children.empty()) continue;
        IndexRange cs = c->span();
        if (cs.begin == cs.end) continue;
        if (!any) {
            r = cs;
            any = true;
        } else {
            r.begin = std::min(r.begin, cs.begin);
            r.end = std::max(r.end, cs.end);
        }
    }
    return r;
}

InvocationTree build_invocation_tree(const std::vector<StructLogEntry>& entries,
                                     const TxMetadata& meta, const AbiCatalog& catalog) {
    InvocationTree tree;
    tree.root = std::make_unique<InvocationNode>();
    InvocationNode* root = tree.root.get();
    root->kind = CallKind::kRoot;
    root->caller = meta.origin;
    root->call_value = meta.call_value;
    root->calldata = meta.input;
    if (meta.to) {
        root->addr = *meta.to;
        root->code_addr = *meta.to;
    }

    Builder b(entries, catalog);
    b.decode_node(root);

    if (!entries.empty()) {
        uint32_t base_depth = entries[0].depth.value_or(1);
        b.open.push_back({root, base_depth});
        bool root_closed = false;

        for (size_t i = 0; i < entries.size(); ++i) {
            const StructLogEntry& e = entries[i];
            if (root_closed)
                throw MalformedTrace("entry " + std::to_string(i) + " after root frame closed");

            // Resolve the frame this entry belongs to.
            if (b.pending_child) {
                InvocationNode* child = b.pending_child;
                b.pending_child = nullptr;
                bool entered;
                if (e.depth) {
                    uint32_t d = *e.depth;
                    if (d > b.open.back().depth + 1)
                        throw MalformedTrace("entry " + std::to_string(i) +
                                             ": depth jumped past the called frame");
                    entered = (d == b.open.back().depth + 1);
                } else {
                    entered = (e.pc == 0);
                }
                if (entered) {
                    b.open.push_back({child, b.open.back().depth + 1});
                } else {
                    // The call produced no deeper entries (precompile, code-less
                    // account, or immediate failure); the flag on this entry's
                    // stack is the only outcome record.
                    b.await_flag = child;
                }
            }
            if (e.depth) {
                if (*e.depth > b.open.back().depth)
                    throw MalformedTrace("entry " + std::to_string(i) +
                                         ": deeper frame without a call opcode");
                while (*e.depth < b.open.back().depth) {
                    // Frame(s) died without a terminator: out-of-gas unwinding.
                    b.close_abnormal();
                    if (b.open.empty())
                        throw MalformedTrace("entry " + std::to_string(i) + ": depth below root");
                }
            }
            if (b.await_flag) b.consume_flag(e);

            InvocationNode* frame = b.current();
            b.attribute(i, frame);

            if (auto call = call_kind(e.op)) {
                b.pending_child = b.spawn_child(e, i, *call);
            } else if (is_frame_terminator(e.op)) {
                b.close_normal(e);
                if (b.open.empty()) root_closed = true;
            }
        }

        if (!b.open.empty()) {
            // Trace ended with frames still open. With depth records this is
            // the out-of-gas shape; without them it is indistinguishable from
            // a truncated trace.
            bool has_depth = entries[0].depth.has_value();
            if (!has_depth)
                throw MalformedTrace("trace ended with " + std::to_string(b.open.size()) +
                                     " unclosed frame(s)");
            while (!b.open.empty()) b.close_abnormal();
        }
    }

    index_preorder(root, &tree.nodes);
    return tree;
}

TraceSegment segment_for_target(const InvocationTree& tree, const Address& target) {
    TraceSegment seg;
    seg.target = target;
    for (InvocationNode* n : tree.nodes)
        if (n->addr == target) seg.frames.push_back(n);
    return seg;
}

uint32_t max_target_nesting(const TraceSegment& segment) {
    uint32_t best = 0;
    for (InvocationNode* n : segment.frames) {
        uint32_t count = 0;
        for (InvocationNode* p = n; p; p = p->parent)
            if (p->addr == segment.target) ++count;
        best = std::max(best, count);
    }
    return best;
}

}  // namespace traceguard
