#include "tracegen.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>

#include "traceguard/abi.hpp"
#include "traceguard/keccak.hpp"
#include "traceguard/opcodes.hpp"

namespace traceguard::testgen {
namespace {

Word256 word_of_hash(const Hash256& h) {
    return be_bytes_to_word(h.bytes.data(), h.bytes.size());
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << text;
}

}  // namespace

// --- serialization ----------------------------------------------------------

nlohmann::json entry_to_json(const StructLogEntry& e) {
    nlohmann::json j;
    j["pc"] = e.pc;
    j["op"] = e.op;
    j["gas"] = e.gas_left;
    j["gasCost"] = e.gas_cost;
    nlohmann::json stack = nlohmann::json::array();
    for (const Word256& w : e.stack) stack.push_back(word_to_hex(w));
    j["stack"] = std::move(stack);
    j["memory"] = bytes_to_hex(e.memory);
    if (e.depth) j["depth"] = *e.depth;
    return j;
}

nlohmann::json struct_logs_json(const std::vector<StructLogEntry>& entries) {
    nlohmann::json logs = nlohmann::json::array();
    for (const StructLogEntry& e : entries) logs.push_back(entry_to_json(e));
    nlohmann::json doc;
    doc["structLogs"] = std::move(logs);
    return doc;
}

std::string struct_logs_text(const std::vector<StructLogEntry>& entries) {
    return struct_logs_json(entries).dump();
}

Address addr_of(uint8_t fill) {
    Address a;
    a.bytes.fill(fill);
    return a;
}

// --- random invocation trees ------------------------------------------------

namespace {

// Emits entries for one fabricated frame tree. Gas numbers are invented but
// self-consistent: every call opcode costs 100 plus the child's consumption,
// so the nesting inequality holds by construction.
class TreeEmitter {
  public:
    TreeEmitter(std::mt19937_64& rng, bool with_depth) : rng_(rng), with_depth_(with_depth) {}

    std::vector<StructLogEntry> run(const GenFrame& root, uint64_t budget) {
        emit_frame(root, 1, budget);
        return std::move(out_);
    }
    size_t frames() const { return frames_; }

  private:
    uint64_t rnd(uint64_t lo, uint64_t hi) { return lo + rng_() % (hi - lo + 1); }

    Word256 random_address_word() {
        // High byte forced nonzero: never a precompile, never empty.
        Word256 w = Word256(0x42) << 152;
        w |= Word256(rng_()) << 64;
        w |= Word256(rng_());
        return w;
    }

    // Returns the gas the frame consumed from its caller's point of view.
    uint64_t emit_frame(const GenFrame& f, uint32_t depth, uint64_t budget) {
        ++frames_;
        uint64_t pc = 0;
        uint64_t gas = budget;
        auto emit = [&](const std::string& op, uint64_t cost, std::vector<Word256> stack,
                        Bytes memory) -> size_t {
            StructLogEntry e;
            e.pc = pc++;
            e.op = op;
            e.gas_left = gas;
            e.gas_cost = cost;
            e.stack = std::move(stack);
            e.memory = std::move(memory);
            if (with_depth_) e.depth = depth;
            out_.push_back(std::move(e));
            gas -= cost;
            return out_.size() - 1;
        };

        emit("JUMPDEST", rnd(1, 8), {}, {});  // pc 0 marks the frame entry

        for (const GenFrame& child : f.children) {
            for (uint64_t i = rnd(0, 2); i > 0; --i) emit("JUMPDEST", rnd(1, 8), {}, {});

            const std::string& op = child.call_op;
            bool is_create = op == "CREATE" || op == "CREATE2";

            Bytes call_mem(96);
            for (size_t i = 0; i < call_mem.size(); ++i)
                call_mem[i] = static_cast<uint8_t>(i * 11 + depth);
            Word256 args_off = 4 * (rng_() % 3);
            Word256 args_len = (rng_() % 3 == 0) ? 0 : 4 + 32 * (rng_() % 2);
            Word256 addr_w =
                (!is_create && rng_() % 20 == 0) ? Word256(4) : random_address_word();
            Word256 value_w = (rng_() % 2) ? Word256(rng_() % 1'000'000) : Word256(0);

            std::vector<Word256> call_stack;
            if (op == "CALL" || op == "CALLCODE")
                call_stack = {0, 0, args_len, args_off, value_w, addr_w, Word256(0xffff)};
            else if (op == "DELEGATECALL" || op == "STATICCALL")
                call_stack = {0, 0, args_len, args_off, addr_w, Word256(0xffff)};
            else if (op == "CREATE")
                call_stack = {args_len, args_off, value_w};
            else  // CREATE2
                call_stack = {Word256(rng_()), args_len, args_off, value_w};

            size_t call_idx = emit(op, 0, call_stack, call_mem);

            uint64_t u = 0;
            if (child.empty_child) {
                ++frames_;
            } else {
                uint64_t child_budget;
                if (child.out_of_gas)
                    child_budget = 37;
                else if (child.invalid)
                    child_budget = (gas > 500) ? (gas - 300) / 4 : 50;
                else
                    child_budget = (gas > 700) ? (gas - 300) / 2 : 100;
                uint64_t used = emit_frame(child, depth + 1, child_budget);
                // Abnormal exits zero the recorded exit gas, so the whole
                // budget counts as consumed.
                u = (child.out_of_gas || child.invalid) ? child_budget : used;
            }
            out_[call_idx].gas_cost = 100 + u;
            gas -= 100 + u;

            bool failed = child.revert || child.invalid || child.out_of_gas;
            Word256 flag = 0;
            if (!failed) flag = (op == "CREATE") ? random_address_word() : Word256(1);
            emit("POP", 2, {flag}, {});
        }

        for (uint64_t i = rnd(0, 2); i > 0; --i) emit("JUMPDEST", rnd(1, 8), {}, {});

        if (f.out_of_gas) return budget;  // no terminator: the frame vanishes
        if (f.invalid) {
            emit("INVALID", 0, {}, {});
            return budget;
        }
        uint64_t consumed = budget - gas;
        if (f.revert) {
            Bytes mem(32, 0xee);
            emit("REVERT", 0, {32, 0}, mem);
            return consumed;
        }
        if (rng_() % 2) {
            Bytes mem(32);
            for (size_t i = 0; i < mem.size(); ++i) mem[i] = static_cast<uint8_t>(0xd0 + i);
            emit("RETURN", 0, {32, 0}, mem);
        } else {
            emit("STOP", 0, {}, {});
        }
        return consumed;
    }

    std::mt19937_64& rng_;
    bool with_depth_;
    std::vector<StructLogEntry> out_;
    size_t frames_ = 0;
};

void fill_children(std::mt19937_64& rng, bool with_depth, GenFrame* f, int depth,
                   size_t* frames_left) {
    if (depth >= 4) return;
    static const char* kinds[] = {"CALL",     "CALL",       "CALL",   "DELEGATECALL",
                                  "STATICCALL", "STATICCALL", "CALLCODE", "CREATE",
                                  "CREATE2"};
    size_t want = rng() % 4;
    for (size_t i = 0; i < want; ++i) {
        if (*frames_left == 0) return;
        --*frames_left;
        GenFrame c;
        c.call_op = kinds[rng() % (sizeof(kinds) / sizeof(kinds[0]))];
        uint64_t roll = rng() % 100;
        if (roll < 15) {
            c.empty_child = true;
        } else if (roll < 30) {
            c.revert = true;
        } else if (with_depth && roll < 40) {
            c.out_of_gas = true;  // vanishing frames need depth records to close
        } else if (roll < 44) {
            c.invalid = true;
        }
        if (!c.empty_child && !c.out_of_gas)
            fill_children(rng, with_depth, &c, depth + 1, frames_left);
        f->children.push_back(std::move(c));
    }
}

}  // namespace

GenFrame random_frame_shape(std::mt19937_64& rng, bool with_depth, size_t max_frames) {
    GenFrame root;
    size_t left = max_frames - 1;
    fill_children(rng, with_depth, &root, 1, &left);
    return root;
}

GeneratedTree emit_tree(const GenFrame& root, bool with_depth, std::mt19937_64& rng) {
    GeneratedTree t;
    const uint64_t budget = 10'000'000;
    TreeEmitter emitter(rng, with_depth);
    t.entries = emitter.run(root, budget);
    t.frame_count = emitter.frames();
    t.meta.tx_hash = keccak256("tree-" + std::to_string(rng()));
    t.meta.block_number = 15'000'000 + rng() % 1000;
    t.meta.block_timestamp = 1'650'000'000 + rng() % 100000;
    t.meta.origin = addr_of(0xa1);
    t.meta.to = addr_of(0xb2);
    t.meta.call_value = Word256(rng() % 1000);
    t.meta.gas_provided = budget + 21'000;
    t.meta.input = Bytes{0xde, 0xad, 0xbe, 0xef};
    return t;
}

GeneratedTree random_invocation_trace(uint64_t seed, bool with_depth) {
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 0x1234);
    GenFrame root = random_frame_shape(rng, with_depth, 50);
    return emit_tree(root, with_depth, rng);
}

// --- concrete straight-line machine ----------------------------------------

TraceBuilder::TraceBuilder(World* world, const TxEnv& env)
    : world_(world), with_depth_(env.with_depth), env_(env) {
    frame_.self = env.self;
    frame_.caller = env.caller;
    frame_.origin = env.origin;
    frame_.call_value = env.call_value;
    frame_.calldata = env.calldata;
    frame_.gas = env.gas;
    frame_.depth = 1;
}

TxMetadata TraceBuilder::metadata() const {
    TxMetadata m;
    m.block_number = env_.block_number;
    m.block_timestamp = env_.block_timestamp;
    m.origin = env_.origin;
    m.to = env_.self;
    m.call_value = env_.call_value;
    m.gas_provided = env_.gas + 21'000;
    m.input = env_.calldata;
    return m;
}

void TraceBuilder::emit(const std::string& name, uint64_t cost) {
    StructLogEntry e;
    e.pc = frame_.pc++;
    e.op = name;
    e.gas_left = frame_.gas;
    e.gas_cost = cost;
    e.stack = frame_.st;
    e.memory = frame_.mem;
    if (with_depth_) e.depth = frame_.depth;
    entries_.push_back(std::move(e));
    frame_.gas -= cost;
}

void TraceBuilder::ensure_mem(uint64_t end) {
    if (end == 0) return;
    uint64_t size = (end + 31) / 32 * 32;
    if (frame_.mem.size() < size) frame_.mem.resize(size, 0);
}

Word256 TraceBuilder::pop_value() {
    Word256 w = frame_.st.back();
    frame_.st.pop_back();
    return w;
}

void TraceBuilder::push_value(const Word256& w) { frame_.st.push_back(w); }

void TraceBuilder::push(const Word256& value) {
    emit("PUSH32", 3);
    push_value(value);
}

void TraceBuilder::push1(uint64_t value) {
    emit("PUSH1", 3);
    push_value(Word256(value));
}

void TraceBuilder::dup(unsigned n) {
    emit("DUP" + std::to_string(n), 3);
    push_value(frame_.st[frame_.st.size() - n]);
}

void TraceBuilder::swap(unsigned n) {
    emit("SWAP" + std::to_string(n), 3);
    std::swap(frame_.st[frame_.st.size() - 1], frame_.st[frame_.st.size() - 1 - n]);
}

void TraceBuilder::burn(uint64_t gas_cost) { emit("JUMPDEST", gas_cost); }

namespace {

const Word256 kAllOnes = Word256(0) - 1;

uint64_t to_offset(const Word256& w) {
    // Builder programs keep offsets tiny; clamp garbage defensively.
    return w > 0x100000 ? 0x100000 : static_cast<uint64_t>(w);
}

Word256 shr_word(const Word256& value, const Word256& shift) {
    if (shift >= 256) return 0;
    return value >> static_cast<unsigned>(shift);
}

Word256 shl_word(const Word256& value, const Word256& shift) {
    if (shift >= 256) return 0;
    return value << static_cast<unsigned>(shift);
}

Word256 sar_word(const Word256& value, const Word256& shift) {
    bool neg = mp::bit_test(value, 255);
    if (shift >= 256) return neg ? kAllOnes : Word256(0);
    unsigned s = static_cast<unsigned>(shift);
    Word256 r = value >> s;
    if (neg && s > 0) r |= kAllOnes << (256 - s);
    return r;
}

Word256 byte_word(const Word256& index, const Word256& value) {
    if (index >= 32) return 0;
    unsigned idx = static_cast<unsigned>(index);
    return (value >> (8 * (31 - idx))) & 0xff;
}

}  // namespace

void TraceBuilder::op(const std::string& name) {
    const uint64_t kCost = 3;

    if (name == "STOP") {
        emit(name, 0);
        return;
    }
    if (name == "RETURN" || name == "REVERT") {
        emit(name, 0);
        uint64_t off = to_offset(pop_value());
        uint64_t len = to_offset(pop_value());
        ensure_mem(off + len);
        return;
    }
    if (name == "POP") {
        emit(name, kCost);
        pop_value();
        return;
    }
    if (name == "JUMPDEST") {
        emit(name, 1);
        return;
    }
    if (name == "LOG0" || name == "LOG1") {
        emit(name, kCost);
        size_t pops = name == "LOG0" ? 2 : 3;
        for (size_t i = 0; i < pops; ++i) pop_value();
        return;
    }

    // Environment pushes.
    if (name == "CALLER") {
        emit(name, kCost);
        push_value(address_to_word(frame_.caller));
        return;
    }
    if (name == "ORIGIN") {
        emit(name, kCost);
        push_value(address_to_word(frame_.origin));
        return;
    }
    if (name == "ADDRESS") {
        emit(name, kCost);
        push_value(address_to_word(frame_.self));
        return;
    }
    if (name == "CALLVALUE") {
        emit(name, kCost);
        push_value(frame_.call_value);
        return;
    }
    if (name == "CALLDATASIZE") {
        emit(name, kCost);
        push_value(Word256(frame_.calldata.size()));
        return;
    }
    if (name == "TIMESTAMP") {
        emit(name, kCost);
        push_value(Word256(env_.block_timestamp));
        return;
    }
    if (name == "NUMBER") {
        emit(name, kCost);
        push_value(Word256(env_.block_number));
        return;
    }
    if (name == "GAS") {
        emit(name, kCost);
        push_value(Word256(frame_.gas));
        return;
    }
    if (name == "CALLDATALOAD") {
        emit(name, kCost);
        uint64_t off = to_offset(pop_value());
        push_value(read_word(frame_.calldata, static_cast<size_t>(off)));
        return;
    }
    if (name == "BALANCE") {
        emit(name, kCost);
        Address a = word_to_address(pop_value());
        push_value(Word256(0x1000000) + a.bytes[19]);
        return;
    }

    // ALU.
    if (name == "ISZERO") {
        emit(name, kCost);
        Word256 a = pop_value();
        push_value(a == 0 ? 1 : 0);
        return;
    }
    if (name == "NOT") {
        emit(name, kCost);
        Word256 a = pop_value();
        push_value(a ^ kAllOnes);
        return;
    }
    static const std::set<std::string> kBinary = {"ADD", "MUL", "SUB", "DIV", "MOD",
                                                 "LT",  "GT",  "EQ",  "AND", "OR",
                                                 "XOR", "SHL", "SHR", "SAR", "BYTE"};
    if (kBinary.count(name)) {
        emit(name, kCost);
        Word256 a = pop_value();  // top
        Word256 b = pop_value();
        Word256 r;
        if (name == "ADD") r = a + b;
        else if (name == "MUL") r = a * b;
        else if (name == "SUB") r = a - b;
        else if (name == "DIV") r = b == 0 ? Word256(0) : a / b;
        else if (name == "MOD") r = b == 0 ? Word256(0) : a % b;
        else if (name == "LT") r = a < b ? 1 : 0;
        else if (name == "GT") r = a > b ? 1 : 0;
        else if (name == "EQ") r = a == b ? 1 : 0;
        else if (name == "AND") r = a & b;
        else if (name == "OR") r = a | b;
        else if (name == "XOR") r = a ^ b;
        else if (name == "SHL") r = shl_word(b, a);
        else if (name == "SHR") r = shr_word(b, a);
        else if (name == "SAR") r = sar_word(b, a);
        else r = byte_word(a, b);
        push_value(r);
        return;
    }

    // Memory.
    if (name == "MLOAD") {
        emit(name, kCost);
        uint64_t off = to_offset(pop_value());
        ensure_mem(off + 32);
        push_value(read_word(frame_.mem, static_cast<size_t>(off)));
        return;
    }
    if (name == "MSTORE") {
        emit(name, kCost);
        uint64_t off = to_offset(pop_value());
        Word256 value = pop_value();
        ensure_mem(off + 32);
        auto be = word_to_be32(value);
        std::copy(be.begin(), be.end(), frame_.mem.begin() + off);
        return;
    }
    if (name == "MSTORE8") {
        emit(name, kCost);
        uint64_t off = to_offset(pop_value());
        Word256 value = pop_value();
        ensure_mem(off + 1);
        frame_.mem[off] = static_cast<uint8_t>(value & 0xff);
        return;
    }
    if (name == "MCOPY") {
        emit(name, kCost);
        uint64_t dst = to_offset(pop_value());
        uint64_t src = to_offset(pop_value());
        uint64_t len = to_offset(pop_value());
        ensure_mem(dst + len);
        ensure_mem(src + len);
        if (len > 0)
            std::memmove(frame_.mem.data() + dst, frame_.mem.data() + src,
                         static_cast<size_t>(len));
        return;
    }
    if (name == "CALLDATACOPY") {
        emit(name, kCost);
        uint64_t dst = to_offset(pop_value());
        uint64_t src = to_offset(pop_value());
        uint64_t len = to_offset(pop_value());
        ensure_mem(dst + len);
        for (uint64_t i = 0; i < len; ++i)
            frame_.mem[dst + i] =
                src + i < frame_.calldata.size() ? frame_.calldata[src + i] : 0;
        return;
    }
    if (name == "RETURNDATACOPY") {
        // The machine models an empty return buffer: zero-fill.
        emit(name, kCost);
        uint64_t dst = to_offset(pop_value());
        pop_value();
        uint64_t len = to_offset(pop_value());
        ensure_mem(dst + len);
        std::fill(frame_.mem.begin() + dst, frame_.mem.begin() + dst + len, 0);
        return;
    }
    if (name == "CODECOPY") {
        emit(name, kCost);
        uint64_t dst = to_offset(pop_value());
        uint64_t src = to_offset(pop_value());
        uint64_t len = to_offset(pop_value());
        ensure_mem(dst + len);
        for (uint64_t i = 0; i < len; ++i)
            frame_.mem[dst + i] = static_cast<uint8_t>((src + i) * 7 + 3);
        return;
    }
    if (name == "SHA3" || name == "KECCAK256") {
        emit(name, kCost);
        uint64_t off = to_offset(pop_value());
        uint64_t len = to_offset(pop_value());
        ensure_mem(off + len);
        Hash256 h = keccak256(frame_.mem.data() + off, static_cast<size_t>(len));
        push_value(word_of_hash(h));
        return;
    }

    // Storage.
    if (name == "SLOAD") {
        emit(name, kCost);
        Word256 slot = pop_value();
        auto& contract = world_->storage[frame_.self];
        auto it = contract.find(slot);
        push_value(it == contract.end() ? Word256(0) : it->second);
        return;
    }
    if (name == "SSTORE") {
        emit(name, kCost);
        Word256 slot = pop_value();
        Word256 value = pop_value();
        world_->storage[frame_.self][slot] = value;
        return;
    }

    if (name == "CALL") {
        call_op(ChildSpec{});
        return;
    }

    throw std::logic_error("trace builder has no model for " + name);
}

void TraceBuilder::call_op(const ChildSpec& spec) {
    emit("CALL", 0);  // cost patched once the child consumption is known
    size_t call_idx = entries_.size() - 1;

    pop_value();  // gas operand (cosmetic)
    Word256 addr_w = pop_value();
    Word256 value_w = pop_value();
    uint64_t args_off = to_offset(pop_value());
    uint64_t args_len = to_offset(pop_value());
    uint64_t ret_off = to_offset(pop_value());
    uint64_t ret_len = to_offset(pop_value());
    ensure_mem(args_off + args_len);
    ensure_mem(ret_off + ret_len);

    uint64_t u = 0;
    if (spec.enter) {
        Bytes child_calldata(frame_.mem.begin() + args_off,
                             frame_.mem.begin() + args_off + args_len);
        Frame saved = std::move(frame_);
        frame_ = Frame{};
        frame_.self = spec.self.is_zero() ? word_to_address(addr_w) : spec.self;
        frame_.caller = saved.self;
        frame_.origin = saved.origin;
        frame_.call_value = value_w;
        frame_.calldata = std::move(child_calldata);
        frame_.gas = spec.gas;
        frame_.depth = saved.depth + 1;
        spec.body(*this);
        u = spec.gas - frame_.gas;
        frame_ = std::move(saved);
    }
    entries_[call_idx].gas_cost = 100 + u;
    frame_.gas -= 100 + u;
    push_value(spec.success ? 1 : 0);
}

// --- random straight-line programs ------------------------------------------

namespace {

Word256 interesting_word(std::mt19937_64& rng) {
    switch (rng() % 6) {
        case 0: return 0;
        case 1: return 1;
        case 2: return kAllOnes;
        case 3: return Word256(rng() % 256);
        case 4: return Word256(rng());
        default: return (Word256(rng()) << 128) | Word256(rng());
    }
}

}  // namespace

Program random_program(uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x5deece66d1234567ULL);
    Program p;

    Address target = addr_of(0x7a);
    Address token = addr_of(0x8b);
    Address caller = addr_of(static_cast<uint8_t>(0xc1 + seed % 3));
    Address origin = (rng() % 4 == 0) ? addr_of(0xd7) : caller;

    p.cfg.target = target;
    p.cfg.tokens.insert(token);

    if (seed % 2 == 0) {
        nlohmann::json vars = nlohmann::json::array();
        vars.push_back({{"name", "supply"}, {"slot", 0}, {"type", "uint256"}});
        vars.push_back(
            {{"name", "balances"}, {"slot", 1}, {"type", "mapping(address => uint256)"}});
        vars.push_back({{"name", "owner"}, {"slot", 2}, {"type", "address"}});
        vars.push_back({{"name", "allowance"},
                        {"slot", 3},
                        {"type", "mapping(address => mapping(address => uint256))"}});
        nlohmann::json doc;
        doc["dialect"] = (seed % 4 == 0) ? "vyper" : "solidity";
        doc["variables"] = std::move(vars);
        p.layout = StorageLayout::load_descriptor(doc);
    }

    TxEnv env;
    env.self = target;
    env.caller = caller;
    env.origin = origin;
    env.call_value = (rng() % 2) ? Word256(1 + rng() % 100000) : Word256(0);
    static const size_t kCdLens[] = {0, 4, 36, 68, 100};
    env.calldata.resize(kCdLens[rng() % 5]);
    for (auto& b : env.calldata) b = static_cast<uint8_t>(rng());
    env.gas = 1'000'000;
    env.block_number = 17'000'000 + seed;
    env.block_timestamp = 1'700'000'000 + seed * 12;

    World world;
    world.storage[target][0] = Word256(1000 + seed);
    world.storage[target][2] = address_to_word(addr_of(0x0d));
    world.storage[target][5] = (Word256(0xfeed) << 200) | Word256(seed);

    TraceBuilder b(&world, env);

    auto rnd_small = [&](uint64_t n) { return rng() % n; };
    auto need = [&](size_t n) {
        while (b.stack_size() < n) b.push(interesting_word(rng));
    };

    size_t actions = 6 + rnd_small(24);
    for (size_t i = 0; i < actions; ++i) {
        if (b.stack_size() > 11) {
            static const char* shrink[] = {"POP", "ADD", "AND", "MSTORE_ACT"};
            std::string pick = shrink[rnd_small(4)];
            if (pick == "MSTORE_ACT") {
                b.push1(8 * rnd_small(12));
                b.op("MSTORE");
            } else {
                need(2);
                b.op(pick);
            }
            continue;
        }
        switch (rnd_small(24)) {
            case 0: b.push1(rnd_small(256)); break;
            case 1: b.push(interesting_word(rng)); break;
            case 2: {
                static const char* env_ops[] = {"CALLER",       "ORIGIN", "ADDRESS",
                                                "CALLVALUE",    "CALLDATASIZE",
                                                "TIMESTAMP",    "NUMBER", "GAS"};
                b.op(env_ops[rnd_small(8)]);
                break;
            }
            case 3: {
                static const uint64_t offs[] = {0, 4, 36, 68};
                b.push1(offs[rnd_small(4)]);
                b.op("CALLDATALOAD");
                break;
            }
            case 4:
                b.push(interesting_word(rng));
                b.op("BALANCE");
                break;
            case 5:
            case 6: {
                static const char* bin[] = {"ADD", "MUL", "SUB", "DIV", "MOD",
                                            "LT",  "GT",  "EQ",  "AND", "OR",
                                            "XOR", "SHL", "SHR", "SAR", "BYTE"};
                need(2);
                b.op(bin[rnd_small(15)]);
                break;
            }
            case 7:
                need(1);
                b.op(rnd_small(2) ? "ISZERO" : "NOT");
                break;
            case 8: {
                need(1);
                unsigned n = 1 + static_cast<unsigned>(
                                     rnd_small(std::min<size_t>(3, b.stack_size())));
                b.dup(n);
                break;
            }
            case 9: {
                need(2);
                unsigned n = 1 + static_cast<unsigned>(
                                     rnd_small(std::min<size_t>(2, b.stack_size() - 1)));
                b.swap(n);
                break;
            }
            case 10:
                need(1);
                b.op("POP");
                break;
            case 11:
                b.push1(8 * rnd_small(16));
                b.op("MLOAD");
                break;
            case 12:
                need(1);
                b.push1(8 * rnd_small(16));
                b.op(rnd_small(4) ? "MSTORE" : "MSTORE8");
                break;
            case 13:
                b.push1(rnd_small(2) ? 64 : 32);
                b.push1(32 * rnd_small(2));
                b.op("SHA3");
                break;
            case 14:
                b.push1(rnd_small(6));
                b.op("SLOAD");
                break;
            case 15:
                need(1);
                b.push1(rnd_small(6));
                b.op("SSTORE");
                break;
            case 16: {
                // Mapping load through a solidity-shape preimage.
                b.push(interesting_word(rng));
                b.push1(0);
                b.op("MSTORE");
                b.push1(1 + rnd_small(3));
                b.push1(0x20);
                b.op("MSTORE");
                b.push1(0x40);
                b.push1(0);
                b.op("SHA3");
                b.op("SLOAD");
                break;
            }
            case 17: {
                static const char* copies[] = {"CALLDATACOPY", "RETURNDATACOPY",
                                               "CODECOPY"};
                b.push1(32 * rnd_small(3));       // length
                b.push1(4 * rnd_small(3));        // source offset
                b.push1(8 * rnd_small(12));       // destination
                b.op(copies[rnd_small(3)]);
                break;
            }
            case 18:
                b.push1(32 * rnd_small(2));  // length
                b.push1(8 * rnd_small(8));   // src
                b.push1(8 * rnd_small(8));   // dst
                b.op("MCOPY");
                break;
            case 19:
                if (rnd_small(2)) {
                    b.push1(0);
                    b.push1(0);
                    b.op("LOG0");
                } else {
                    need(1);
                    b.push1(32);
                    b.push1(0);
                    b.op("LOG1");
                }
                break;
            case 20:
                b.op("JUMPDEST");
                break;
            case 21:
                need(1);
                b.push1(3 + rnd_small(29));
                b.op("SHL");
                break;
            case 22:
                need(1);
                b.push1(3 + rnd_small(29));
                b.op("SHR");
                break;
            default:
                b.push1(rnd_small(32));
                need(2);
                b.op("BYTE");
                break;
        }
    }

    auto push_amount = [&]() {
        switch (rnd_small(3)) {
            case 0:
                if (b.stack_size() > 0) return;  // reuse whatever is on top
                b.push(interesting_word(rng));
                return;
            case 1:
                b.push1(4);
                b.op("CALLDATALOAD");
                return;
            default:
                b.op("CALLVALUE");
                return;
        }
    };

    uint64_t ending = rnd_small(10);
    if (ending < 3) {
        // Ether-bearing call: a forced-nonzero value word reaches the sink.
        need(1);
        b.push1(1);
        b.op("OR");
        for (int k = 0; k < 4; ++k) {
            b.push1(0);
            b.swap(1);
        }
        Address callee = rnd_small(2) ? token : addr_of(0xe9);
        b.push(address_to_word(callee));
        b.push(Word256(0x5000));
        b.op("CALL");
        b.op("STOP");
    } else if (ending < 6) {
        // token.transfer(caller, amount)
        b.push(Word256(0xa9059cbb) << 224);
        b.push1(0x80);
        b.op("MSTORE");
        b.op("CALLER");
        b.push1(0x84);
        b.op("MSTORE");
        push_amount();
        b.push1(0xa4);
        b.op("MSTORE");
        b.push1(0);
        b.push1(0);
        b.push1(0x44);
        b.push1(0x80);
        b.push1(0);
        b.push(address_to_word(token));
        b.push(Word256(0x5000));
        b.op("CALL");
        b.op("STOP");
    } else if (ending < 8) {
        // token.transferFrom(caller, <to>, amount); recipient alternates
        // between the target (a sink) and the caller (not one).
        bool to_target = rnd_small(2) == 0;
        b.push(Word256(0x23b872dd) << 224);
        b.push1(0x80);
        b.op("MSTORE");
        b.op("CALLER");
        b.push1(0x84);
        b.op("MSTORE");
        b.op(to_target ? "ADDRESS" : "CALLER");
        b.push1(0xa4);
        b.op("MSTORE");
        push_amount();
        b.push1(0xc4);
        b.op("MSTORE");
        b.push1(0);
        b.push1(0);
        b.push1(0x64);
        b.push1(0x80);
        b.push1(0);
        b.push(address_to_word(token));
        b.push(Word256(0x5000));
        b.op("CALL");
        b.op("STOP");
    } else if (ending == 8) {
        b.push1(32);
        b.push1(0);
        b.op("RETURN");
    } else {
        b.op("STOP");
    }

    p.meta = b.metadata();
    p.meta.tx_hash = keccak256("program-" + std::to_string(seed));
    p.entries = b.take_entries();
    return p;
}

// --- the vault corpus fixture -----------------------------------------------

namespace {

struct FixtureTx {
    Hash256 hash{};
    uint64_t block = 0;
    Address from{};
    Address to{};
    uint64_t gas = 0;
    Bytes input;
    std::vector<StructLogEntry> entries;
};

Bytes selector_calldata(const Selector& sel, const Word256& amount) {
    Bytes out(sel.bytes.begin(), sel.bytes.end());
    auto be = word_to_be32(amount);
    out.insert(out.end(), be.begin(), be.end());
    return out;
}

Word256 selector_word(const Selector& sel) {
    Word256 w = 0;
    for (uint8_t byte : sel.bytes) w = (w << 8) | byte;
    return w << 224;
}

// Vault function bodies: balance and total-supply updates through the real
// storage schema, then the matching token leg as an un-entered child call.
void deposit_body(TraceBuilder& b, const Address& token, uint64_t burn_cost) {
    b.op("CALLER");
    b.push1(0);
    b.op("MSTORE");
    b.push1(1);
    b.push1(32);
    b.op("MSTORE");
    b.push1(64);
    b.push1(0);
    b.op("SHA3");
    b.dup(1);
    b.op("SLOAD");
    b.push1(4);
    b.op("CALLDATALOAD");
    b.op("ADD");
    b.swap(1);
    b.op("SSTORE");  // balanceOf[caller] += amount

    b.push1(0);
    b.op("SLOAD");
    b.push1(4);
    b.op("CALLDATALOAD");
    b.op("ADD");
    b.push1(0);
    b.op("SSTORE");  // totalSupply += amount

    // token.transferFrom(caller, address(this), amount)
    b.push(Word256(0x23b872dd) << 224);
    b.push1(0x80);
    b.op("MSTORE");
    b.op("CALLER");
    b.push1(0x84);
    b.op("MSTORE");
    b.op("ADDRESS");
    b.push1(0xa4);
    b.op("MSTORE");
    b.push1(4);
    b.op("CALLDATALOAD");
    b.push1(0xc4);
    b.op("MSTORE");
    b.push1(0);
    b.push1(0);
    b.push1(0x64);
    b.push1(0x80);
    b.push1(0);
    b.push(address_to_word(token));
    b.push(Word256(30'000));
    b.call_op({.gas = 0, .enter = false, .success = true, .self = {}, .body = {}});
    b.op("POP");

    b.burn(burn_cost);
    b.op("STOP");
}

void withdraw_body(TraceBuilder& b, const Address& token, uint64_t burn_cost) {
    b.op("CALLER");
    b.push1(0);
    b.op("MSTORE");
    b.push1(1);
    b.push1(32);
    b.op("MSTORE");
    b.push1(64);
    b.push1(0);
    b.op("SHA3");
    b.dup(1);
    b.op("SLOAD");
    b.push1(4);
    b.op("CALLDATALOAD");
    b.swap(1);
    b.op("SUB");
    b.swap(1);
    b.op("SSTORE");  // balanceOf[caller] -= amount

    b.push1(0);
    b.op("SLOAD");
    b.push1(4);
    b.op("CALLDATALOAD");
    b.swap(1);
    b.op("SUB");
    b.push1(0);
    b.op("SSTORE");  // totalSupply -= amount

    // token.transfer(caller, amount)
    b.push(Word256(0xa9059cbb) << 224);
    b.push1(0x80);
    b.op("MSTORE");
    b.op("CALLER");
    b.push1(0x84);
    b.op("MSTORE");
    b.push1(4);
    b.op("CALLDATALOAD");
    b.push1(0xa4);
    b.op("MSTORE");
    b.push1(0);
    b.push1(0);
    b.push1(0x44);
    b.push1(0x80);
    b.push1(0);
    b.push(address_to_word(token));
    b.push(Word256(30'000));
    b.call_op({.gas = 0, .enter = false, .success = true, .self = {}, .body = {}});
    b.op("POP");

    b.burn(burn_cost);
    b.op("STOP");
}

}  // namespace

MotivatingFixture write_motivating_fixture(const std::filesystem::path& dir) {
    MotivatingFixture fx;
    fx.dir = dir;
    fx.vault = parse_address("0x56e4b1c10d58605f0efe2d61ca64acbbbd2c3657");
    fx.token = parse_address("0x89d24a6b4ccb1b6faa2625fe562bdd9a23260359");
    fx.users = {addr_of(0x11), addr_of(0x22), addr_of(0x33)};
    fx.attacker_contract = addr_of(0x44);
    fx.attacker_eoa = addr_of(0x55);
    fx.deposit_sel = FunctionSig{"deposit", {"uint256"}, {}}.selector();
    fx.withdraw_sel = FunctionSig{"withdraw", {"uint256"}, {}}.selector();

    World world;
    world.storage[fx.vault][0] = Word256(127'000'000);

    std::vector<FixtureTx> txs;

    auto user_tx = [&](size_t n, const Address& user, bool deposit, uint64_t amount,
                       uint64_t block, uint64_t gas, uint64_t burn_cost) {
        FixtureTx tx;
        tx.hash = keccak256("motivating-tx-" + std::to_string(n));
        tx.block = block;
        tx.from = user;
        tx.to = fx.vault;
        tx.gas = gas;
        tx.input = selector_calldata(deposit ? fx.deposit_sel : fx.withdraw_sel, amount);
        TxEnv env;
        env.self = fx.vault;
        env.caller = user;
        env.origin = user;
        env.calldata = tx.input;
        env.gas = gas;
        env.block_number = block;
        env.block_timestamp = 1'700'000'000 + block * 12;
        env.with_depth = true;
        TraceBuilder b(&world, env);
        if (deposit)
            deposit_body(b, fx.token, burn_cost);
        else
            withdraw_body(b, fx.token, burn_cost);
        tx.entries = b.take_entries();
        txs.push_back(std::move(tx));
    };

    // Training window: blocks 100..160, three users, mixed flows.
    user_tx(1, fx.users[0], true, 200'000, 100, 500'000, 30'000);
    user_tx(2, fx.users[1], true, 180'000, 110, 510'000, 31'000);
    user_tx(3, fx.users[0], false, 100'000, 120, 520'000, 37'000);
    user_tx(4, fx.users[2], true, 300'000, 130, 530'000, 33'000);
    user_tx(5, fx.users[1], false, 150'000, 140, 540'000, 39'000);
    user_tx(6, fx.users[0], true, 50'000, 150, 550'000, 35'000);
    user_tx(7, fx.users[2], false, 80'000, 160, 560'000, 41'000);
    // Held-out benign activity.
    user_tx(8, fx.users[0], true, 100'000, 170, 540'000, 32'000);
    user_tx(9, fx.users[2], false, 60'000, 180, 545'000, 38'000);

    // The exploit: an attack contract drains the vault with three oversized
    // deposit/withdraw rounds inside a single transaction.
    {
        FixtureTx tx;
        tx.hash = keccak256("motivating-tx-10");
        tx.block = 190;
        tx.from = fx.attacker_eoa;
        tx.to = fx.attacker_contract;
        tx.gas = 30'000'000;
        tx.input = Bytes{0xde, 0xad, 0xbe, 0xef};
        TxEnv env;
        env.self = fx.attacker_contract;
        env.caller = fx.attacker_eoa;
        env.origin = fx.attacker_eoa;
        env.calldata = tx.input;
        env.gas = 30'000'000;
        env.block_number = 190;
        env.block_timestamp = 1'700'000'000 + 190 * 12;
        env.with_depth = true;
        TraceBuilder b(&world, env);

        struct Round {
            bool deposit;
            uint64_t amount, child_gas, burn;
        };
        const Round rounds[] = {
            {true, 22'200'000, 9'895'111, 9'600'000}, {false, 5'000'000, 3'100'000, 2'700'000},
            {true, 22'200'000, 3'000'000, 2'600'000}, {false, 5'000'000, 2'900'000, 2'500'000},
            {true, 22'200'000, 2'800'000, 2'400'000}, {false, 5'000'000, 2'700'000, 2'300'000},
        };
        for (const Round& r : rounds) {
            b.push(selector_word(r.deposit ? fx.deposit_sel : fx.withdraw_sel));
            b.push1(0);
            b.op("MSTORE");
            b.push(Word256(r.amount));
            b.push1(4);
            b.op("MSTORE");
            b.push1(0);
            b.push1(0);
            b.push1(0x24);
            b.push1(0);
            b.push1(0);
            b.push(address_to_word(fx.vault));
            b.push(Word256(r.child_gas));
            TraceBuilder::ChildSpec spec;
            spec.gas = r.child_gas;
            spec.enter = true;
            spec.success = true;
            spec.self = fx.vault;
            uint64_t burn = r.burn;
            if (r.deposit)
                spec.body = [&fx, burn](TraceBuilder& bb) {
                    deposit_body(bb, fx.token, burn);
                };
            else
                spec.body = [&fx, burn](TraceBuilder& bb) {
                    withdraw_body(bb, fx.token, burn);
                };
            b.call_op(spec);
            b.op("POP");
        }
        b.op("STOP");
        tx.entries = b.take_entries();
        txs.push_back(std::move(tx));
    }

    fx.exploit_tx = txs.back().hash;
    for (const FixtureTx& tx : txs) fx.tx_hashes.push_back(tx.hash);

    // Fixture tree on disk.
    nlohmann::json index;
    index["target"] = to_string(fx.vault);
    nlohmann::json records = nlohmann::json::array();
    for (size_t i = 0; i < txs.size(); ++i) {
        const FixtureTx& tx = txs[i];
        char name[32];
        std::snprintf(name, sizeof name, "tx%02zu.json", i + 1);
        std::string rel = std::string("traces/") + name;
        write_file(dir / "fixtures" / rel, struct_logs_text(tx.entries) + "\n");
        nlohmann::json rec;
        rec["txHash"] = to_string(tx.hash);
        rec["blockNumber"] = tx.block;
        rec["blockTimestamp"] = 1'700'000'000 + tx.block * 12;
        rec["from"] = to_string(tx.from);
        rec["to"] = to_string(tx.to);
        rec["value"] = "0x0";
        rec["gas"] = tx.gas + 21'000;
        rec["input"] = bytes_to_hex(tx.input);
        rec["trace"] = rel;
        records.push_back(std::move(rec));
    }
    index["transactions"] = std::move(records);
    write_file(dir / "fixtures" / "index.json", index.dump(2) + "\n");

    nlohmann::json vault_abi = nlohmann::json::array();
    vault_abi.push_back({{"name", "deposit"}, {"inputs", {"uint256"}}, {"outputs", nlohmann::json::array()}});
    vault_abi.push_back({{"name", "withdraw"}, {"inputs", {"uint256"}}, {"outputs", nlohmann::json::array()}});
    write_file(dir / "descriptors" / (to_string(fx.vault) + ".abi.json"),
               vault_abi.dump(2) + "\n");

    nlohmann::json token_abi = nlohmann::json::array();
    token_abi.push_back({{"name", "transfer"},
                         {"inputs", {"address", "uint256"}},
                         {"outputs", {"bool"}}});
    token_abi.push_back({{"name", "transferFrom"},
                         {"inputs", {"address", "address", "uint256"}},
                         {"outputs", {"bool"}}});
    write_file(dir / "descriptors" / (to_string(fx.token) + ".abi.json"),
               token_abi.dump(2) + "\n");

    nlohmann::json layout;
    layout["dialect"] = "solidity";
    layout["variables"] = nlohmann::json::array();
    layout["variables"].push_back({{"name", "totalSupply"}, {"slot", 0}, {"type", "uint256"}});
    layout["variables"].push_back(
        {{"name", "balanceOf"}, {"slot", 1}, {"type", "mapping(address => uint256)"}});
    write_file(dir / "descriptors" / (to_string(fx.vault) + ".layout.json"),
               layout.dump(2) + "\n");

    nlohmann::json config;
    config["target"] = to_string(fx.vault);
    config["provider"] = {{"kind", "fixtures"}, {"dir", "fixtures"}};
    config["cacheDir"] = "cache";
    config["outDir"] = "out";
    config["descriptorsDir"] = "descriptors";
    config["trainFraction"] = "0.7";
    config["tokens"] = {to_string(fx.token)};
    config["specialStorage"] = {{"totalSupply", "totalSupply"}};
    config["exploits"] = {to_string(fx.exploit_tx)};
    fx.config_path = dir / "config.json";
    write_file(fx.config_path, config.dump(2) + "\n");

    return fx;
}

}  // namespace traceguard::testgen
