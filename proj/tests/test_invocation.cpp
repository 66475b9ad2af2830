#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <optional>
#include <random>
#include <vector>

#include "traceguard/abi.hpp"
#include "traceguard/common.hpp"
#include "traceguard/invocation.hpp"
#include "traceguard/keccak.hpp"
#include "traceguard/trace.hpp"
#include "tracegen.hpp"

using namespace traceguard;

namespace {

StructLogEntry mk(uint64_t pc, const char* op, uint64_t gas, uint64_t cost,
                  std::optional<uint32_t> depth = std::nullopt,
                  std::vector<Word256> stack = {}, Bytes memory = {}) {
    StructLogEntry e;
    e.pc = pc;
    e.op = op;
    e.gas_left = gas;
    e.gas_cost = cost;
    e.depth = depth;
    e.stack = std::move(stack);
    e.memory = std::move(memory);
    return e;
}

std::vector<StructLogEntry> strip_depth(std::vector<StructLogEntry> entries) {
    for (auto& e : entries) e.depth.reset();
    return entries;
}

TxMetadata meta_to(const Address& to) {
    TxMetadata m;
    m.tx_hash = keccak256(Bytes{0x01});
    m.block_number = 100;
    m.block_timestamp = 1'600'000'000;
    m.origin = testgen::addr_of(0xee);
    m.to = to;
    m.gas_provided = 1'000'000;
    return m;
}

// Root A delegatecalls B; the B code (running as A) calls C with value 7.
std::vector<StructLogEntry> proxy_chain(const Address& b, const Address& c) {
    Word256 wb = address_to_word(b);
    Word256 wc = address_to_word(c);
    Bytes ret(32, 0);
    for (size_t i = 0; i < 32; ++i) ret[i] = static_cast<uint8_t>(i + 1);
    std::vector<StructLogEntry> v;
    v.push_back(mk(0, "JUMPDEST", 1000, 1, 1));
    v.push_back(mk(1, "DELEGATECALL", 999, 204, 1, {0, 0, 0, 0, wb, 0xffff}));
    v.push_back(mk(0, "JUMPDEST", 500, 1, 2));
    v.push_back(mk(1, "CALL", 499, 101, 2, {0, 0, 0, 0, 7, wc, 0xffff}));
    v.push_back(mk(0, "JUMPDEST", 200, 1, 3));
    v.push_back(mk(1, "STOP", 199, 0, 3));
    v.push_back(mk(2, "POP", 398, 2, 2, {1}));
    v.push_back(mk(3, "STOP", 396, 0, 2));
    v.push_back(mk(2, "POP", 795, 2, 1, {1}));
    v.push_back(mk(3, "RETURN", 793, 0, 1, {32, 0}, ret));
    return v;
}

void check_proxy_tree(const InvocationTree& tree, const Address& a, const Address& b,
                      const Address& c, const Address& origin) {
    REQUIRE(tree.nodes.size() == 3);
    const InvocationNode* root = tree.root.get();
    const InvocationNode* mid = root->children[0].get();
    REQUIRE(mid->children.size() == 1);
    const InvocationNode* leaf = mid->children[0].get();

    CHECK(root->kind == CallKind::kRoot);
    CHECK(root->addr == a);
    CHECK(root->code_addr == a);
    CHECK(root->caller == origin);
    CHECK(root->gas_entry == 1000);
    CHECK(root->gas_exit == 793);
    CHECK_FALSE(root->reverted);
    REQUIRE(root->ret_data.size() == 32);
    CHECK(root->ret_data[0] == 1);
    CHECK(root->ret_data[31] == 32);

    CHECK(mid->kind == CallKind::kDelegateCall);
    CHECK(mid->addr == a);        // storage stays home
    CHECK(mid->code_addr == b);   // borrowed code
    CHECK(mid->caller == origin); // msg.sender passes through
    CHECK(mid->call_site == 1);
    CHECK(mid->gas_entry == 500);
    CHECK(mid->gas_exit == 396);

    CHECK(leaf->kind == CallKind::kCall);
    CHECK(leaf->addr == c);
    CHECK(leaf->code_addr == c);
    CHECK(leaf->caller == a);     // the delegate frame acts as A
    CHECK(leaf->call_value == 7);
    CHECK(leaf->call_site == 3);
    CHECK(leaf->gas_entry == 200);
    CHECK(leaf->gas_exit == 199);

    REQUIRE(root->ins.size() == 2);
    CHECK(root->ins[0].begin == 0);
    CHECK(root->ins[0].end == 2);
    CHECK(root->ins[1].begin == 8);
    CHECK(root->ins[1].end == 10);
    REQUIRE(mid->ins.size() == 2);
    CHECK(mid->ins[0].begin == 2);
    CHECK(mid->ins[0].end == 4);
    CHECK(mid->ins[1].begin == 6);
    CHECK(mid->ins[1].end == 8);
    REQUIRE(leaf->ins.size() == 1);
    CHECK(leaf->ins[0].begin == 4);
    CHECK(leaf->ins[0].end == 6);

    auto rs = root->span();
    CHECK(rs.begin == 0);
    CHECK(rs.end == 10);
    auto ms = mid->span();
    CHECK(ms.begin == 2);
    CHECK(ms.end == 8);

    CHECK(root->id == 0);
    CHECK(mid->id == 1);
    CHECK(leaf->id == 2);
}

}  // namespace

TEST_CASE("delegatecall proxy chain, depth records present") {
    Address a = testgen::addr_of(0xaa);
    Address b = testgen::addr_of(0xbb);
    Address c = testgen::addr_of(0xcc);
    AbiCatalog cat;
    auto tree = build_invocation_tree(proxy_chain(b, c), meta_to(a), cat);
    check_proxy_tree(tree, a, b, c, testgen::addr_of(0xee));
}

TEST_CASE("delegatecall proxy chain, pc heuristic without depth") {
    Address a = testgen::addr_of(0xaa);
    Address b = testgen::addr_of(0xbb);
    Address c = testgen::addr_of(0xcc);
    AbiCatalog cat;
    auto tree = build_invocation_tree(strip_depth(proxy_chain(b, c)), meta_to(a), cat);
    check_proxy_tree(tree, a, b, c, testgen::addr_of(0xee));
}

TEST_CASE("segment_for_target collects delegate frames of the target") {
    Address a = testgen::addr_of(0xaa);
    Address b = testgen::addr_of(0xbb);
    Address c = testgen::addr_of(0xcc);
    AbiCatalog cat;
    auto tree = build_invocation_tree(proxy_chain(b, c), meta_to(a), cat);

    auto seg = segment_for_target(tree, a);
    REQUIRE(seg.frames.size() == 2);  // root plus the delegate frame, both addr A
    CHECK(seg.frames[0] == tree.root.get());
    CHECK(seg.frames[1] == tree.root->children[0].get());
    CHECK(max_target_nesting(seg) == 2);

    auto seg_c = segment_for_target(tree, c);
    REQUIRE(seg_c.frames.size() == 1);
    CHECK(max_target_nesting(seg_c) == 1);

    auto seg_b = segment_for_target(tree, b);  // B is only a code source
    CHECK(seg_b.frames.empty());
    CHECK(max_target_nesting(seg_b) == 0);
}

TEST_CASE("create frame learns its address from the resumption flag") {
    Address a = testgen::addr_of(0xaa);
    Address d = testgen::addr_of(0xdd);
    Bytes mem(32, 0);
    mem[0] = 0x60;
    mem[1] = 0x01;
    mem[2] = 0x01;
    std::vector<StructLogEntry> v;
    v.push_back(mk(0, "JUMPDEST", 1000, 1, 1));
    // bottom-first {len, off, value}: init = memory[0..3)
    v.push_back(mk(1, "CREATE", 999, 150, 1, {3, 0, 5}, mem));
    v.push_back(mk(0, "JUMPDEST", 50, 1, 2));
    v.push_back(mk(1, "STOP", 49, 0, 2));
    v.push_back(mk(2, "POP", 847, 2, 1, {address_to_word(d)}));
    v.push_back(mk(3, "STOP", 845, 0, 1));

    AbiCatalog cat;
    auto tree = build_invocation_tree(v, meta_to(a), cat);
    REQUIRE(tree.nodes.size() == 2);
    const InvocationNode* child = tree.root->children[0].get();
    CHECK(child->kind == CallKind::kCreate);
    CHECK(child->addr == d);
    CHECK(child->code_addr == d);
    CHECK(child->caller == a);
    CHECK(child->call_value == 5);
    REQUIRE(child->calldata.size() == 3);
    CHECK(child->calldata[0] == 0x60);
    CHECK_FALSE(child->reverted);
}

TEST_CASE("create2 address is derived from sender, salt and init code hash") {
    Address a = testgen::addr_of(0xaa);
    Bytes mem(32, 0);
    Bytes init{0x60, 0x01, 0x01};
    for (size_t i = 0; i < init.size(); ++i) mem[i] = init[i];
    Word256 salt = 0x5a17;

    // Independent recomputation: keccak(0xff || sender || salt || keccak(init))[12:].
    Bytes pre;
    pre.push_back(0xff);
    pre.insert(pre.end(), a.bytes.begin(), a.bytes.end());
    auto salt_be = word_to_be32(salt);
    pre.insert(pre.end(), salt_be.begin(), salt_be.end());
    Hash256 init_hash = keccak256(init);
    pre.insert(pre.end(), init_hash.bytes.begin(), init_hash.bytes.end());
    Hash256 digest = keccak256(pre);
    Address expected;
    for (size_t i = 0; i < 20; ++i) expected.bytes[i] = digest.bytes[12 + i];

    std::vector<StructLogEntry> v;
    v.push_back(mk(0, "JUMPDEST", 1000, 1, 1));
    // bottom-first {salt, len, off, value}
    v.push_back(mk(1, "CREATE2", 999, 150, 1, {salt, 3, 0, 0}, mem));
    v.push_back(mk(0, "JUMPDEST", 50, 1, 2));
    v.push_back(mk(1, "STOP", 49, 0, 2));
    v.push_back(mk(2, "POP", 847, 2, 1, {address_to_word(expected)}));
    v.push_back(mk(3, "STOP", 845, 0, 1));

    AbiCatalog cat;
    auto tree = build_invocation_tree(v, meta_to(a), cat);
    REQUIRE(tree.nodes.size() == 2);
    const InvocationNode* child = tree.root->children[0].get();
    CHECK(child->kind == CallKind::kCreate2);
    CHECK(child->addr == expected);
    CHECK(child->calldata == init);
}

TEST_CASE("revert terminator carries return data and marks the frame") {
    Address a = testgen::addr_of(0xaa);
    Address b = testgen::addr_of(0xbb);
    Bytes mem(32, 0);
    mem[8] = 0xab;
    mem[9] = 0xcd;
    std::vector<StructLogEntry> v;
    v.push_back(mk(0, "JUMPDEST", 1000, 1, 1));
    v.push_back(mk(1, "CALL", 999, 101, 1, {0, 0, 0, 0, 0, address_to_word(b), 0xffff}));
    v.push_back(mk(0, "JUMPDEST", 60, 1, 2));
    v.push_back(mk(1, "REVERT", 59, 0, 2, {2, 8}, mem));  // bottom-first {len, off}
    v.push_back(mk(2, "POP", 898, 2, 1, {0}));
    v.push_back(mk(3, "STOP", 896, 0, 1));

    AbiCatalog cat;
    auto tree = build_invocation_tree(v, meta_to(a), cat);
    const InvocationNode* child = tree.root->children[0].get();
    CHECK(child->reverted);
    CHECK(child->gas_entry == 60);
    CHECK(child->gas_exit == 59);
    REQUIRE(child->ret_data.size() == 2);
    CHECK(child->ret_data[0] == 0xab);
    CHECK(child->ret_data[1] == 0xcd);
    CHECK_FALSE(tree.root->reverted);
}

TEST_CASE("zero success flag marks a stopped child reverted") {
    Address a = testgen::addr_of(0xaa);
    Address b = testgen::addr_of(0xbb);
    std::vector<StructLogEntry> v;
    v.push_back(mk(0, "JUMPDEST", 1000, 1, 1));
    v.push_back(mk(1, "CALL", 999, 101, 1, {0, 0, 0, 0, 0, address_to_word(b), 0xffff}));
    v.push_back(mk(0, "JUMPDEST", 60, 1, 2));
    v.push_back(mk(1, "STOP", 59, 0, 2));
    v.push_back(mk(2, "POP", 898, 2, 1, {0}));  // parent saw failure
    v.push_back(mk(3, "STOP", 896, 0, 1));

    AbiCatalog cat;
    auto tree = build_invocation_tree(v, meta_to(a), cat);
    const InvocationNode* child = tree.root->children[0].get();
    CHECK(child->reverted);
    CHECK(child->gas_exit == 59);  // still the terminator's gas
}

TEST_CASE("invalid terminator burns the remaining gas") {
    Address a = testgen::addr_of(0xaa);
    Address b = testgen::addr_of(0xbb);
    std::vector<StructLogEntry> v;
    v.push_back(mk(0, "JUMPDEST", 1000, 1, 1));
    v.push_back(mk(1, "CALL", 999, 161, 1, {0, 0, 0, 0, 0, address_to_word(b), 0xffff}));
    v.push_back(mk(0, "JUMPDEST", 60, 1, 2));
    v.push_back(mk(1, "INVALID", 59, 0, 2));
    v.push_back(mk(2, "POP", 838, 2, 1, {0}));
    v.push_back(mk(3, "STOP", 836, 0, 1));

    AbiCatalog cat;
    auto tree = build_invocation_tree(v, meta_to(a), cat);
    const InvocationNode* child = tree.root->children[0].get();
    CHECK(child->reverted);
    CHECK(child->gas_entry == 60);
    CHECK(child->gas_exit == 0);
}

TEST_CASE("frame that vanishes without a terminator closes as out of gas") {
    Address a = testgen::addr_of(0xaa);
    Address b = testgen::addr_of(0xbb);
    std::vector<StructLogEntry> v;
    v.push_back(mk(0, "JUMPDEST", 1000, 1, 1));
    v.push_back(mk(1, "CALL", 999, 137, 1, {0, 0, 0, 0, 0, address_to_word(b), 0xffff}));
    v.push_back(mk(0, "JUMPDEST", 37, 5, 2));
    v.push_back(mk(1, "JUMPDEST", 32, 5, 2));  // last sight of the child
    v.push_back(mk(2, "POP", 862, 2, 1, {0}));
    v.push_back(mk(3, "STOP", 860, 0, 1));

    AbiCatalog cat;
    auto tree = build_invocation_tree(v, meta_to(a), cat);
    const InvocationNode* child = tree.root->children[0].get();
    CHECK(child->reverted);
    CHECK(child->gas_entry == 37);
    CHECK(child->gas_exit == 0);
    REQUIRE(child->ins.size() == 1);
    CHECK(child->ins[0].begin == 2);
    CHECK(child->ins[0].end == 4);
}

TEST_CASE("trace ending inside a child closes abnormally with depth records") {
    Address a = testgen::addr_of(0xaa);
    Address b = testgen::addr_of(0xbb);
    std::vector<StructLogEntry> v;
    v.push_back(mk(0, "JUMPDEST", 1000, 1, 1));
    v.push_back(mk(1, "CALL", 999, 137, 1, {0, 0, 0, 0, 0, address_to_word(b), 0xffff}));
    v.push_back(mk(0, "JUMPDEST", 37, 5, 2));

    AbiCatalog cat;
    auto tree = build_invocation_tree(v, meta_to(a), cat);
    CHECK(tree.root->reverted);
    CHECK(tree.root->gas_exit == 0);
    CHECK(tree.root->children[0]->reverted);

    // Without depth records the same shape is indistinguishable from truncation.
    CHECK_THROWS_AS(build_invocation_tree(strip_depth(v), meta_to(a), cat), MalformedTrace);
}

TEST_CASE("malformed depth transitions are rejected") {
    Address a = testgen::addr_of(0xaa);
    AbiCatalog cat;

    std::vector<StructLogEntry> jump;
    jump.push_back(mk(0, "JUMPDEST", 100, 1, 1));
    jump.push_back(mk(1, "JUMPDEST", 99, 1, 3));  // deeper without a call
    CHECK_THROWS_AS(build_invocation_tree(jump, meta_to(a), cat), MalformedTrace);

    std::vector<StructLogEntry> after;
    after.push_back(mk(0, "STOP", 100, 0, 1));
    after.push_back(mk(1, "JUMPDEST", 99, 1, 1));  // root already closed
    CHECK_THROWS_AS(build_invocation_tree(after, meta_to(a), cat), MalformedTrace);
}

TEST_CASE("call that never enters still creates a node") {
    Address a = testgen::addr_of(0xaa);
    Address p = testgen::addr_of(0x04);  // precompile-style target
    std::vector<StructLogEntry> v;
    v.push_back(mk(0, "JUMPDEST", 1000, 1));
    v.push_back(mk(1, "CALL", 999, 103, std::nullopt, {0, 0, 0, 0, 0, address_to_word(p), 0xffff}));
    v.push_back(mk(2, "POP", 896, 2, std::nullopt, {1}));
    v.push_back(mk(3, "STOP", 894, 0));

    AbiCatalog cat;
    auto tree = build_invocation_tree(v, meta_to(a), cat);
    REQUIRE(tree.nodes.size() == 2);
    const InvocationNode* child = tree.root->children[0].get();
    CHECK(child->addr == p);
    CHECK_FALSE(child->owns_entries());
    CHECK(child->ins.empty());
    CHECK(child->gas_entry == 0);
    CHECK(child->gas_exit == 0);
    CHECK_FALSE(child->reverted);
}

TEST_CASE("root calldata decodes through the catalog") {
    Address a = testgen::addr_of(0xaa);
    AbiCatalog cat;
    FunctionSig deposit{"deposit", {"uint256"}, {}};
    cat.add(a, deposit);

    TxMetadata m = meta_to(a);
    Selector sel = deposit.selector();
    m.input.insert(m.input.end(), sel.bytes.begin(), sel.bytes.end());
    auto arg = word_to_be32(Word256(123456));
    m.input.insert(m.input.end(), arg.begin(), arg.end());

    std::vector<StructLogEntry> v;
    v.push_back(mk(0, "JUMPDEST", 100, 1, 1));
    v.push_back(mk(1, "STOP", 99, 0, 1));
    auto tree = build_invocation_tree(v, m, cat);
    REQUIRE(tree.root->selector.has_value());
    CHECK(*tree.root->selector == sel);
    REQUIRE(tree.root->decoded.has_value());
    REQUIRE(tree.root->decoded->args.size() == 1);
    CHECK(tree.root->decoded->args[0].word == Word256(123456));
    CHECK_FALSE(tree.root->decode_failed);
}

namespace {

uint64_t node_consumption(const InvocationNode* n) {
    return n->gas_entry - n->gas_exit;
}

void check_tree_invariants(const InvocationTree& tree, size_t entry_count) {
    // Every entry index belongs to exactly one node.
    std::vector<int> seen(entry_count, 0);
    for (const InvocationNode* n : tree.nodes) {
        for (const auto& r : n->ins) {
            REQUIRE(r.begin <= r.end);
            REQUIRE(r.end <= entry_count);
            for (size_t i = r.begin; i < r.end; ++i) seen[i] += 1;
        }
    }
    for (size_t i = 0; i < entry_count; ++i) REQUIRE(seen[i] == 1);

    // Gas nesting: a frame's own consumption covers its children.
    for (const InvocationNode* n : tree.nodes) {
        if (!n->owns_entries()) continue;
        REQUIRE(n->gas_entry >= n->gas_exit);
        uint64_t child_sum = 0;
        for (const auto& c : n->children) child_sum += node_consumption(c.get());
        REQUIRE(node_consumption(n) >= child_sum);
    }

    // Preorder ids.
    for (size_t i = 0; i < tree.nodes.size(); ++i) REQUIRE(tree.nodes[i]->id == i);
}

}  // namespace

TEST_CASE("random trees satisfy partition and gas nesting invariants") {
    AbiCatalog cat;
    for (bool with_depth : {true, false}) {
        for (uint64_t seed = 0; seed < 40; ++seed) {
            CAPTURE(with_depth);
            CAPTURE(seed);
            auto gen = testgen::random_invocation_trace(seed, with_depth);
            auto tree = build_invocation_tree(gen.entries, gen.meta, cat);
            REQUIRE(tree.nodes.size() == gen.frame_count);
            check_tree_invariants(tree, gen.entries.size());
        }
    }
}
