#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "traceguard/invocation.hpp"
#include "traceguard/slot_resolution.hpp"
#include "traceguard/taint.hpp"

// Brute-force reference for the taint engine: plain label sets per bit, no
// interning, no memoization, structured for obviousness rather than speed.
namespace traceguard::testoracle {

struct OracleHit {
    SinkKind kind = SinkKind::kEtherTransfer;
    Word256 amount = 0;
    std::optional<Address> token;
    uint32_t frame_id = 0;
    size_t trace_index = 0;
    std::vector<uint32_t> labels;  // ascending label ids
};

struct OracleResult {
    std::vector<TaintLabel> labels;
    std::vector<OracleHit> hits;
};

// Walks the segment like the engine driver does. Only single-frame segments
// occur in the generated programs; nested target frames are rejected.
OracleResult oracle_run(const TraceSegment& segment, const std::vector<StructLogEntry>& entries,
                        const PreimageDictionary& dict, const StorageLayout& layout,
                        const TaintConfig& cfg);

// Empty string when the engine result matches the oracle bit for bit;
// otherwise a description of the first difference.
std::string compare_results(const TaintResult& engine, const OracleResult& oracle);

}  // namespace traceguard::testoracle
