#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "traceguard/common.hpp"
#include "traceguard/observation.hpp"

namespace traceguard {

// The 23 invariant templates, in report order.
enum class TemplateId : uint8_t {
    kEOA,   // caller is the transaction origin
    kSO,    // caller is the single trained owner
    kSM,    // caller is one of the trained managers
    kOO,    // origin is the single trained owner
    kOM,    // origin is one of the trained managers
    kSB,    // same sender cannot enter and exit within one block
    kOB,    // same origin cannot enter and exit within one block
    kLU,    // minimum block gap between invocations of a function
    kGS,    // gas at function entry stays under the trained bound
    kGC,    // gas consumed by the function stays under the trained bound
    kRE,    // no nested invocation of the target
    kOR,    // oracle price stays inside the trained range
    kOD,    // oracle price moves less than the trained deviation
    kTSU,   // configured total-supply variable stays under the bound
    kTBU,   // configured total-borrow variable stays under the bound
    kTIU,   // per-event token inflow stays under the bound
    kTOU,   // per-event token outflow stays under the bound
    kTIRU,  // token inflow / pre-balance ratio stays under the bound
    kTORU,  // token outflow / pre-balance ratio stays under the bound
    kMU,    // value stored into a mapping stays under the bound
    kCVU,   // call value per function stays under the bound
    kDFU,   // sink-reaching source value stays under the bound
    kDFL,   // sink-reaching source value stays over the bound
};

inline constexpr size_t kTemplateCount = 23;

const char* to_string(TemplateId id);
std::optional<TemplateId> template_from_string(const std::string& name);
const std::vector<TemplateId>& all_templates();

enum class InstanceStatus : uint8_t {
    kApplied,
    kNotApplicable,
    kViolatedInTraining,
    kInsufficientData,
};

const char* to_string(InstanceStatus s);
std::optional<InstanceStatus> status_from_string(const std::string& name);

// Template-specific payload; exactly the fields the template needs are set
// when status is applied.
struct InstanceParams {
    std::optional<Address> owner;                  // SO, OO
    std::vector<Address> managers;                 // SM, OM (sorted)
    std::optional<uint64_t> nb_blocks;             // LU
    std::optional<uint64_t> gas_bound;             // GS, GC
    std::optional<Rational> price_lower;           // OR
    std::optional<Rational> price_upper;           // OR
    std::optional<Rational> price_deviation;       // OD
    std::optional<Rational> ratio_bound;           // TIRU, TORU
    std::optional<Word256> value_bound;            // TSU/TBU/TIU/TOU/MU/CVU/DFU/DFL
    std::optional<std::string> storage_name;       // TSU, TBU

    bool operator==(const InstanceParams&) const = default;
};

struct InvariantInstance {
    TemplateId template_id = TemplateId::kEOA;
    std::string location;  // see the location builders below
    InstanceStatus status = InstanceStatus::kInsufficientData;
    InstanceParams params;
};

// Location keys, shared between inference and checking.
std::string selector_location(const std::optional<Selector>& sel);  // "0x..." | "fallback"
std::string token_location(const Address& token);                   // "token:ether" | "token:0x..."
std::string oracle_location(size_t index);                          // "oracle:<i>"
std::string mapping_location(const std::string& pattern);           // "map:<pattern>"
std::string dataflow_instance_location(const std::string& df_loc);  // "df:<source descriptor>"
inline constexpr const char* kContractWide = "*";

struct Manifest {
    Address target{};
    EnterExitSets roles;
    std::vector<InvariantInstance> instances;
};

// Exact-rational helpers used for bounds and report math.
Rational word_to_rational(const Word256& w);
std::string rational_to_string(const Rational& r);   // "7/10"; integral as "7"
Rational rational_from_string(const std::string& s);

// Drops points whose squared deviation from the population mean exceeds nine
// times the population variance (|z| > 3). Zero variance filters nothing.
std::vector<Rational> z_filter(const std::vector<Rational>& points);

// --- inference heuristics ---------------------------------------------------

// Parameter-free templates {EOA, SB, OB, RE}: applied iff zero training
// transactions violate the predicate.
InvariantInstance infer_hypothesis(TemplateId id, const std::vector<ObservationSet>& train,
                                   const EnterExitSets& roles);

// Role templates {SO, SM, OO, OM}: per-selector caller/origin sets.
std::vector<InvariantInstance> infer_roles(TemplateId id,
                                           const std::vector<ObservationSet>& train);

// Bound templates {GS, GC, OR, OD, TSU, TBU, TIU, TOU, TIRU, TORU, MU, CVU,
// DFU, DFL}: per-location point sets, at least two distinct values required.
std::vector<InvariantInstance> infer_bounds(TemplateId id,
                                            const std::vector<ObservationSet>& train,
                                            const ExtractionConfig& cfg);

// LU: per-selector invocation block numbers; nbBlocks = smallest gap.
std::vector<InvariantInstance> infer_lastupdate(const std::vector<ObservationSet>& train);

// Full manifest over the enabled template set, deterministic order.
Manifest infer_invariants(const std::vector<ObservationSet>& train,
                          const ExtractionConfig& cfg, const EnterExitSets& roles,
                          const std::set<TemplateId>& enabled);

nlohmann::json manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& doc);

}  // namespace traceguard
