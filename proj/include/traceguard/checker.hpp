#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "traceguard/common.hpp"
#include "traceguard/observation.hpp"
#include "traceguard/synthesis.hpp"

namespace traceguard {

// Guard key for the same-block templates: keccak over the 20-byte address
// concatenated with the 32-byte big-endian block number, mirroring what an
// on-chain guard would store.
Hash256 entry_hash(const Address& who, uint64_t block_number);

// Replays the same-block guard over a corpus in order and counts violating
// transactions. `use_origin` keys the hash by origin instead of sender. A
// violating transaction reverts, so its own entry marks are discarded.
size_t simulate_same_block(const std::vector<ObservationSet>& corpus,
                           const EnterExitSets& roles, bool use_origin);

enum class InstanceVerdict : uint8_t { kPass, kBlocked, kNotApplicable };

struct Verdict {
    Hash256 tx_hash{};
    bool exploit = false;   // ground-truth corpus annotation
    bool touches_target = false;
    std::vector<InstanceVerdict> per_instance;  // parallel to manifest.instances
    bool blocked = false;
    std::vector<size_t> blocking;  // manifest indices that blocked
};

// Cross-transaction guard memory, one slot per manifest instance. State only
// commits for an instance when that instance passed the transaction: a
// blocking guard reverts the transaction that would have updated it.
struct GuardState {
    struct InstanceState {
        std::set<Hash256> entry_marks;       // SB, OB
        std::optional<uint64_t> last_block;  // LU
        std::optional<Word256> last_price;   // OD
    };
    std::map<size_t, InstanceState> per_instance;
};

// Evaluates every applied instance against one transaction's observations.
// Throws StateCorrupt when `state` references instances the manifest lacks.
Verdict check_tx(const ObservationSet& obs, const Manifest& manifest, GuardState* state);

// Fresh-state corpus evaluation in order.
std::vector<Verdict> check_corpus(const std::vector<ObservationSet>& corpus,
                                  const Manifest& manifest);

// --- boolean combinations ---------------------------------------------------

// Canonical n-ary AND/OR tree over template leaves. Operands of an operator
// node are flattened (associativity) and sorted by their rendering, so equal
// expressions render identically.
struct CombinationExpr {
    enum class Kind : uint8_t { kLeaf, kAnd, kOr };

    Kind kind = Kind::kLeaf;
    TemplateId leaf = TemplateId::kEOA;
    std::vector<CombinationExpr> children;

    std::string render() const;  // "EOA&(DFU|OB)"
    size_t leaf_count() const;
    bool eval(const std::map<TemplateId, bool>& holds) const;
};

// A transaction is blocked by a combination when the expression over the
// per-template holds values is false.
bool combination_blocked(const CombinationExpr& expr,
                         const std::map<TemplateId, bool>& holds);

// Per-transaction per-template holds: a template holds when every applied
// instance of it passed; templates with no applied instance hold vacuously.
struct TxTemplateHolds {
    Hash256 tx_hash{};
    bool exploit = false;
    bool touches_target = false;
    std::map<TemplateId, bool> holds;
};

std::vector<TxTemplateHolds> template_holds(const std::vector<Verdict>& verdicts,
                                            const Manifest& manifest);

struct CombinationResult {
    std::string expr;
    size_t leaves = 0;
    size_t hacks_blocked = 0;
    size_t hacks_total = 0;
    size_t benign_blocked = 0;
    size_t benign_total = 0;  // benign transactions touching the target
    Rational fp_rate;         // benign_blocked / benign_total, 0 when empty
};

struct CombinationReport {
    std::vector<CombinationResult> results;  // sorted: hacks blocked desc, expr asc
    std::optional<std::string> best_max_blocked;       // metric 1
    std::optional<std::string> best_under_fp_percent;  // metric 2: FP < 1%
};

// Enumerates every structurally distinct AND/OR expression with at most four
// leaves over `templates` (no repeated template) and ranks it on the corpus.
CombinationReport enumerate_combinations(const std::vector<TemplateId>& templates,
                                         const std::vector<TxTemplateHolds>& corpus);

// --- reporting --------------------------------------------------------------

struct ReportRow {
    TemplateId template_id = TemplateId::kEOA;
    std::string status;    // "applied" | "-" | "x" | "empty" vocabulary, see cell
    std::string cell;      // FP% for applied rows, "-" / "✗" / "∅" otherwise
    size_t applied_locations = 0;
    size_t exploit_blocked = 0;
    size_t exploit_total = 0;
    size_t benign_blocked = 0;
    size_t benign_total = 0;
};

struct ReportTable {
    std::vector<ReportRow> rows;  // one per template present in the manifest
    size_t exploit_total = 0;
    size_t exploit_blocked_any = 0;  // blocked by at least one applied instance
    size_t benign_total = 0;         // benign transactions touching the target
};

ReportTable aggregate_report(const std::vector<Verdict>& verdicts, const Manifest& manifest);

// Percentage with two decimals, exact rational rounding (half away from zero).
std::string format_percent(const Rational& fraction);

std::string render_report(const ReportTable& table);
nlohmann::json report_to_json(const ReportTable& table);

nlohmann::json verdicts_to_json(const std::vector<Verdict>& verdicts,
                                const Manifest& manifest);

std::string render_combinations(const CombinationReport& report);
nlohmann::json combinations_to_json(const CombinationReport& report);

}  // namespace traceguard
