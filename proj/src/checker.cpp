#include "traceguard/checker.hpp"

#include <algorithm>
#include <functional>
#include <iomanip>
#include <sstream>

#include "traceguard/keccak.hpp"

namespace traceguard {
namespace {

std::optional<Address> token_from_location(const std::string& loc) {
    if (loc.rfind("token:", 0) != 0) return std::nullopt;
    std::string rest = loc.substr(6);
    if (rest == "ether") return ether_address();
    return parse_address(rest);
}

std::optional<size_t> oracle_from_location(const std::string& loc) {
    if (loc.rfind("oracle:", 0) != 0) return std::nullopt;
    return static_cast<size_t>(std::stoul(loc.substr(7)));
}

const Word256& require_value_bound(const InvariantInstance& inst) {
    if (!inst.params.value_bound)
        throw CorruptCache(std::string("applied ") + to_string(inst.template_id) +
                           " instance lacks its bound");
    return *inst.params.value_bound;
}

// One transaction of the same-block guard. Returns true when an exit-role
// call sees its entry mark; otherwise appends the marks a commit would add.
bool same_block_tx(const ObservationSet& obs, const EnterExitSets& roles, bool use_origin,
                   const std::set<Hash256>& committed, std::vector<Hash256>* adds) {
    std::set<Hash256> pending;
    for (const TargetCallObs& c : obs.calls) {
        if (c.reverted || !c.selector) continue;
        bool is_enter = roles.enter.count(*c.selector) != 0;
        bool is_exit = roles.exit_set.count(*c.selector) != 0;
        if (!is_enter && !is_exit) continue;
        Hash256 h = entry_hash(use_origin ? c.origin : c.caller, obs.block_number);
        if (is_exit && (committed.count(h) || pending.count(h))) return true;
        if (is_enter) pending.insert(h);
    }
    adds->assign(pending.begin(), pending.end());
    return false;
}

// Evaluates one applied instance; commits its state slot only on pass.
bool eval_instance(const ObservationSet& obs, const Manifest& manifest,
                   const InvariantInstance& inst, GuardState::InstanceState* state) {
    switch (inst.template_id) {
        case TemplateId::kEOA: {
            for (const TargetCallObs& c : obs.calls)
                if (c.caller != c.origin) return true;
            return false;
        }
        case TemplateId::kSO:
        case TemplateId::kOO: {
            if (!inst.params.owner)
                throw CorruptCache("applied owner instance lacks its address");
            bool use_origin = inst.template_id == TemplateId::kOO;
            for (const TargetCallObs& c : obs.calls) {
                if (selector_location(c.selector) != inst.location) continue;
                if ((use_origin ? c.origin : c.caller) != *inst.params.owner) return true;
            }
            return false;
        }
        case TemplateId::kSM:
        case TemplateId::kOM: {
            bool use_origin = inst.template_id == TemplateId::kOM;
            for (const TargetCallObs& c : obs.calls) {
                if (selector_location(c.selector) != inst.location) continue;
                const Address& who = use_origin ? c.origin : c.caller;
                if (std::find(inst.params.managers.begin(), inst.params.managers.end(),
                              who) == inst.params.managers.end())
                    return true;
            }
            return false;
        }
        case TemplateId::kSB:
        case TemplateId::kOB: {
            std::vector<Hash256> adds;
            if (same_block_tx(obs, manifest.roles,
                              inst.template_id == TemplateId::kOB, state->entry_marks,
                              &adds))
                return true;
            state->entry_marks.insert(adds.begin(), adds.end());
            return false;
        }
        case TemplateId::kLU: {
            if (!inst.params.nb_blocks)
                throw CorruptCache("applied LU instance lacks nbBlocks");
            std::optional<uint64_t> last = state->last_block;
            for (const TargetCallObs& c : obs.calls) {
                if (c.reverted || selector_location(c.selector) != inst.location) continue;
                if (last && obs.block_number - *last < *inst.params.nb_blocks) return true;
                last = obs.block_number;
            }
            state->last_block = last;
            return false;
        }
        case TemplateId::kRE:
            return obs.max_nesting >= 2;
        case TemplateId::kGS:
        case TemplateId::kGC: {
            if (!inst.params.gas_bound)
                throw CorruptCache("applied gas instance lacks its bound");
            bool entry = inst.template_id == TemplateId::kGS;
            for (const TargetCallObs& c : obs.calls) {
                if (selector_location(c.selector) != inst.location) continue;
                uint64_t v = entry ? c.gas_entry : c.gas_entry - c.gas_exit;
                if (v > *inst.params.gas_bound) return true;
            }
            return false;
        }
        case TemplateId::kOR: {
            if (!inst.params.price_lower || !inst.params.price_upper)
                throw CorruptCache("applied OR instance lacks its range");
            auto idx = oracle_from_location(inst.location);
            for (const OracleObs& o : obs.oracle) {
                if (!idx || o.oracle_index != *idx) continue;
                Rational p = word_to_rational(o.price);
                if (p < *inst.params.price_lower || p > *inst.params.price_upper)
                    return true;
            }
            return false;
        }
        case TemplateId::kOD: {
            if (!inst.params.price_deviation)
                throw CorruptCache("applied OD instance lacks its deviation");
            auto idx = oracle_from_location(inst.location);
            std::optional<Word256> prev = state->last_price;
            for (const OracleObs& o : obs.oracle) {
                if (!idx || o.oracle_index != *idx) continue;
                if (prev && *prev != 0) {
                    Rational oldp = word_to_rational(*prev);
                    Rational dev = (word_to_rational(o.price) - oldp) / oldp;
                    if (dev < 0) dev = -dev;
                    if (dev > *inst.params.price_deviation) return true;
                }
                prev = o.price;
            }
            state->last_price = prev;
            return false;
        }
        case TemplateId::kTSU:
        case TemplateId::kTBU: {
            const Word256& bound = require_value_bound(inst);
            if (!inst.params.storage_name)
                throw CorruptCache("applied storage instance lacks its variable name");
            auto it = obs.storage_final.find(*inst.params.storage_name);
            return it != obs.storage_final.end() && it->second > bound;
        }
        case TemplateId::kTIU:
        case TemplateId::kTOU: {
            const Word256& bound = require_value_bound(inst);
            auto token = token_from_location(inst.location);
            bool inbound = inst.template_id == TemplateId::kTIU;
            for (const FlowEvent& f : obs.flows)
                if (token && f.token == *token && f.inbound == inbound && f.amount > bound)
                    return true;
            return false;
        }
        case TemplateId::kTIRU:
        case TemplateId::kTORU: {
            if (!inst.params.ratio_bound)
                throw CorruptCache("applied ratio instance lacks its bound");
            auto token = token_from_location(inst.location);
            if (!token || obs.unreliable_tokens.count(*token)) return false;
            auto pre = obs.pre_balances.find(*token);
            if (pre == obs.pre_balances.end() || pre->second == 0) return false;
            Rational denom = word_to_rational(pre->second);
            bool inbound = inst.template_id == TemplateId::kTIRU;
            for (const FlowEvent& f : obs.flows) {
                if (f.token != *token || f.inbound != inbound) continue;
                if (word_to_rational(f.amount) / denom > *inst.params.ratio_bound)
                    return true;
            }
            return false;
        }
        case TemplateId::kMU: {
            const Word256& bound = require_value_bound(inst);
            for (const MappingStoreObs& s : obs.mapping_stores)
                if (mapping_location(s.pattern) == inst.location && s.value > bound)
                    return true;
            return false;
        }
        case TemplateId::kCVU: {
            const Word256& bound = require_value_bound(inst);
            for (const TargetCallObs& c : obs.calls)
                if (selector_location(c.selector) == inst.location && c.call_value > bound)
                    return true;
            return false;
        }
        case TemplateId::kDFU:
        case TemplateId::kDFL: {
            const Word256& bound = require_value_bound(inst);
            bool upper = inst.template_id == TemplateId::kDFU;
            for (const DataflowObs& d : obs.dataflow) {
                if (dataflow_instance_location(d.location) != inst.location) continue;
                if (upper ? d.value > bound : d.value < bound) return true;
            }
            return false;
        }
    }
    return false;
}

}  // namespace

Hash256 entry_hash(const Address& who, uint64_t block_number) {
    Bytes buf(who.bytes.begin(), who.bytes.end());
    auto be = word_to_be32(Word256(block_number));
    buf.insert(buf.end(), be.begin(), be.end());
    return keccak256(buf);
}

size_t simulate_same_block(const std::vector<ObservationSet>& corpus,
                           const EnterExitSets& roles, bool use_origin) {
    std::set<Hash256> committed;
    size_t violations = 0;
    for (const ObservationSet& obs : corpus) {
        std::vector<Hash256> adds;
        if (same_block_tx(obs, roles, use_origin, committed, &adds))
            ++violations;
        else
            committed.insert(adds.begin(), adds.end());
    }
    return violations;
}

Verdict check_tx(const ObservationSet& obs, const Manifest& manifest, GuardState* state) {
    if (!state->per_instance.empty()) {
        size_t top = state->per_instance.rbegin()->first;
        if (top >= manifest.instances.size())
            throw StateCorrupt("guard state slot " + std::to_string(top) +
                               " has no manifest instance");
    }
    Verdict v;
    v.tx_hash = obs.tx_hash;
    v.touches_target = obs.touches_target;
    v.per_instance.assign(manifest.instances.size(), InstanceVerdict::kNotApplicable);
    for (size_t i = 0; i < manifest.instances.size(); ++i) {
        const InvariantInstance& inst = manifest.instances[i];
        if (inst.status != InstanceStatus::kApplied) continue;
        bool blocked = eval_instance(obs, manifest, inst, &state->per_instance[i]);
        v.per_instance[i] = blocked ? InstanceVerdict::kBlocked : InstanceVerdict::kPass;
        if (blocked) {
            v.blocked = true;
            v.blocking.push_back(i);
        }
    }
    return v;
}

std::vector<Verdict> check_corpus(const std::vector<ObservationSet>& corpus,
                                  const Manifest& manifest) {
    GuardState state;
    std::vector<Verdict> out;
    out.reserve(corpus.size());
    for (const ObservationSet& obs : corpus) out.push_back(check_tx(obs, manifest, &state));
    return out;
}

std::string CombinationExpr::render() const {
    if (kind == Kind::kLeaf) return to_string(leaf);
    std::string sep = kind == Kind::kAnd ? "&" : "|";
    std::string out;
    for (size_t i = 0; i < children.size(); ++i) {
        if (i) out += sep;
        bool wrap = children[i].kind != Kind::kLeaf;
        if (wrap) out += "(";
        out += children[i].render();
        if (wrap) out += ")";
    }
    return out;
}

size_t CombinationExpr::leaf_count() const {
    if (kind == Kind::kLeaf) return 1;
    size_t n = 0;
    for (const CombinationExpr& c : children) n += c.leaf_count();
    return n;
}

bool CombinationExpr::eval(const std::map<TemplateId, bool>& holds) const {
    if (kind == Kind::kLeaf) {
        auto it = holds.find(leaf);
        return it == holds.end() ? true : it->second;  // absent = not applicable = holds
    }
    if (kind == Kind::kAnd) {
        for (const CombinationExpr& c : children)
            if (!c.eval(holds)) return false;
        return true;
    }
    for (const CombinationExpr& c : children)
        if (c.eval(holds)) return true;
    return false;
}

bool combination_blocked(const CombinationExpr& expr,
                         const std::map<TemplateId, bool>& holds) {
    return !expr.eval(holds);
}

std::vector<TxTemplateHolds> template_holds(const std::vector<Verdict>& verdicts,
                                            const Manifest& manifest) {
    std::vector<TxTemplateHolds> out;
    out.reserve(verdicts.size());
    for (const Verdict& v : verdicts) {
        TxTemplateHolds row;
        row.tx_hash = v.tx_hash;
        row.exploit = v.exploit;
        row.touches_target = v.touches_target;
        for (size_t i = 0; i < manifest.instances.size(); ++i) {
            const InvariantInstance& inst = manifest.instances[i];
            if (inst.status != InstanceStatus::kApplied) continue;
            bool pass = v.per_instance[i] != InstanceVerdict::kBlocked;
            auto [it, fresh] = row.holds.emplace(inst.template_id, pass);
            if (!fresh) it->second = it->second && pass;
        }
        out.push_back(std::move(row));
    }
    return out;
}

namespace {

CombinationExpr make_leaf(TemplateId id) {
    CombinationExpr e;
    e.kind = CombinationExpr::Kind::kLeaf;
    e.leaf = id;
    return e;
}

CombinationExpr combine(CombinationExpr::Kind op, const CombinationExpr& a,
                        const CombinationExpr& b) {
    CombinationExpr e;
    e.kind = op;
    auto splice = [&](const CombinationExpr& x) {
        if (x.kind == op)
            e.children.insert(e.children.end(), x.children.begin(), x.children.end());
        else
            e.children.push_back(x);
    };
    splice(a);
    splice(b);
    std::sort(e.children.begin(), e.children.end(),
              [](const CombinationExpr& l, const CombinationExpr& r) {
                  return l.render() < r.render();
              });
    return e;
}

// All canonical expressions whose leaf set is exactly `leaves`.
std::vector<CombinationExpr> gen_exact(const std::vector<TemplateId>& leaves) {
    if (leaves.size() == 1) return {make_leaf(leaves[0])};
    std::map<std::string, CombinationExpr> out;
    unsigned n = static_cast<unsigned>(leaves.size());
    for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
        std::vector<TemplateId> a, b;
        for (unsigned i = 0; i < n; ++i) (mask >> i & 1 ? a : b).push_back(leaves[i]);
        for (const CombinationExpr& ea : gen_exact(a))
            for (const CombinationExpr& eb : gen_exact(b))
                for (auto op : {CombinationExpr::Kind::kAnd, CombinationExpr::Kind::kOr}) {
                    CombinationExpr e = combine(op, ea, eb);
                    out.emplace(e.render(), e);
                }
    }
    std::vector<CombinationExpr> v;
    for (auto& [key, e] : out) v.push_back(std::move(e));
    return v;
}

}  // namespace

CombinationReport enumerate_combinations(const std::vector<TemplateId>& templates,
                                         const std::vector<TxTemplateHolds>& corpus) {
    std::vector<TemplateId> pool = templates;
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

    std::map<std::string, CombinationExpr> exprs;
    unsigned n = static_cast<unsigned>(pool.size());
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
        std::vector<TemplateId> subset;
        for (unsigned i = 0; i < n; ++i)
            if (mask >> i & 1) subset.push_back(pool[i]);
        if (subset.size() > 4) continue;
        for (const CombinationExpr& e : gen_exact(subset)) exprs.emplace(e.render(), e);
    }

    CombinationReport report;
    for (const auto& [key, expr] : exprs) {
        CombinationResult r;
        r.expr = key;
        r.leaves = expr.leaf_count();
        for (const TxTemplateHolds& tx : corpus) {
            bool blocked = combination_blocked(expr, tx.holds);
            if (tx.exploit) {
                ++r.hacks_total;
                if (blocked) ++r.hacks_blocked;
            } else if (tx.touches_target) {
                ++r.benign_total;
                if (blocked) ++r.benign_blocked;
            }
        }
        r.fp_rate = r.benign_total == 0
                        ? Rational(0)
                        : Rational(static_cast<unsigned>(r.benign_blocked)) /
                              Rational(static_cast<unsigned>(r.benign_total));
        report.results.push_back(std::move(r));
    }
    std::sort(report.results.begin(), report.results.end(),
              [](const CombinationResult& a, const CombinationResult& b) {
                  if (a.hacks_blocked != b.hacks_blocked)
                      return a.hacks_blocked > b.hacks_blocked;
                  return a.expr < b.expr;
              });
    for (const CombinationResult& r : report.results) {
        if (!report.best_max_blocked) report.best_max_blocked = r.expr;
        if (!report.best_under_fp_percent && r.fp_rate * 100 < 1)
            report.best_under_fp_percent = r.expr;
        if (report.best_max_blocked && report.best_under_fp_percent) break;
    }
    return report;
}

std::string format_percent(const Rational& fraction) {
    Rational scaled = fraction * 10000 + Rational(1, 2);
    mp::cpp_int q = mp::numerator(scaled) / mp::denominator(scaled);  // floor, nonneg
    mp::cpp_int whole = q / 100, frac = q % 100;
    std::ostringstream os;
    os << whole << "." << std::setw(2) << std::setfill('0') << frac << "%";
    return os.str();
}

ReportTable aggregate_report(const std::vector<Verdict>& verdicts, const Manifest& manifest) {
    ReportTable table;
    for (const Verdict& v : verdicts) {
        if (v.exploit) {
            ++table.exploit_total;
            if (v.blocked) ++table.exploit_blocked_any;
        } else if (v.touches_target) {
            ++table.benign_total;
        }
    }

    for (TemplateId id : all_templates()) {
        std::vector<size_t> indices;
        for (size_t i = 0; i < manifest.instances.size(); ++i)
            if (manifest.instances[i].template_id == id) indices.push_back(i);
        if (indices.empty()) continue;

        ReportRow row;
        row.template_id = id;
        bool any_applied = false, any_violated = false, any_insufficient = false;
        for (size_t i : indices) {
            switch (manifest.instances[i].status) {
                case InstanceStatus::kApplied:
                    any_applied = true;
                    ++row.applied_locations;
                    break;
                case InstanceStatus::kViolatedInTraining: any_violated = true; break;
                case InstanceStatus::kInsufficientData: any_insufficient = true; break;
                case InstanceStatus::kNotApplicable: break;
            }
        }
        row.exploit_total = table.exploit_total;
        row.benign_total = table.benign_total;
        if (any_applied) {
            for (const Verdict& v : verdicts) {
                bool blocked = false;
                for (size_t i : indices)
                    if (v.per_instance[i] == InstanceVerdict::kBlocked) blocked = true;
                if (v.exploit && blocked) ++row.exploit_blocked;
                if (!v.exploit && v.touches_target && blocked) ++row.benign_blocked;
            }
            row.status = "applied";
            Rational fp = row.benign_total == 0
                              ? Rational(0)
                              : Rational(static_cast<unsigned>(row.benign_blocked)) /
                                    Rational(static_cast<unsigned>(row.benign_total));
            row.cell = format_percent(fp);
        } else if (any_violated) {
            row.status = "violatedInTraining";
            row.cell = "✗";
        } else if (any_insufficient) {
            row.status = "insufficientData";
            row.cell = "∅";
        } else {
            row.status = "notApplicable";
            row.cell = "-";
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string render_report(const ReportTable& table) {
    std::ostringstream os;
    os << "invariant | status             | exploit blocked | benign blocked | cell\n";
    os << "----------+--------------------+-----------------+----------------+------\n";
    for (const ReportRow& r : table.rows) {
        os << std::left << std::setw(9) << to_string(r.template_id) << " | " << std::setw(18)
           << r.status << " | " << std::right << std::setw(7) << r.exploit_blocked << "/"
           << std::left << std::setw(7) << r.exploit_total << " | " << std::right
           << std::setw(6) << r.benign_blocked << "/" << std::left << std::setw(7)
           << r.benign_total << " | " << r.cell << "\n";
    }
    os << "\nexploits blocked by at least one applied invariant: " << table.exploit_blocked_any
       << "/" << table.exploit_total << "\n";
    os << "benign transactions reaching the target: " << table.benign_total << "\n";
    return os.str();
}

nlohmann::json report_to_json(const ReportTable& table) {
    nlohmann::json rows = nlohmann::json::array();
    for (const ReportRow& r : table.rows) {
        nlohmann::json j;
        j["template"] = to_string(r.template_id);
        j["status"] = r.status;
        j["cell"] = r.cell;
        j["appliedLocations"] = r.applied_locations;
        j["exploitBlocked"] = r.exploit_blocked;
        j["exploitTotal"] = r.exploit_total;
        j["benignBlocked"] = r.benign_blocked;
        j["benignTotal"] = r.benign_total;
        rows.push_back(j);
    }
    nlohmann::json doc;
    doc["rows"] = rows;
    doc["exploitTotal"] = table.exploit_total;
    doc["exploitBlockedAny"] = table.exploit_blocked_any;
    doc["benignTotal"] = table.benign_total;
    return doc;
}

nlohmann::json verdicts_to_json(const std::vector<Verdict>& verdicts,
                                const Manifest& manifest) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Verdict& v : verdicts) {
        nlohmann::json j;
        j["txHash"] = to_string(v.tx_hash);
        j["exploit"] = v.exploit;
        j["touchesTarget"] = v.touches_target;
        j["blocked"] = v.blocked;
        nlohmann::json blocking = nlohmann::json::array();
        for (size_t i : v.blocking) {
            nlohmann::json b;
            b["template"] = to_string(manifest.instances[i].template_id);
            b["location"] = manifest.instances[i].location;
            blocking.push_back(b);
        }
        j["blocking"] = blocking;
        nlohmann::json per = nlohmann::json::array();
        for (InstanceVerdict iv : v.per_instance)
            per.push_back(iv == InstanceVerdict::kBlocked
                              ? "blocked"
                              : (iv == InstanceVerdict::kPass ? "pass" : "notApplicable"));
        j["perInstance"] = per;
        arr.push_back(j);
    }
    return arr;
}

std::string render_combinations(const CombinationReport& report) {
    std::ostringstream os;
    os << "combination | leaves | hacks blocked | benign blocked | fp\n";
    os << "------------+--------+---------------+----------------+----\n";
    for (const CombinationResult& r : report.results) {
        os << std::left << std::setw(11) << r.expr << " | " << std::right << std::setw(6)
           << r.leaves << " | " << std::setw(6) << r.hacks_blocked << "/" << std::left
           << std::setw(6) << r.hacks_total << " | " << std::right << std::setw(7)
           << r.benign_blocked << "/" << std::left << std::setw(6) << r.benign_total
           << " | " << format_percent(r.fp_rate) << "\n";
    }
    os << "\nmost hacks blocked: "
       << (report.best_max_blocked ? *report.best_max_blocked : "(none)") << "\n";
    os << "most hacks blocked under 1% false positives: "
       << (report.best_under_fp_percent ? *report.best_under_fp_percent : "(none)") << "\n";
    return os.str();
}

nlohmann::json combinations_to_json(const CombinationReport& report) {
    nlohmann::json arr = nlohmann::json::array();
    for (const CombinationResult& r : report.results) {
        nlohmann::json j;
        j["expr"] = r.expr;
        j["leaves"] = r.leaves;
        j["hacksBlocked"] = r.hacks_blocked;
        j["hacksTotal"] = r.hacks_total;
        j["benignBlocked"] = r.benign_blocked;
        j["benignTotal"] = r.benign_total;
        j["fpRate"] = rational_to_string(r.fp_rate);
        j["fpPercent"] = format_percent(r.fp_rate);
        arr.push_back(j);
    }
    nlohmann::json doc;
    doc["results"] = arr;
    doc["bestMaxBlocked"] =
        report.best_max_blocked ? nlohmann::json(*report.best_max_blocked) : nlohmann::json();
    doc["bestUnderFpPercent"] = report.best_under_fp_percent
                                    ? nlohmann::json(*report.best_under_fp_percent)
                                    : nlohmann::json();
    return doc;
}

}  // namespace traceguard
