#include "traceguard/synthesis.hpp"

#include <algorithm>
#include <set>

#include "traceguard/checker.hpp"

namespace traceguard {
namespace {

const char* kTemplateNames[kTemplateCount] = {
    "EOA", "SO",  "SM",  "OO",  "OM",   "SB",   "OB", "LU",  "GS",  "GC",  "RE", "OR",
    "OD",  "TSU", "TBU", "TIU", "TOU", "TIRU", "TORU", "MU", "CVU", "DFU", "DFL"};

template <typename T>
size_t distinct_count(const std::vector<T>& pts) {
    return std::set<T>(pts.begin(), pts.end()).size();
}

InvariantInstance make_instance(TemplateId id, std::string location, InstanceStatus status) {
    InvariantInstance inst;
    inst.template_id = id;
    inst.location = std::move(location);
    inst.status = status;
    return inst;
}

// Shared status gate for bound templates: fewer than two distinct points in a
// location means the bound cannot be trusted.
template <typename T, typename Apply>
InvariantInstance bound_instance(TemplateId id, const std::string& loc,
                                 const std::vector<T>& points, Apply&& apply) {
    if (distinct_count(points) < 2)
        return make_instance(id, loc, InstanceStatus::kInsufficientData);
    InvariantInstance inst = make_instance(id, loc, InstanceStatus::kApplied);
    apply(&inst, points);
    return inst;
}

std::map<std::string, std::vector<uint64_t>> collect_gas_points(
    const std::vector<ObservationSet>& train, bool entry) {
    std::map<std::string, std::vector<uint64_t>> out;
    for (const ObservationSet& obs : train)
        for (const TargetCallObs& c : obs.calls)
            out[selector_location(c.selector)].push_back(entry ? c.gas_entry
                                                               : c.gas_entry - c.gas_exit);
    return out;
}

std::map<Address, std::vector<Word256>> collect_flow_points(
    const std::vector<ObservationSet>& train, bool inbound) {
    std::map<Address, std::vector<Word256>> out;
    for (const ObservationSet& obs : train)
        for (const FlowEvent& f : obs.flows)
            if (f.inbound == inbound) out[f.token].push_back(f.amount);
    return out;
}

struct RatioPoints {
    std::map<Address, std::vector<Rational>> byToken;
    std::set<Address> unreliable;
};

RatioPoints collect_ratio_points(const std::vector<ObservationSet>& train, bool inbound) {
    RatioPoints out;
    for (const ObservationSet& obs : train) {
        for (const Address& t : obs.unreliable_tokens) out.unreliable.insert(t);
        for (const FlowEvent& f : obs.flows) {
            if (f.inbound != inbound) continue;
            auto it = obs.pre_balances.find(f.token);
            if (it == obs.pre_balances.end() || it->second == 0) continue;
            out.byToken[f.token].push_back(word_to_rational(f.amount) /
                                           word_to_rational(it->second));
        }
    }
    return out;
}

std::map<size_t, std::vector<Word256>> collect_oracle_prices(
    const std::vector<ObservationSet>& train) {
    std::map<size_t, std::vector<Word256>> out;
    for (const ObservationSet& obs : train)
        for (const OracleObs& o : obs.oracle) out[o.oracle_index].push_back(o.price);
    return out;
}

std::vector<InvariantInstance> token_bound_instances(
    TemplateId id, const ExtractionConfig& cfg,
    const std::map<Address, std::vector<Word256>>& points) {
    std::set<Address> tokens = cfg.tokens;
    tokens.insert(ether_address());
    std::vector<InvariantInstance> out;
    for (const Address& t : tokens) {
        auto it = points.find(t);
        static const std::vector<Word256> kNone;
        out.push_back(bound_instance(
            id, token_location(t), it == points.end() ? kNone : it->second,
            [](InvariantInstance* inst, const std::vector<Word256>& pts) {
                inst->params.value_bound = *std::max_element(pts.begin(), pts.end());
            }));
    }
    return out;
}

std::vector<InvariantInstance> ratio_bound_instances(TemplateId id,
                                                     const ExtractionConfig& cfg,
                                                     const RatioPoints& points) {
    std::set<Address> tokens = cfg.tokens;
    tokens.insert(ether_address());
    std::vector<InvariantInstance> out;
    for (const Address& t : tokens) {
        if (points.unreliable.count(t)) {
            out.push_back(make_instance(id, token_location(t), InstanceStatus::kNotApplicable));
            continue;
        }
        auto it = points.byToken.find(t);
        static const std::vector<Rational> kNone;
        out.push_back(bound_instance(
            id, token_location(t), it == points.byToken.end() ? kNone : it->second,
            [](InvariantInstance* inst, const std::vector<Rational>& pts) {
                std::vector<Rational> kept = z_filter(pts);
                inst->params.ratio_bound = *std::max_element(kept.begin(), kept.end());
            }));
    }
    return out;
}

std::vector<InvariantInstance> storage_bound_instances(
    TemplateId id, const std::optional<std::string>& name,
    const std::vector<ObservationSet>& train) {
    if (!name)
        return {make_instance(id, kContractWide, InstanceStatus::kNotApplicable)};
    std::vector<Word256> points;
    for (const ObservationSet& obs : train) {
        auto it = obs.storage_final.find(*name);
        if (it != obs.storage_final.end()) points.push_back(it->second);
    }
    InvariantInstance inst = bound_instance(
        id, kContractWide, points, [](InvariantInstance* out, const std::vector<Word256>& pts) {
            out->params.value_bound = *std::max_element(pts.begin(), pts.end());
        });
    inst.params.storage_name = *name;
    return {inst};
}

// Emits the placeholder record when a per-location template discovered no
// locations at all, so every template appears in the manifest.
std::vector<InvariantInstance> or_placeholder(TemplateId id,
                                              std::vector<InvariantInstance> instances) {
    if (instances.empty())
        instances.push_back(make_instance(id, kContractWide, InstanceStatus::kInsufficientData));
    return instances;
}

}  // namespace

const char* to_string(TemplateId id) { return kTemplateNames[static_cast<size_t>(id)]; }

std::optional<TemplateId> template_from_string(const std::string& name) {
    for (size_t i = 0; i < kTemplateCount; ++i)
        if (name == kTemplateNames[i]) return static_cast<TemplateId>(i);
    return std::nullopt;
}

const std::vector<TemplateId>& all_templates() {
    static const std::vector<TemplateId> ids = [] {
        std::vector<TemplateId> v;
        for (size_t i = 0; i < kTemplateCount; ++i) v.push_back(static_cast<TemplateId>(i));
        return v;
    }();
    return ids;
}

const char* to_string(InstanceStatus s) {
    switch (s) {
        case InstanceStatus::kApplied: return "applied";
        case InstanceStatus::kNotApplicable: return "notApplicable";
        case InstanceStatus::kViolatedInTraining: return "violatedInTraining";
        case InstanceStatus::kInsufficientData: return "insufficientData";
    }
    return "?";
}

std::optional<InstanceStatus> status_from_string(const std::string& name) {
    for (InstanceStatus s : {InstanceStatus::kApplied, InstanceStatus::kNotApplicable,
                             InstanceStatus::kViolatedInTraining,
                             InstanceStatus::kInsufficientData})
        if (name == to_string(s)) return s;
    return std::nullopt;
}

std::string selector_location(const std::optional<Selector>& sel) {
    return sel ? to_string(*sel) : "fallback";
}

std::string token_location(const Address& token) {
    if (token == ether_address()) return "token:ether";
    return std::string("token:") + to_string(token);
}

std::string oracle_location(size_t index) { return "oracle:" + std::to_string(index); }

std::string mapping_location(const std::string& pattern) { return "map:" + pattern; }

std::string dataflow_instance_location(const std::string& df_loc) { return "df:" + df_loc; }

Rational word_to_rational(const Word256& w) {
    return Rational(w.convert_to<mp::cpp_int>());
}

std::string rational_to_string(const Rational& r) { return r.str(); }

Rational rational_from_string(const std::string& s) {
    auto slash = s.find('/');
    try {
        if (slash == std::string::npos) return Rational(mp::cpp_int(s));
        mp::cpp_int num(s.substr(0, slash));
        mp::cpp_int den(s.substr(slash + 1));
        if (den == 0) throw CorruptCache("rational with zero denominator: " + s);
        Rational r(num);
        r /= Rational(den);
        return r;
    } catch (const std::runtime_error&) {
        throw;
    } catch (const std::exception&) {
        throw CorruptCache("unparseable rational: " + s);
    }
}

std::vector<Rational> z_filter(const std::vector<Rational>& points) {
    if (points.size() < 2) return points;
    Rational n(static_cast<unsigned>(points.size()));
    Rational sum = 0;
    for (const Rational& p : points) sum += p;
    Rational mean = sum / n;
    Rational var = 0;
    for (const Rational& p : points) var += (p - mean) * (p - mean);
    var /= n;
    if (var == 0) return points;
    std::vector<Rational> kept;
    for (const Rational& p : points)
        if ((p - mean) * (p - mean) <= 9 * var) kept.push_back(p);
    return kept;
}

InvariantInstance infer_hypothesis(TemplateId id, const std::vector<ObservationSet>& train,
                                   const EnterExitSets& roles) {
    switch (id) {
        case TemplateId::kEOA: {
            bool any_call = false, violated = false;
            for (const ObservationSet& obs : train)
                for (const TargetCallObs& c : obs.calls) {
                    any_call = true;
                    if (c.caller != c.origin) violated = true;
                }
            if (!any_call)
                return make_instance(id, kContractWide, InstanceStatus::kInsufficientData);
            return make_instance(id, kContractWide,
                                 violated ? InstanceStatus::kViolatedInTraining
                                          : InstanceStatus::kApplied);
        }
        case TemplateId::kRE: {
            bool any_call = false, violated = false;
            for (const ObservationSet& obs : train) {
                if (!obs.calls.empty()) any_call = true;
                if (obs.max_nesting >= 2) violated = true;
            }
            if (!any_call)
                return make_instance(id, kContractWide, InstanceStatus::kInsufficientData);
            return make_instance(id, kContractWide,
                                 violated ? InstanceStatus::kViolatedInTraining
                                          : InstanceStatus::kApplied);
        }
        case TemplateId::kSB:
        case TemplateId::kOB: {
            if (roles.enter.empty() || roles.exit_set.empty())
                return make_instance(id, kContractWide, InstanceStatus::kNotApplicable);
            size_t violations =
                simulate_same_block(train, roles, /*use_origin=*/id == TemplateId::kOB);
            return make_instance(id, kContractWide,
                                 violations > 0 ? InstanceStatus::kViolatedInTraining
                                                : InstanceStatus::kApplied);
        }
        default:
            throw StateCorrupt(std::string("infer_hypothesis on template ") + to_string(id));
    }
}

std::vector<InvariantInstance> infer_roles(TemplateId id,
                                           const std::vector<ObservationSet>& train) {
    bool use_origin = id == TemplateId::kOO || id == TemplateId::kOM;
    bool single = id == TemplateId::kSO || id == TemplateId::kOO;
    std::map<std::string, std::set<Address>> byloc;
    for (const ObservationSet& obs : train)
        for (const TargetCallObs& c : obs.calls)
            byloc[selector_location(c.selector)].insert(use_origin ? c.origin : c.caller);

    std::vector<InvariantInstance> out;
    for (const auto& [loc, who] : byloc) {
        if (single) {
            if (who.size() == 1) {
                InvariantInstance inst = make_instance(id, loc, InstanceStatus::kApplied);
                inst.params.owner = *who.begin();
                out.push_back(inst);
            } else {
                out.push_back(make_instance(id, loc, InstanceStatus::kViolatedInTraining));
            }
        } else {
            if (who.size() >= 2 && who.size() <= 5) {
                InvariantInstance inst = make_instance(id, loc, InstanceStatus::kApplied);
                inst.params.managers.assign(who.begin(), who.end());
                out.push_back(inst);
            } else if (who.size() > 5) {
                out.push_back(make_instance(id, loc, InstanceStatus::kViolatedInTraining));
            } else {
                // one distinct address: no manager set to learn beyond SO/OO
                out.push_back(make_instance(id, loc, InstanceStatus::kInsufficientData));
            }
        }
    }
    return or_placeholder(id, std::move(out));
}

std::vector<InvariantInstance> infer_bounds(TemplateId id,
                                            const std::vector<ObservationSet>& train,
                                            const ExtractionConfig& cfg) {
    auto max_word = [](InvariantInstance* inst, const std::vector<Word256>& pts) {
        inst->params.value_bound = *std::max_element(pts.begin(), pts.end());
    };

    switch (id) {
        case TemplateId::kGS:
        case TemplateId::kGC: {
            std::vector<InvariantInstance> out;
            for (const auto& [loc, pts] : collect_gas_points(train, id == TemplateId::kGS))
                out.push_back(bound_instance(
                    id, loc, pts, [](InvariantInstance* inst, const std::vector<uint64_t>& p) {
                        inst->params.gas_bound = *std::max_element(p.begin(), p.end());
                    }));
            return or_placeholder(id, std::move(out));
        }
        case TemplateId::kOR: {
            if (cfg.oracles.empty())
                return {make_instance(id, kContractWide, InstanceStatus::kNotApplicable)};
            auto prices = collect_oracle_prices(train);
            std::vector<InvariantInstance> out;
            for (size_t i = 0; i < cfg.oracles.size(); ++i) {
                static const std::vector<Word256> kNone;
                auto it = prices.find(i);
                out.push_back(bound_instance(
                    id, oracle_location(i), it == prices.end() ? kNone : it->second,
                    [](InvariantInstance* inst, const std::vector<Word256>& p) {
                        Word256 lo = *std::min_element(p.begin(), p.end());
                        Word256 hi = *std::max_element(p.begin(), p.end());
                        inst->params.price_lower = word_to_rational(lo) * Rational(4) / 5;
                        inst->params.price_upper = word_to_rational(hi) * Rational(6) / 5;
                    }));
            }
            return out;
        }
        case TemplateId::kOD: {
            if (cfg.oracles.empty())
                return {make_instance(id, kContractWide, InstanceStatus::kNotApplicable)};
            auto prices = collect_oracle_prices(train);
            std::vector<InvariantInstance> out;
            for (size_t i = 0; i < cfg.oracles.size(); ++i) {
                std::vector<Rational> devs;
                auto it = prices.find(i);
                if (it != prices.end()) {
                    const std::vector<Word256>& seq = it->second;
                    for (size_t k = 0; k + 1 < seq.size(); ++k) {
                        if (seq[k] == 0) continue;  // no ratio from a zero base
                        Rational oldp = word_to_rational(seq[k]);
                        Rational dev = (word_to_rational(seq[k + 1]) - oldp) / oldp;
                        devs.push_back(dev < 0 ? -dev : dev);
                    }
                }
                out.push_back(bound_instance(
                    id, oracle_location(i), devs,
                    [](InvariantInstance* inst, const std::vector<Rational>& p) {
                        inst->params.price_deviation = *std::max_element(p.begin(), p.end());
                    }));
            }
            return out;
        }
        case TemplateId::kTSU:
            return storage_bound_instances(id, cfg.total_supply_name, train);
        case TemplateId::kTBU:
            return storage_bound_instances(id, cfg.total_borrow_name, train);
        case TemplateId::kTIU:
            return token_bound_instances(id, cfg, collect_flow_points(train, true));
        case TemplateId::kTOU:
            return token_bound_instances(id, cfg, collect_flow_points(train, false));
        case TemplateId::kTIRU:
            return ratio_bound_instances(id, cfg, collect_ratio_points(train, true));
        case TemplateId::kTORU:
            return ratio_bound_instances(id, cfg, collect_ratio_points(train, false));
        case TemplateId::kMU: {
            std::map<std::string, std::vector<Word256>> byloc;
            for (const ObservationSet& obs : train)
                for (const MappingStoreObs& s : obs.mapping_stores)
                    byloc[mapping_location(s.pattern)].push_back(s.value);
            std::vector<InvariantInstance> out;
            for (const auto& [loc, pts] : byloc)
                out.push_back(bound_instance(id, loc, pts, max_word));
            return or_placeholder(id, std::move(out));
        }
        case TemplateId::kCVU: {
            std::map<std::string, std::vector<Word256>> byloc;
            for (const ObservationSet& obs : train)
                for (const TargetCallObs& c : obs.calls)
                    byloc[selector_location(c.selector)].push_back(c.call_value);
            std::vector<InvariantInstance> out;
            for (const auto& [loc, pts] : byloc)
                out.push_back(bound_instance(id, loc, pts, max_word));
            return or_placeholder(id, std::move(out));
        }
        case TemplateId::kDFU:
        case TemplateId::kDFL: {
            std::map<std::string, std::vector<Word256>> byloc;
            for (const ObservationSet& obs : train)
                for (const DataflowObs& d : obs.dataflow)
                    byloc[dataflow_instance_location(d.location)].push_back(d.value);
            std::vector<InvariantInstance> out;
            for (const auto& [loc, pts] : byloc) {
                if (id == TemplateId::kDFU) {
                    out.push_back(bound_instance(id, loc, pts, max_word));
                } else {
                    out.push_back(bound_instance(
                        id, loc, pts, [](InvariantInstance* inst, const std::vector<Word256>& p) {
                            inst->params.value_bound = *std::min_element(p.begin(), p.end());
                        }));
                }
            }
            return or_placeholder(id, std::move(out));
        }
        default:
            throw StateCorrupt(std::string("infer_bounds on template ") + to_string(id));
    }
}

std::vector<InvariantInstance> infer_lastupdate(const std::vector<ObservationSet>& train) {
    std::map<std::string, std::vector<uint64_t>> blocks;
    for (const ObservationSet& obs : train)
        for (const TargetCallObs& c : obs.calls)
            if (!c.reverted) blocks[selector_location(c.selector)].push_back(obs.block_number);

    std::vector<InvariantInstance> out;
    for (const auto& [loc, seq] : blocks) {
        if (seq.size() < 2) {
            out.push_back(
                make_instance(TemplateId::kLU, loc, InstanceStatus::kInsufficientData));
            continue;
        }
        uint64_t min_gap = 0;
        bool zero_gap = false, first = true;
        for (size_t i = 0; i + 1 < seq.size(); ++i) {
            uint64_t gap = seq[i + 1] - seq[i];
            if (gap == 0) zero_gap = true;
            if (first || gap < min_gap) min_gap = gap;
            first = false;
        }
        if (zero_gap) {
            out.push_back(
                make_instance(TemplateId::kLU, loc, InstanceStatus::kViolatedInTraining));
        } else {
            InvariantInstance inst =
                make_instance(TemplateId::kLU, loc, InstanceStatus::kApplied);
            inst.params.nb_blocks = min_gap;
            out.push_back(inst);
        }
    }
    return or_placeholder(TemplateId::kLU, std::move(out));
}

Manifest infer_invariants(const std::vector<ObservationSet>& train,
                          const ExtractionConfig& cfg, const EnterExitSets& roles,
                          const std::set<TemplateId>& enabled) {
    Manifest m;
    m.target = cfg.target;
    m.roles = roles;
    for (TemplateId id : all_templates()) {
        if (!enabled.count(id)) continue;
        switch (id) {
            case TemplateId::kEOA:
            case TemplateId::kSB:
            case TemplateId::kOB:
            case TemplateId::kRE:
                m.instances.push_back(infer_hypothesis(id, train, roles));
                break;
            case TemplateId::kSO:
            case TemplateId::kSM:
            case TemplateId::kOO:
            case TemplateId::kOM: {
                auto v = infer_roles(id, train);
                m.instances.insert(m.instances.end(), v.begin(), v.end());
                break;
            }
            case TemplateId::kLU: {
                auto v = infer_lastupdate(train);
                m.instances.insert(m.instances.end(), v.begin(), v.end());
                break;
            }
            default: {
                auto v = infer_bounds(id, train, cfg);
                m.instances.insert(m.instances.end(), v.begin(), v.end());
                break;
            }
        }
    }
    return m;
}

nlohmann::json manifest_to_json(const Manifest& m) {
    nlohmann::json doc;
    doc["target"] = to_string(m.target);
    nlohmann::json enter = nlohmann::json::array(), exit_ = nlohmann::json::array();
    for (const Selector& s : m.roles.enter) enter.push_back(to_string(s));
    for (const Selector& s : m.roles.exit_set) exit_.push_back(to_string(s));
    doc["enterSelectors"] = enter;
    doc["exitSelectors"] = exit_;

    nlohmann::json instances = nlohmann::json::array();
    for (const InvariantInstance& inst : m.instances) {
        nlohmann::json j;
        j["template"] = to_string(inst.template_id);
        j["location"] = inst.location;
        j["status"] = to_string(inst.status);
        nlohmann::json params = nlohmann::json::object();
        const InstanceParams& p = inst.params;
        if (p.owner) params["owner"] = to_string(*p.owner);
        if (!p.managers.empty()) {
            nlohmann::json arr = nlohmann::json::array();
            for (const Address& a : p.managers) arr.push_back(to_string(a));
            params["managers"] = arr;
        }
        if (p.nb_blocks) params["nbBlocks"] = *p.nb_blocks;
        if (p.gas_bound) params["gasBound"] = *p.gas_bound;
        if (p.price_lower) params["priceLower"] = rational_to_string(*p.price_lower);
        if (p.price_upper) params["priceUpper"] = rational_to_string(*p.price_upper);
        if (p.price_deviation)
            params["priceDeviation"] = rational_to_string(*p.price_deviation);
        if (p.ratio_bound) params["ratioBound"] = rational_to_string(*p.ratio_bound);
        if (p.value_bound) params["valueBound"] = p.value_bound->str();
        if (p.storage_name) params["storageName"] = *p.storage_name;
        j["params"] = params;
        instances.push_back(j);
    }
    doc["instances"] = instances;
    return doc;
}

Manifest manifest_from_json(const nlohmann::json& doc) {
    Manifest m;
    try {
        m.target = parse_address(doc.at("target").get<std::string>());
        for (const auto& s : doc.at("enterSelectors"))
            m.roles.enter.insert(parse_selector(s.get<std::string>()));
        for (const auto& s : doc.at("exitSelectors"))
            m.roles.exit_set.insert(parse_selector(s.get<std::string>()));
        for (const auto& j : doc.at("instances")) {
            InvariantInstance inst;
            auto id = template_from_string(j.at("template").get<std::string>());
            auto status = status_from_string(j.at("status").get<std::string>());
            if (!id || !status)
                throw CorruptCache("manifest names an unknown template or status");
            inst.template_id = *id;
            inst.status = *status;
            inst.location = j.at("location").get<std::string>();
            const nlohmann::json& params = j.at("params");
            InstanceParams& p = inst.params;
            if (params.contains("owner"))
                p.owner = parse_address(params["owner"].get<std::string>());
            if (params.contains("managers"))
                for (const auto& a : params["managers"])
                    p.managers.push_back(parse_address(a.get<std::string>()));
            if (params.contains("nbBlocks")) p.nb_blocks = params["nbBlocks"].get<uint64_t>();
            if (params.contains("gasBound")) p.gas_bound = params["gasBound"].get<uint64_t>();
            if (params.contains("priceLower"))
                p.price_lower = rational_from_string(params["priceLower"].get<std::string>());
            if (params.contains("priceUpper"))
                p.price_upper = rational_from_string(params["priceUpper"].get<std::string>());
            if (params.contains("priceDeviation"))
                p.price_deviation =
                    rational_from_string(params["priceDeviation"].get<std::string>());
            if (params.contains("ratioBound"))
                p.ratio_bound = rational_from_string(params["ratioBound"].get<std::string>());
            if (params.contains("valueBound"))
                p.value_bound = Word256(params["valueBound"].get<std::string>());
            if (params.contains("storageName"))
                p.storage_name = params["storageName"].get<std::string>();
            m.instances.push_back(std::move(inst));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CorruptCache(std::string("manifest does not parse: ") + e.what());
    }
    return m;
}

}  // namespace traceguard
