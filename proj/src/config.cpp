#include "traceguard/config.hpp"

#include <fstream>
#include <sstream>

namespace traceguard {
namespace {

bool all_digits(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (c < '0' || c > '9') return false;
    return true;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::string require_string(const nlohmann::json& doc, const char* key) {
    if (!doc.contains(key) || !doc.at(key).is_string())
        throw ConfigMissing(std::string("config field \"") + key + "\" must be a string");
    return doc.at(key).get<std::string>();
}

}  // namespace

Rational parse_decimal_fraction(const std::string& text) {
    auto slash = text.find('/');
    if (slash != std::string::npos) {
        std::string num = text.substr(0, slash), den = text.substr(slash + 1);
        if (!all_digits(num) || !all_digits(den) || den == "0")
            throw ConfigMissing("bad fraction \"" + text + "\"");
        return Rational(mp::cpp_int(num), mp::cpp_int(den));
    }
    auto dot = text.find('.');
    std::string whole = dot == std::string::npos ? text : text.substr(0, dot);
    std::string frac = dot == std::string::npos ? "" : text.substr(dot + 1);
    if (whole.empty()) whole = "0";
    if (!all_digits(whole) || (!frac.empty() && !all_digits(frac)))
        throw ConfigMissing("bad decimal fraction \"" + text + "\"");
    mp::cpp_int scale = 1;
    for (size_t i = 0; i < frac.size(); ++i) scale *= 10;
    mp::cpp_int num = mp::cpp_int(whole) * scale + (frac.empty() ? 0 : mp::cpp_int(frac));
    return Rational(num, scale);
}

AnalysisConfig config_from_json(const nlohmann::json& doc,
                                const std::filesystem::path& base_dir) {
    AnalysisConfig cfg;
    try {
        cfg.target = parse_address(require_string(doc, "target"));

        if (!doc.contains("provider") || !doc.at("provider").is_object())
            throw ConfigMissing("config needs a \"provider\" object");
        const nlohmann::json& prov = doc.at("provider");
        std::string kind = require_string(prov, "kind");
        if (kind == "fixtures") {
            cfg.provider.kind = ProviderConfig::Kind::kFixtures;
            cfg.provider.fixtures_dir = resolve(base_dir, require_string(prov, "dir"));
        } else if (kind == "rpc") {
            cfg.provider.kind = ProviderConfig::Kind::kRpc;
            cfg.provider.host = require_string(prov, "host");
            cfg.provider.port = prov.at("port").get<int>();
            if (prov.contains("path")) cfg.provider.path = require_string(prov, "path");
            if (prov.contains("batchSize"))
                cfg.provider.batch_size = prov.at("batchSize").get<size_t>();
            if (cfg.provider.batch_size == 0)
                throw ConfigMissing("provider batchSize must be positive");
        } else {
            throw ConfigMissing("provider kind must be \"fixtures\" or \"rpc\", got \"" +
                                kind + "\"");
        }

        if (doc.contains("cacheDir"))
            cfg.cache_dir = resolve(base_dir, require_string(doc, "cacheDir"));
        else
            cfg.cache_dir = base_dir / "cache";
        if (doc.contains("outDir"))
            cfg.out_dir = resolve(base_dir, require_string(doc, "outDir"));
        else
            cfg.out_dir = base_dir / "out";
        if (doc.contains("descriptorsDir"))
            cfg.descriptors_dir = resolve(base_dir, require_string(doc, "descriptorsDir"));

        if (doc.contains("trainFraction")) {
            if (!doc.at("trainFraction").is_string())
                throw ConfigMissing(
                    "trainFraction must be a decimal string (exactness); got a bare number");
            cfg.train_fraction = parse_decimal_fraction(require_string(doc, "trainFraction"));
        }
        if (cfg.train_fraction <= 0 || cfg.train_fraction >= 1)
            throw ConfigMissing("trainFraction must lie strictly between 0 and 1");

        if (doc.contains("tokens"))
            for (const nlohmann::json& t : doc.at("tokens"))
                cfg.tokens.push_back(parse_address(t.get<std::string>()));

        if (doc.contains("oracles"))
            for (const nlohmann::json& o : doc.at("oracles")) {
                OracleEndpoint ep;
                ep.addr = parse_address(require_string(o, "address"));
                ep.selector = parse_selector(require_string(o, "selector"));
                if (o.contains("returnWord")) ep.return_word = o.at("returnWord").get<size_t>();
                cfg.oracles.push_back(ep);
            }

        if (doc.contains("specialStorage")) {
            const nlohmann::json& ss = doc.at("specialStorage");
            if (ss.contains("totalSupply"))
                cfg.total_supply_name = require_string(ss, "totalSupply");
            if (ss.contains("totalBorrow"))
                cfg.total_borrow_name = require_string(ss, "totalBorrow");
        }

        if (doc.contains("enterExitOverrides"))
            for (const auto& [key, value] : doc.at("enterExitOverrides").items()) {
                std::string mode = value.get<std::string>();
                if (mode != "enter" && mode != "exit" && mode != "both" && mode != "none")
                    throw ConfigMissing("enter/exit override for " + key +
                                        " must be enter, exit, both, or none");
                cfg.enter_exit_overrides[parse_selector(key)] = mode;
            }

        if (doc.contains("templates")) {
            for (const nlohmann::json& t : doc.at("templates")) {
                auto id = template_from_string(t.get<std::string>());
                if (!id)
                    throw ConfigMissing("unknown template \"" + t.get<std::string>() + "\"");
                cfg.templates.insert(*id);
            }
            if (cfg.templates.empty()) throw ConfigMissing("templates list is empty");
        } else {
            for (TemplateId id : all_templates()) cfg.templates.insert(id);
        }

        if (doc.contains("combinationTemplates")) {
            for (const nlohmann::json& t : doc.at("combinationTemplates")) {
                auto id = template_from_string(t.get<std::string>());
                if (!id)
                    throw ConfigMissing("unknown template \"" + t.get<std::string>() + "\"");
                cfg.combination_templates.push_back(*id);
            }
        } else {
            cfg.combination_templates = {TemplateId::kEOA, TemplateId::kGC, TemplateId::kOB,
                                         TemplateId::kDFU};
        }

        if (doc.contains("exploits"))
            for (const nlohmann::json& h : doc.at("exploits"))
                cfg.exploits.insert(parse_hash(h.get<std::string>()));

        if (doc.contains("parallelism")) {
            cfg.parallelism = doc.at("parallelism").get<size_t>();
            if (cfg.parallelism == 0) throw ConfigMissing("parallelism must be positive");
        }
    } catch (const ConfigMissing&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigMissing(std::string("bad config: ") + e.what());
    }
    return cfg;
}

AnalysisConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigMissing("cannot read config file " + path.string());
    std::ostringstream os;
    os << is.rdbuf();
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(os.str());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigMissing("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(doc, path.parent_path());
}

ExtractionConfig extraction_config(const AnalysisConfig& cfg) {
    ExtractionConfig out;
    out.target = cfg.target;
    out.tokens.insert(cfg.tokens.begin(), cfg.tokens.end());
    out.oracles = cfg.oracles;
    out.total_supply_name = cfg.total_supply_name;
    out.total_borrow_name = cfg.total_borrow_name;
    return out;
}

}  // namespace traceguard
