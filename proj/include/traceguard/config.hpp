#pragma once

#include <filesystem>
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

struct ProviderConfig {
    enum class Kind { kFixtures, kRpc };
    Kind kind = Kind::kFixtures;
    std::filesystem::path fixtures_dir;
    std::string host = "127.0.0.1";
    int port = 8545;
    std::string path = "/";
    size_t batch_size = 16;
};

struct AnalysisConfig {
    Address target{};
    ProviderConfig provider;
    std::filesystem::path cache_dir = "cache";
    std::filesystem::path out_dir = "out";
    std::filesystem::path descriptors_dir;  // per-address *.layout.json / *.abi.json
    Rational train_fraction = Rational(7, 10);
    std::vector<Address> tokens;
    std::vector<OracleEndpoint> oracles;
    std::optional<std::string> total_supply_name;
    std::optional<std::string> total_borrow_name;
    std::map<Selector, std::string> enter_exit_overrides;  // enter | exit | both | none
    std::set<TemplateId> templates;                        // enabled templates
    std::vector<TemplateId> combination_templates;
    std::set<Hash256> exploits;
    size_t parallelism = 4;
};

// Exact fraction from a decimal string ("0.7" -> 7/10) or "p/q" form.
// Bare JSON numbers are rejected upstream; float rounding would leak into bounds.
Rational parse_decimal_fraction(const std::string& text);

// Relative paths in the document resolve against base_dir (the config file's
// directory). Violations raise ConfigMissing.
AnalysisConfig config_from_json(const nlohmann::json& doc,
                                const std::filesystem::path& base_dir);
AnalysisConfig load_config(const std::filesystem::path& path);

ExtractionConfig extraction_config(const AnalysisConfig& cfg);

}  // namespace traceguard
