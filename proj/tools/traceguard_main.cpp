#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "traceguard/pipeline.hpp"

namespace {

struct Flags {
    std::string config_path;
    std::string target;
    std::string train_fraction;
    std::string fixtures;
    std::string cache_dir;
    std::string out_dir;
    std::vector<std::string> templates;
};

void add_common(CLI::App* sub, Flags* flags) {
    sub->add_option("--config", flags->config_path, "analysis config JSON file");
    sub->add_option("--target", flags->target, "target contract address (0x...)");
    sub->add_option("--train-fraction", flags->train_fraction,
                    "training prefix as an exact decimal, e.g. 0.7");
    sub->add_option("--fixtures", flags->fixtures, "offline fixture directory");
    sub->add_option("--cache-dir", flags->cache_dir, "trace and parse cache directory");
    sub->add_option("--templates", flags->templates,
                    "invariant templates to enable (default: all)")
        ->delimiter(',');
    sub->add_option("--out", flags->out_dir, "output directory for reports");
}

traceguard::AnalysisConfig build_config(const Flags& flags) {
    using traceguard::AnalysisConfig;
    using traceguard::ConfigMissing;
    AnalysisConfig cfg;
    bool have_base = !flags.config_path.empty();
    if (have_base) cfg = traceguard::load_config(flags.config_path);

    if (!flags.target.empty()) {
        try {
            cfg.target = traceguard::parse_address(flags.target);
        } catch (const std::exception& e) {
            throw ConfigMissing(std::string("bad --target: ") + e.what());
        }
    } else if (!have_base) {
        throw ConfigMissing("either --config or --target is required");
    }
    if (!flags.fixtures.empty()) {
        cfg.provider.kind = traceguard::ProviderConfig::Kind::kFixtures;
        cfg.provider.fixtures_dir = flags.fixtures;
    } else if (!have_base) {
        throw ConfigMissing("without --config, --fixtures names the corpus source");
    }
    if (!flags.train_fraction.empty()) {
        cfg.train_fraction = traceguard::parse_decimal_fraction(flags.train_fraction);
        if (cfg.train_fraction <= 0 || cfg.train_fraction >= 1)
            throw ConfigMissing("--train-fraction must lie strictly between 0 and 1");
    }
    if (!flags.cache_dir.empty()) cfg.cache_dir = flags.cache_dir;
    if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
    if (!flags.templates.empty()) {
        cfg.templates.clear();
        for (const std::string& name : flags.templates) {
            auto id = traceguard::template_from_string(name);
            if (!id) throw ConfigMissing("unknown template \"" + name + "\"");
            cfg.templates.insert(*id);
        }
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"infers runtime invariants from a contract's transaction history and "
                 "checks them against held-out transactions"};
    app.require_subcommand(1);
    Flags flags;

    CLI::App* parse_cmd =
        app.add_subcommand("parse", "fetch and parse the corpus into the cache");
    CLI::App* infer_cmd =
        app.add_subcommand("infer", "infer invariants from the training split");
    CLI::App* check_cmd =
        app.add_subcommand("check", "check the manifest against the test split");
    CLI::App* combine_cmd =
        app.add_subcommand("combine", "rank boolean combinations of invariants");
    CLI::App* report_cmd =
        app.add_subcommand("report", "write the consolidated summary report");
    for (CLI::App* sub : {parse_cmd, infer_cmd, check_cmd, combine_cmd, report_cmd})
        add_common(sub, &flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        traceguard::AnalysisConfig cfg = build_config(flags);
        if (parse_cmd->parsed()) {
            traceguard::ParseOutcome outcome = traceguard::cmd_parse(cfg);
            std::cout << "parsed " << outcome.parsed << ", reused " << outcome.reused
                      << ", skipped " << outcome.skips.size() << "\n";
            for (const traceguard::SkipEntry& s : outcome.skips)
                std::cout << "  skipped " << to_string(s.tx_hash) << ": " << s.error << "\n";
        } else if (infer_cmd->parsed()) {
            std::filesystem::path path = traceguard::cmd_infer(cfg);
            std::cout << "wrote " << path.string() << "\n";
        } else if (check_cmd->parsed()) {
            traceguard::CheckOutcome outcome = traceguard::cmd_check(cfg);
            std::cout << traceguard::render_report(outcome.table);
            std::cout << "wrote " << outcome.report_text_path.string() << "\n";
        } else if (combine_cmd->parsed()) {
            traceguard::CombineOutcome outcome = traceguard::cmd_combine(cfg);
            std::cout << traceguard::render_combinations(outcome.report);
            std::cout << "wrote " << outcome.text_path.string() << "\n";
        } else if (report_cmd->parsed()) {
            std::filesystem::path path = traceguard::cmd_report(cfg);
            std::cout << "wrote " << path.string() << "\n";
        }
    } catch (const traceguard::ConfigMissing& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
