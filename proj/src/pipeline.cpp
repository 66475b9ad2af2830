#include "traceguard/pipeline.hpp"

#include <atomic>
#include <fstream>
#include <optional>
#include <sstream>

#include "traceguard/abi.hpp"
#include "traceguard/keccak.hpp"
#include "traceguard/parallel.hpp"

namespace traceguard {
namespace {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CorruptCache("cannot read " + path.string());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

void write_atomic(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        os << content;
        if (!os) throw CorruptCache("cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::unique_ptr<TraceProvider> make_provider(const AnalysisConfig& cfg) {
    if (cfg.provider.kind == ProviderConfig::Kind::kFixtures)
        return std::make_unique<FixtureProvider>(cfg.provider.fixtures_dir);
    return std::make_unique<RpcProvider>(cfg.provider.host, cfg.provider.port,
                                         cfg.provider.path, cfg.provider.batch_size);
}

struct Descriptors {
    AbiCatalog catalog;
    StorageLayout layout;
    std::string fingerprint;  // hex digest over config + descriptor content
};

Descriptors load_descriptors(const AnalysisConfig& cfg) {
    Descriptors desc;
    nlohmann::json fp;
    fp["target"] = to_string(cfg.target);
    nlohmann::json tokens = nlohmann::json::array();
    for (const Address& t : cfg.tokens) tokens.push_back(to_string(t));
    fp["tokens"] = tokens;
    nlohmann::json oracles = nlohmann::json::array();
    for (const OracleEndpoint& o : cfg.oracles) {
        nlohmann::json j;
        j["address"] = to_string(o.addr);
        j["selector"] = to_string(o.selector);
        j["returnWord"] = o.return_word;
        oracles.push_back(j);
    }
    fp["oracles"] = oracles;
    fp["totalSupply"] = cfg.total_supply_name ? nlohmann::json(*cfg.total_supply_name)
                                              : nlohmann::json();
    fp["totalBorrow"] = cfg.total_borrow_name ? nlohmann::json(*cfg.total_borrow_name)
                                              : nlohmann::json();

    nlohmann::json abis = nlohmann::json::object();
    std::string layout_text;
    if (!cfg.descriptors_dir.empty() && fs::exists(cfg.descriptors_dir)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(cfg.descriptors_dir))
            if (entry.is_regular_file()) files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const fs::path& file : files) {
            std::string name = file.filename().string();
            auto ends_with = [&](const char* suffix) {
                std::string s(suffix);
                return name.size() > s.size() && name.compare(name.size() - s.size(),
                                                              s.size(), s) == 0;
            };
            try {
                if (ends_with(".abi.json")) {
                    Address addr = parse_address(name.substr(0, name.size() - 9));
                    std::string text = read_file(file);
                    desc.catalog.load_descriptor(addr, nlohmann::json::parse(text));
                    abis[to_string(addr)] = text;
                } else if (ends_with(".layout.json")) {
                    Address addr = parse_address(name.substr(0, name.size() - 12));
                    if (addr != cfg.target) continue;  // only the target's slots resolve
                    layout_text = read_file(file);
                    desc.layout = StorageLayout::load_descriptor(
                        nlohmann::json::parse(layout_text));
                }
            } catch (const nlohmann::json::exception& e) {
                throw ConfigMissing("bad descriptor " + file.string() + ": " + e.what());
            }
        }
    }
    fp["abis"] = abis;
    fp["layout"] = layout_text;
    std::string dump = fp.dump();
    desc.fingerprint = to_string(keccak256(Bytes(dump.begin(), dump.end())));
    return desc;
}

size_t train_split_count(size_t total, const Rational& fraction) {
    mp::cpp_int count =
        (mp::numerator(fraction) * total + mp::denominator(fraction) - 1) /
        mp::denominator(fraction);
    size_t n = count < 0 ? 0 : static_cast<size_t>(count);
    return std::min(n, total);
}

nlohmann::json load_manifest_json(const AnalysisConfig& cfg) {
    fs::path path = cfg.out_dir / "manifest.json";
    if (!fs::exists(path))
        throw CorruptCache("no manifest at " + path.string() + "; run infer first");
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw CorruptCache("manifest " + path.string() + " is not valid JSON: " + e.what());
    }
}

std::vector<Verdict> checked_test_split(const AnalysisConfig& cfg,
                                        const ProcessedCorpus& corpus,
                                        const Manifest& manifest) {
    std::vector<ObservationSet> test = test_observations(corpus);
    std::vector<Verdict> verdicts = check_corpus(test, manifest);
    for (Verdict& v : verdicts) v.exploit = cfg.exploits.count(v.tx_hash) != 0;
    return verdicts;
}

}  // namespace

ProcessedCorpus process_corpus(const AnalysisConfig& cfg) {
    auto provider = make_provider(cfg);
    ProcessedCorpus out;
    out.index = load_corpus(provider.get(), cfg.target, cfg.cache_dir);
    if (out.index.records.empty())
        throw EmptyCorpus("no transactions recorded for " + to_string(cfg.target));
    for (CorpusRecord& rec : out.index.records)
        rec.exploit = cfg.exploits.count(rec.meta.tx_hash) != 0;
    out.train_count = train_split_count(out.index.records.size(), cfg.train_fraction);

    Descriptors desc = load_descriptors(cfg);
    ExtractionConfig ext = extraction_config(cfg);
    TaintConfig taint_cfg;
    taint_cfg.target = cfg.target;
    taint_cfg.tokens = ext.tokens;

    fs::path parsed_dir = cfg.cache_dir / "parsed";
    fs::create_directories(parsed_dir);

    size_t n = out.index.records.size();
    std::vector<std::optional<ObservationSet>> slots(n);
    std::vector<std::optional<std::string>> failures(n);
    std::atomic<size_t> parsed{0}, reused{0};

    parallel_for(n, cfg.parallelism, [&](size_t i) {
        const CorpusRecord& rec = out.index.records[i];
        std::string text = read_cached_trace(rec.trace_path);
        Bytes key_input(text.begin(), text.end());
        key_input.insert(key_input.end(), desc.fingerprint.begin(), desc.fingerprint.end());
        std::string key = to_string(keccak256(key_input));
        fs::path parsed_path =
            parsed_dir / (to_string(rec.meta.tx_hash).substr(2) + ".obs.json");

        if (fs::exists(parsed_path)) {
            // A stale or unreadable derived file is rebuilt, never fatal.
            try {
                nlohmann::json doc = nlohmann::json::parse(read_file(parsed_path));
                if (doc.at("key").get<std::string>() == key) {
                    slots[i] = observation_from_json(doc.at("observations"));
                    ++reused;
                    return;
                }
            } catch (const std::exception&) {
            }
        }
        try {
            std::vector<StructLogEntry> entries = parse_struct_logs(text);
            InvocationTree tree = build_invocation_tree(entries, rec.meta, desc.catalog);
            PreimageDictionary dict;
            collect_preimages(entries, &dict);
            TraceSegment segment = segment_for_target(tree, cfg.target);
            TaintResult taint;
            if (!segment.frames.empty())
                taint = run_taint(segment, entries, dict, desc.layout, taint_cfg);
            slots[i] = extract(tree, segment, entries, rec.meta, taint, dict, desc.layout, ext);
            ++parsed;
            nlohmann::json doc;
            doc["key"] = key;
            doc["observations"] = observation_to_json(*slots[i]);
            write_atomic(parsed_path, doc.dump() + "\n");
        } catch (const MalformedTrace& e) {
            failures[i] = e.what();
        } catch (const TrackerDesync& e) {
            failures[i] = e.what();
        } catch (const AbiMismatch& e) {
            failures[i] = e.what();
        }
    });

    out.outcome.parsed = parsed.load();
    out.outcome.reused = reused.load();
    for (size_t i = 0; i < n; ++i) {
        if (slots[i]) {
            out.record_of.push_back(i);
            out.observations.push_back(std::move(*slots[i]));
        } else if (failures[i]) {
            out.outcome.skips.push_back({out.index.records[i].meta.tx_hash, *failures[i]});
        }
    }
    BalanceLedger ledger;
    run_ledger_pass(out.observations, &ledger);
    return out;
}

std::vector<ObservationSet> train_observations(const ProcessedCorpus& corpus) {
    std::vector<ObservationSet> out;
    for (size_t i = 0; i < corpus.observations.size(); ++i)
        if (corpus.record_of[i] < corpus.train_count) out.push_back(corpus.observations[i]);
    return out;
}

std::vector<ObservationSet> test_observations(const ProcessedCorpus& corpus) {
    std::vector<ObservationSet> out;
    for (size_t i = 0; i < corpus.observations.size(); ++i)
        if (corpus.record_of[i] >= corpus.train_count) out.push_back(corpus.observations[i]);
    return out;
}

ParseOutcome cmd_parse(const AnalysisConfig& cfg) {
    ProcessedCorpus corpus = process_corpus(cfg);
    fs::create_directories(cfg.out_dir);
    nlohmann::json doc;
    doc["parsed"] = corpus.outcome.parsed;
    doc["reused"] = corpus.outcome.reused;
    doc["skipped"] = corpus.outcome.skips.size();
    nlohmann::json skips = nlohmann::json::array();
    for (const SkipEntry& s : corpus.outcome.skips) {
        nlohmann::json j;
        j["txHash"] = to_string(s.tx_hash);
        j["error"] = s.error;
        skips.push_back(j);
    }
    doc["skips"] = skips;
    write_atomic(cfg.out_dir / "parse_report.json", doc.dump(2) + "\n");
    return corpus.outcome;
}

std::filesystem::path cmd_infer(const AnalysisConfig& cfg) {
    ProcessedCorpus corpus = process_corpus(cfg);
    std::vector<ObservationSet> train = train_observations(corpus);
    if (train.empty())
        throw EmptyCorpus("training split holds no parseable transactions");
    EnterExitSets roles = classify_enter_exit(train, cfg.enter_exit_overrides);
    Manifest manifest = infer_invariants(train, extraction_config(cfg), roles, cfg.templates);
    fs::create_directories(cfg.out_dir);
    fs::path path = cfg.out_dir / "manifest.json";
    write_atomic(path, manifest_to_json(manifest).dump(2) + "\n");
    return path;
}

CheckOutcome cmd_check(const AnalysisConfig& cfg) {
    ProcessedCorpus corpus = process_corpus(cfg);
    Manifest manifest = manifest_from_json(load_manifest_json(cfg));
    CheckOutcome out;
    out.verdicts = checked_test_split(cfg, corpus, manifest);
    out.table = aggregate_report(out.verdicts, manifest);
    fs::create_directories(cfg.out_dir);
    out.verdicts_path = cfg.out_dir / "verdicts.json";
    out.report_json_path = cfg.out_dir / "report.json";
    out.report_text_path = cfg.out_dir / "report.txt";
    write_atomic(out.verdicts_path, verdicts_to_json(out.verdicts, manifest).dump(2) + "\n");
    write_atomic(out.report_json_path, report_to_json(out.table).dump(2) + "\n");
    write_atomic(out.report_text_path, render_report(out.table));
    return out;
}

CombineOutcome cmd_combine(const AnalysisConfig& cfg) {
    ProcessedCorpus corpus = process_corpus(cfg);
    Manifest manifest = manifest_from_json(load_manifest_json(cfg));
    std::vector<Verdict> verdicts = checked_test_split(cfg, corpus, manifest);
    std::vector<TxTemplateHolds> holds = template_holds(verdicts, manifest);
    CombineOutcome out;
    out.report = enumerate_combinations(cfg.combination_templates, holds);
    fs::create_directories(cfg.out_dir);
    out.json_path = cfg.out_dir / "combinations.json";
    out.text_path = cfg.out_dir / "combinations.txt";
    write_atomic(out.json_path, combinations_to_json(out.report).dump(2) + "\n");
    write_atomic(out.text_path, render_combinations(out.report));
    return out;
}

std::filesystem::path cmd_report(const AnalysisConfig& cfg) {
    CheckOutcome check = cmd_check(cfg);
    CombineOutcome combine = cmd_combine(cfg);
    std::string summary = render_report(check.table) + "\n" + render_combinations(combine.report);
    fs::path path = cfg.out_dir / "summary.txt";
    write_atomic(path, summary);
    return path;
}

}  // namespace traceguard
