#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "traceguard/checker.hpp"
#include "traceguard/config.hpp"
#include "traceguard/corpus.hpp"

namespace traceguard {

struct SkipEntry {
    Hash256 tx_hash{};
    std::string error;
};

struct ParseOutcome {
    size_t parsed = 0;  // freshly parsed this run
    size_t reused = 0;  // served from the parsed-observation cache
    std::vector<SkipEntry> skips;
};

// Corpus after parsing: observations aligned with the ordered index, minus
// skipped transactions. `train_count` is the split point over index records.
struct ProcessedCorpus {
    CorpusIndex index;
    std::vector<ObservationSet> observations;  // ledger-stamped, corpus order
    std::vector<size_t> record_of;             // observations[i] <- index.records[record_of[i]]
    size_t train_count = 0;
    ParseOutcome outcome;
};

// Parses every transaction (through the cache), runs the balance ledger over
// the full history, and computes the train split. Bad transactions are
// skipped and reported; cache or provider corruption is fatal.
ProcessedCorpus process_corpus(const AnalysisConfig& cfg);

std::vector<ObservationSet> train_observations(const ProcessedCorpus& corpus);
std::vector<ObservationSet> test_observations(const ProcessedCorpus& corpus);

// parse: warm the caches, report counts. Writes <out>/parse_report.json.
ParseOutcome cmd_parse(const AnalysisConfig& cfg);

// infer: train → <out>/manifest.json. Returns the manifest path.
std::filesystem::path cmd_infer(const AnalysisConfig& cfg);

struct CheckOutcome {
    std::vector<Verdict> verdicts;  // test split, corpus order
    ReportTable table;
    std::filesystem::path verdicts_path, report_json_path, report_text_path;
};

// check: manifest + test split → verdicts.json, report.json, report.txt.
CheckOutcome cmd_check(const AnalysisConfig& cfg);

struct CombineOutcome {
    CombinationReport report;
    std::filesystem::path json_path, text_path;
};

// combine: ranked boolean combinations → combinations.json, combinations.txt.
CombineOutcome cmd_combine(const AnalysisConfig& cfg);

// report: consolidated summary.txt from a fresh check + combine run.
std::filesystem::path cmd_report(const AnalysisConfig& cfg);

}  // namespace traceguard
