#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "traceguard/common.hpp"
#include "traceguard/trace.hpp"

namespace traceguard {

struct CorpusRecord {
    TxMetadata meta;
    std::filesystem::path trace_path;  // verified cache wrapper file
    bool exploit = false;
};

// Transactions touching one target, ascending by (block number, index in block).
struct CorpusIndex {
    Address target{};
    std::vector<CorpusRecord> records;
};

// Source of transaction listings and raw trace text. Implementations count
// their remote round trips so cache behaviour is observable.
class TraceProvider {
 public:
    virtual ~TraceProvider() = default;
    virtual std::vector<TxMetadata> list_transactions(const Address& target) = 0;
    virtual std::string fetch_trace(const Hash256& tx_hash) = 0;
    virtual std::vector<std::string> fetch_traces(const std::vector<Hash256>& batch);
    virtual size_t remote_requests() const { return 0; }
};

// Serves a directory holding index.json plus one trace file per transaction.
class FixtureProvider : public TraceProvider {
 public:
    explicit FixtureProvider(std::filesystem::path dir);
    std::vector<TxMetadata> list_transactions(const Address& target) override;
    std::string fetch_trace(const Hash256& tx_hash) override;

 private:
    std::filesystem::path dir_;
    Address target_{};
    std::vector<TxMetadata> listing_;
    std::map<Hash256, std::filesystem::path> trace_files_;
};

// JSON-RPC client: trace_list(address) for the listing,
// debug_traceTransaction(txHash) for traces, POSTed in batches.
class RpcProvider : public TraceProvider {
 public:
    RpcProvider(std::string host, int port, std::string path, size_t batch_size);
    std::vector<TxMetadata> list_transactions(const Address& target) override;
    std::string fetch_trace(const Hash256& tx_hash) override;
    std::vector<std::string> fetch_traces(const std::vector<Hash256>& batch) override;
    size_t remote_requests() const override { return requests_; }

 private:
    nlohmann::json post_batch(const nlohmann::json& requests);

    std::string host_;
    int port_;
    std::string path_;
    size_t batch_size_;
    size_t requests_ = 0;
};

// Lists the target's transactions, fills the trace cache for any that are
// missing, and returns the ordered index. A second call over a warm cache
// performs zero remote requests. Duplicate tx hashes, unverifiable cached
// content, or same-block records without an intra-block index raise
// CorruptCache.
CorpusIndex load_corpus(TraceProvider* provider, const Address& target,
                        const std::filesystem::path& cache_dir);

// Reads a cache wrapper written by load_corpus and returns the trace text,
// verifying the stored content hash.
std::string read_cached_trace(const std::filesystem::path& path);

// Chronological split: the first ceil(fraction * N) records train, the rest test.
std::pair<CorpusIndex, CorpusIndex> split_corpus(const CorpusIndex& index,
                                                 const Rational& fraction);

}  // namespace traceguard
