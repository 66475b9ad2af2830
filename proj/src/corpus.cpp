#include "traceguard/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "traceguard/keccak.hpp"

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

std::string hash_hex(const Hash256& h) { return to_string(h).substr(2); }

Hash256 keccak_of_text(const std::string& text) {
    return keccak256(Bytes(text.begin(), text.end()));
}

}  // namespace

std::vector<std::string> TraceProvider::fetch_traces(const std::vector<Hash256>& batch) {
    std::vector<std::string> out;
    out.reserve(batch.size());
    for (const Hash256& h : batch) out.push_back(fetch_trace(h));
    return out;
}

FixtureProvider::FixtureProvider(fs::path dir) : dir_(std::move(dir)) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(dir_ / "index.json"));
        target_ = parse_address(doc.at("target").get<std::string>());
        for (const nlohmann::json& rec : doc.at("transactions")) {
            TxMetadata meta = parse_tx_metadata(rec);
            listing_.push_back(meta);
            trace_files_[meta.tx_hash] = dir_ / rec.at("trace").get<std::string>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ProviderUnavailable("bad fixture index in " + dir_.string() + ": " + e.what());
    }
}

std::vector<TxMetadata> FixtureProvider::list_transactions(const Address& target) {
    if (target != target_)
        throw ProviderUnavailable("fixture directory " + dir_.string() + " serves " +
                                  to_string(target_) + ", not " + to_string(target));
    return listing_;
}

std::string FixtureProvider::fetch_trace(const Hash256& tx_hash) {
    auto it = trace_files_.find(tx_hash);
    if (it == trace_files_.end())
        throw ProviderUnavailable("no fixture trace for " + to_string(tx_hash));
    return read_file(it->second);
}

RpcProvider::RpcProvider(std::string host, int port, std::string path, size_t batch_size)
    : host_(std::move(host)),
      port_(port),
      path_(std::move(path)),
      batch_size_(batch_size == 0 ? 1 : batch_size) {}

nlohmann::json RpcProvider::post_batch(const nlohmann::json& requests) {
    httplib::Client client(host_, port_);
    ++requests_;
    auto res = client.Post(path_, requests.dump(), "application/json");
    if (!res || res->status != 200)
        throw ProviderUnavailable("provider " + host_ + ":" + std::to_string(port_) +
                                  (res ? " returned status " + std::to_string(res->status)
                                       : " is unreachable"));
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw ProviderUnavailable(std::string("provider sent malformed JSON: ") + e.what());
    }
}

std::vector<TxMetadata> RpcProvider::list_transactions(const Address& target) {
    nlohmann::json req;
    req["jsonrpc"] = "2.0";
    req["id"] = 1;
    req["method"] = "trace_list";
    req["params"] = nlohmann::json::array({to_string(target)});
    nlohmann::json res = post_batch(req);
    if (!res.is_object() || res.contains("error") || !res.contains("result"))
        throw ProviderUnavailable("trace_list failed for " + to_string(target));
    std::vector<TxMetadata> out;
    try {
        for (const nlohmann::json& rec : res.at("result")) out.push_back(parse_tx_metadata(rec));
    } catch (const nlohmann::json::exception& e) {
        throw ProviderUnavailable(std::string("bad trace_list response: ") + e.what());
    }
    return out;
}

std::vector<std::string> RpcProvider::fetch_traces(const std::vector<Hash256>& batch) {
    std::vector<std::string> out(batch.size());
    for (size_t start = 0; start < batch.size(); start += batch_size_) {
        size_t end = std::min(batch.size(), start + batch_size_);
        nlohmann::json reqs = nlohmann::json::array();
        for (size_t i = start; i < end; ++i) {
            nlohmann::json req;
            req["jsonrpc"] = "2.0";
            req["id"] = i - start;
            req["method"] = "debug_traceTransaction";
            req["params"] = nlohmann::json::array({to_string(batch[i])});
            reqs.push_back(req);
        }
        nlohmann::json res = post_batch(reqs);
        if (!res.is_array() || res.size() != end - start)
            throw ProviderUnavailable("batch response size mismatch");
        std::vector<bool> seen(end - start, false);
        try {
            for (const nlohmann::json& one : res) {
                size_t id = one.at("id").get<size_t>();
                if (id >= end - start || seen[id] || one.contains("error"))
                    throw ProviderUnavailable("trace fetch failed for " +
                                              to_string(batch[start + id]));
                seen[id] = true;
                out[start + id] = one.at("result").dump();
            }
        } catch (const nlohmann::json::exception& e) {
            throw ProviderUnavailable(std::string("bad trace response: ") + e.what());
        }
    }
    return out;
}

std::string RpcProvider::fetch_trace(const Hash256& tx_hash) {
    return fetch_traces({tx_hash}).front();
}

std::string read_cached_trace(const fs::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
        Hash256 tx = parse_hash(doc.at("txHash").get<std::string>());
        Hash256 want = parse_hash(doc.at("contentKeccak").get<std::string>());
        std::string trace = doc.at("trace").get<std::string>();
        if (keccak_of_text(trace) != want)
            throw CorruptCache("content hash mismatch in " + path.string());
        if (path.filename().string().rfind(hash_hex(tx), 0) != 0)
            throw CorruptCache("trace for " + to_string(tx) + " cached under wrong locator " +
                               path.string());
        return trace;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptCache("bad cache wrapper " + path.string() + ": " + e.what());
    }
}

CorpusIndex load_corpus(TraceProvider* provider, const Address& target,
                        const fs::path& cache_dir) {
    fs::path index_dir = cache_dir / to_string(target);
    fs::path index_path = index_dir / "index.json";
    fs::path trace_dir = cache_dir / "traces";
    fs::create_directories(index_dir);
    fs::create_directories(trace_dir);

    std::vector<TxMetadata> listing;
    if (fs::exists(index_path)) {
        try {
            nlohmann::json doc = nlohmann::json::parse(read_file(index_path));
            if (parse_address(doc.at("target").get<std::string>()) != target)
                throw CorruptCache("cached index in " + index_dir.string() +
                                   " is for a different contract");
            for (const nlohmann::json& rec : doc.at("transactions"))
                listing.push_back(parse_tx_metadata(rec));
        } catch (const nlohmann::json::exception& e) {
            throw CorruptCache("bad cached index " + index_path.string() + ": " + e.what());
        }
    } else {
        listing = provider->list_transactions(target);
        nlohmann::json doc;
        doc["target"] = to_string(target);
        nlohmann::json txs = nlohmann::json::array();
        for (const TxMetadata& meta : listing) txs.push_back(tx_metadata_to_json(meta));
        doc["transactions"] = txs;
        write_atomic(index_path, doc.dump(2) + "\n");
    }

    std::set<Hash256> seen;
    std::map<uint64_t, size_t> per_block;
    for (const TxMetadata& meta : listing) {
        if (!seen.insert(meta.tx_hash).second)
            throw CorruptCache("duplicate transaction " + to_string(meta.tx_hash));
        ++per_block[meta.block_number];
    }
    std::set<std::pair<uint64_t, uint32_t>> positions;
    for (const TxMetadata& meta : listing) {
        if (per_block[meta.block_number] < 2) continue;
        if (!meta.tx_index)
            throw CorruptCache("transaction " + to_string(meta.tx_hash) +
                               " shares block " + std::to_string(meta.block_number) +
                               " but has no intra-block index");
        if (!positions.insert({meta.block_number, *meta.tx_index}).second)
            throw CorruptCache("two transactions at block " +
                               std::to_string(meta.block_number) + " position " +
                               std::to_string(*meta.tx_index));
    }
    std::sort(listing.begin(), listing.end(), [](const TxMetadata& a, const TxMetadata& b) {
        if (a.block_number != b.block_number) return a.block_number < b.block_number;
        return a.tx_index.value_or(0) < b.tx_index.value_or(0);
    });

    CorpusIndex index;
    index.target = target;
    std::vector<Hash256> missing;
    std::vector<size_t> missing_at;
    for (const TxMetadata& meta : listing) {
        CorpusRecord rec;
        rec.meta = meta;
        rec.trace_path = trace_dir / (hash_hex(meta.tx_hash) + ".trace.json");
        if (!fs::exists(rec.trace_path)) {
            missing.push_back(meta.tx_hash);
            missing_at.push_back(index.records.size());
        }
        index.records.push_back(std::move(rec));
    }
    if (!missing.empty()) {
        std::vector<std::string> texts = provider->fetch_traces(missing);
        if (texts.size() != missing.size())
            throw ProviderUnavailable("provider returned " + std::to_string(texts.size()) +
                                      " traces for " + std::to_string(missing.size()) +
                                      " requests");
        for (size_t i = 0; i < missing.size(); ++i) {
            nlohmann::json wrapper;
            wrapper["txHash"] = to_string(missing[i]);
            wrapper["contentKeccak"] = to_string(keccak_of_text(texts[i]));
            wrapper["trace"] = texts[i];
            write_atomic(index.records[missing_at[i]].trace_path, wrapper.dump() + "\n");
        }
    }
    return index;
}

std::pair<CorpusIndex, CorpusIndex> split_corpus(const CorpusIndex& index,
                                                 const Rational& fraction) {
    if (index.records.empty())
        throw EmptyCorpus("no transactions recorded for " + to_string(index.target));
    mp::cpp_int p = mp::numerator(fraction), q = mp::denominator(fraction);
    mp::cpp_int count = (p * index.records.size() + q - 1) / q;
    size_t n = count < 0 ? 0 : static_cast<size_t>(count);
    n = std::min(n, index.records.size());

    CorpusIndex train, test;
    train.target = test.target = index.target;
    train.records.assign(index.records.begin(), index.records.begin() + n);
    test.records.assign(index.records.begin() + n, index.records.end());
    return {std::move(train), std::move(test)};
}

}  // namespace traceguard
