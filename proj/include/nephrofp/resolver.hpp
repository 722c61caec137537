#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <vector>

#include "molgraph.hpp"
#include "timeutil.hpp"

// Drug-record resolution to SMILES via the three-stage fallback
// generic name -> drug name -> NDC->proprietary name, against abstract
// lookup interfaces. Production adapters speak HTTP+JSON (resolver_http.hpp);
// tests and offline runs use fixture files in the cache format below.
//
// Cache file: one entry per line, UTF-8,
//   term <TAB> status <TAB> payload <TAB> iso8601-timestamp
// status is hit/miss for compound lookups (payload = SMILES) and
// ndc-hit/ndc-miss for registry lookups (payload = proprietary name);
// registry terms are stored with an "ndc:" prefix. The file is append-safe:
// later entries win.

namespace nephrofp::resolver {

struct EmptyAfterNormalization : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UpstreamError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DrugRecord {
    std::string drug_name;
    std::string generic_name;
    std::string ndc;
    std::string source_stay_id;
};

enum class ResolveStatus { ResolvedByGeneric, ResolvedByName, ResolvedByNdc, Unresolved };

inline std::string to_string(ResolveStatus s) {
    switch (s) {
        case ResolveStatus::ResolvedByGeneric: return "resolved-by-generic";
        case ResolveStatus::ResolvedByName: return "resolved-by-name";
        case ResolveStatus::ResolvedByNdc: return "resolved-by-ndc";
        case ResolveStatus::Unresolved: return "unresolved";
    }
    return "unresolved";
}

struct Resolution {
    ResolveStatus status = ResolveStatus::Unresolved;
    std::string smiles;        // present iff status != Unresolved
    std::string queried_term;  // last term actually sent upstream
};

/// Normalizes a free-text drug name into a query term: lowercase, dosage and
/// route tokens stripped, parenthesized qualifiers removed, whitespace
/// collapsed. Throws EmptyAfterNormalization when nothing survives.
inline std::string normalize_name(std::string_view raw) {
    std::string no_paren;
    int depth = 0;
    for (char c : raw) {
        if (c == '(') ++depth;
        else if (c == ')') depth = std::max(0, depth - 1);
        else if (depth == 0) no_paren += c;
    }

    static const std::vector<std::string> unit_suffixes = {
        "mg", "mcg", "g", "gm", "kg", "ml", "l", "meq", "mmol", "units", "unit",
        "iu", "%", "mg/ml", "mcg/ml", "mEq", "hr", "hours"};
    static const std::vector<std::string> drop_tokens = {
        "iv",   "po",    "oral", "tab",      "tabs", "tablet", "tablets", "cap",      "caps",
        "capsule", "capsules", "soln", "solution", "susp", "suspension", "syrup",
        "cream", "oint", "ointment", "inj", "injection", "infusion", "drip", "patch",
        "er", "sr", "xr"};

    auto is_simple_unit = [&](const std::string& t) {
        for (const auto& u : unit_suffixes) {
            if (t == u) return true;
        }
        return false;
    };
    // "units/ml", "mg/kg/hr": every slash-separated part must be a unit.
    auto is_unit = [&](const std::string& t) {
        if (is_simple_unit(t)) return true;
        if (t.find('/') == std::string::npos) return false;
        std::size_t start = 0;
        while (start <= t.size()) {
            const std::size_t slash = t.find('/', start);
            const std::string part = t.substr(start, slash - start);
            if (!part.empty() && !is_simple_unit(part)) return false;
            if (slash == std::string::npos) break;
            start = slash + 1;
        }
        return true;
    };
    auto strip_numeric_unit = [&](const std::string& t) {
        // Tokens like "325mg", "0.9%", "10ml", "500": numeric prefix with an
        // optional unit tail.
        std::size_t i = 0;
        while (i < t.size() && (std::isdigit(static_cast<unsigned char>(t[i])) || t[i] == '.' ||
                                t[i] == ',' || t[i] == '/')) {
            ++i;
        }
        if (i == 0) return false;                    // no numeric prefix
        if (i == t.size()) return true;              // pure number
        return is_unit(t.substr(i));                 // number + unit
    };

    std::string lowered;
    for (char c : no_paren) {
        lowered += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    for (char& c : lowered) {
        if (c == ',' || c == ';') c = ' ';
    }

    std::vector<std::string> kept;
    std::string token;
    std::istringstream ss(lowered);
    while (ss >> token) {
        if (is_unit(token) || strip_numeric_unit(token)) continue;
        bool drop = false;
        for (const auto& d : drop_tokens) {
            if (token == d) drop = true;
        }
        if (!drop) kept.push_back(token);
    }
    std::string out;
    for (const auto& t : kept) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    if (out.empty()) {
        throw EmptyAfterNormalization("nothing left of '" + std::string(raw) +
                                      "' after normalization");
    }
    return out;
}

/// Answers name->SMILES. nullopt is a definitive miss; transport failures
/// throw UpstreamError.
class CompoundDatabase {
public:
    virtual ~CompoundDatabase() = default;
    virtual std::optional<std::string> smiles_for_term(const std::string& term) = 0;
};

/// Answers NDC->proprietary name.
class NdcRegistry {
public:
    virtual ~NdcRegistry() = default;
    virtual std::optional<std::string> proprietary_name(const std::string& ndc) = 0;
};

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{500};
    // Injectable for tests; production sleeps.
    std::function<void(std::chrono::milliseconds)> sleep =
        [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };

    template <typename F>
    auto run(F&& fn) const {
        std::chrono::milliseconds backoff = initial_backoff;
        int attempt = 0;
        for (;;) {
            try {
                return fn();
            } catch (const UpstreamError&) {
                if (++attempt >= attempts) throw;
                sleep(backoff);
                backoff *= 2;
            }
        }
    }
};

namespace detail {

inline std::string now_iso8601() {
    return format_iso8601(static_cast<std::int64_t>(std::time(nullptr)));
}

}  // namespace detail

/// Append-safe persistent cache for lookup results, keyed by query term.
class ResolverCache {
public:
    ResolverCache() = default;

    explicit ResolverCache(std::string path) : path_(std::move(path)) { load(); }

    void load() {
        entries_.clear();
        if (path_.empty()) return;
        std::ifstream in(path_);
        if (!in) return;  // cold cache
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::vector<std::string> f;
            std::string cur;
            for (char c : line) {
                if (c == '\t') {
                    f.push_back(cur);
                    cur.clear();
                } else {
                    cur += c;
                }
            }
            f.push_back(cur);
            if (f.size() != 4) continue;
            entries_[f[0]] = {f[1], f[2], f[3]};
        }
    }

    struct Entry {
        std::string status;   // hit | miss | ndc-hit | ndc-miss
        std::string payload;  // SMILES or proprietary name
        std::string timestamp;
    };

    std::optional<Entry> lookup(const std::string& term) const {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = entries_.find(term);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    void put(const std::string& term, const std::string& status, const std::string& payload) {
        std::lock_guard<std::mutex> lock(mu_);
        Entry e{status, payload, detail::now_iso8601()};
        entries_[term] = e;
        pending_.push_back({term, e});
    }

    // Appends entries added since the last flush; called once per batch.
    void flush() {
        std::lock_guard<std::mutex> lock(mu_);
        if (path_.empty() || pending_.empty()) {
            pending_.clear();
            return;
        }
        std::ofstream out(path_, std::ios::app);
        if (!out) throw std::runtime_error("cannot write resolver cache " + path_);
        for (const auto& [term, e] : pending_) {
            out << term << '\t' << e.status << '\t' << e.payload << '\t' << e.timestamp << '\n';
        }
        pending_.clear();
    }

    std::size_t size() const {
        std::lock_guard<std::mutex> lock(mu_);
        return entries_.size();
    }

private:
    std::string path_;
    std::map<std::string, Entry> entries_;
    std::vector<std::pair<std::string, Entry>> pending_;
    mutable std::mutex mu_;
};

/// Read-only compound lookups backed by a fixture file in the cache format.
class FixtureCompoundDatabase : public CompoundDatabase {
public:
    explicit FixtureCompoundDatabase(const std::string& path) : cache_(path) {}

    std::optional<std::string> smiles_for_term(const std::string& term) override {
        auto e = cache_.lookup(term);
        if (!e || e->status != "hit") return std::nullopt;
        return e->payload;
    }

private:
    ResolverCache cache_;
};

class FixtureNdcRegistry : public NdcRegistry {
public:
    explicit FixtureNdcRegistry(const std::string& path) : cache_(path) {}

    std::optional<std::string> proprietary_name(const std::string& ndc) override {
        auto e = cache_.lookup("ndc:" + ndc);
        if (!e || e->status != "ndc-hit") return std::nullopt;
        return e->payload;
    }

private:
    ResolverCache cache_;
};

namespace detail {

inline std::optional<std::string> validated_smiles(const std::string& smiles) {
    try {
        molgraph::parse_smiles(smiles);
        return smiles;
    } catch (const std::exception&) {
        return std::nullopt;  // unparseable upstream answer demotes the stage
    }
}

}  // namespace detail

/// One record through the fallback chain. Unparseable upstream SMILES demote
/// the record to the next stage instead of surfacing a broken resolution.
inline Resolution resolve(const DrugRecord& record, CompoundDatabase& compounds,
                          NdcRegistry& registry, const RetryPolicy& retry = {}) {
    Resolution res;
    auto try_compound = [&](const std::string& raw, ResolveStatus status) -> bool {
        std::string term;
        try {
            term = normalize_name(raw);
        } catch (const EmptyAfterNormalization&) {
            return false;
        }
        res.queried_term = term;
        auto answer = retry.run([&] { return compounds.smiles_for_term(term); });
        if (!answer) return false;
        auto ok = detail::validated_smiles(*answer);
        if (!ok) return false;
        res.status = status;
        res.smiles = *ok;
        return true;
    };

    if (!record.generic_name.empty() &&
        try_compound(record.generic_name, ResolveStatus::ResolvedByGeneric)) {
        return res;
    }
    if (!record.drug_name.empty() &&
        try_compound(record.drug_name, ResolveStatus::ResolvedByName)) {
        return res;
    }
    if (!record.ndc.empty()) {
        res.queried_term = "ndc:" + record.ndc;
        auto name = retry.run([&] { return registry.proprietary_name(record.ndc); });
        if (name && try_compound(*name, ResolveStatus::ResolvedByNdc)) return res;
    }
    res.status = ResolveStatus::Unresolved;
    res.smiles.clear();
    return res;
}

struct BatchOptions {
    int parallelism = 1;
    double rate_limit_per_sec = 5.0;
    RetryPolicy retry;
};

struct BatchError {
    std::size_t index;
    std::string message;
};

struct BatchResult {
    // One slot per input record, input order; empty only when the matching
    // index appears in `errors` (upstream failure after retries).
    std::vector<std::optional<Resolution>> resolutions;
    std::vector<BatchError> errors;
    std::size_t upstream_calls = 0;
    std::size_t unique_records = 0;
};

namespace detail {

class RateLimiter {
public:
    explicit RateLimiter(double per_sec) : interval_ns_(per_sec > 0 ? 1e9 / per_sec : 0.0) {}

    void acquire() {
        if (interval_ns_ <= 0.0) return;
        std::unique_lock<std::mutex> lock(mu_);
        const auto now = std::chrono::steady_clock::now();
        auto earliest = last_ + std::chrono::nanoseconds(static_cast<std::int64_t>(interval_ns_));
        if (now < earliest) {
            lock.unlock();
            std::this_thread::sleep_until(earliest);
            lock.lock();
        }
        last_ = std::chrono::steady_clock::now();
    }

private:
    double interval_ns_;
    std::mutex mu_;
    std::chrono::steady_clock::time_point last_{};
};

}  // namespace detail

/// Batch resolution: deduplicates records by normalized identity triple,
/// short-circuits via the cache, and writes the cache once at the end so a
/// re-run makes zero upstream calls. Output order matches input order.
inline BatchResult resolve_batch(std::span<const DrugRecord> records,
                                 CompoundDatabase& compounds, NdcRegistry& registry,
                                 ResolverCache& cache, const BatchOptions& options = {}) {
    BatchResult result;
    result.resolutions.assign(records.size(), std::nullopt);

    auto norm_or_empty = [](const std::string& s) -> std::string {
        if (s.empty()) return {};
        try {
            return normalize_name(s);
        } catch (const EmptyAfterNormalization&) {
            return {};
        }
    };

    // Dedup by normalized identity triple.
    struct Key {
        std::string generic, name, ndc;
        bool operator<(const Key& o) const {
            return std::tie(generic, name, ndc) < std::tie(o.generic, o.name, o.ndc);
        }
    };
    std::map<Key, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < records.size(); ++i) {
        groups[{norm_or_empty(records[i].generic_name), norm_or_empty(records[i].drug_name),
                records[i].ndc}]
            .push_back(i);
    }
    result.unique_records = groups.size();

    std::mutex state_mu;
    detail::RateLimiter limiter(options.rate_limit_per_sec);

    // Cache-through adapters shared by all workers.
    auto cached_compound = [&](const std::string& term) -> std::optional<std::string> {
        if (auto e = cache.lookup(term)) {
            if (e->status == "hit") return e->payload;
            if (e->status == "miss") return std::nullopt;
        }
        limiter.acquire();
        {
            std::lock_guard<std::mutex> lock(state_mu);
            ++result.upstream_calls;
        }
        auto answer = options.retry.run([&] { return compounds.smiles_for_term(term); });
        cache.put(term, answer ? "hit" : "miss", answer.value_or(""));
        return answer;
    };
    auto cached_ndc = [&](const std::string& ndc) -> std::optional<std::string> {
        const std::string term = "ndc:" + ndc;
        if (auto e = cache.lookup(term)) {
            if (e->status == "ndc-hit") return e->payload;
            if (e->status == "ndc-miss") return std::nullopt;
        }
        limiter.acquire();
        {
            std::lock_guard<std::mutex> lock(state_mu);
            ++result.upstream_calls;
        }
        auto answer = options.retry.run([&] { return registry.proprietary_name(ndc); });
        cache.put(term, answer ? "ndc-hit" : "ndc-miss", answer.value_or(""));
        return answer;
    };

    struct CachingCompound : CompoundDatabase {
        std::function<std::optional<std::string>(const std::string&)> fn;
        std::optional<std::string> smiles_for_term(const std::string& term) override {
            return fn(term);
        }
    };
    struct CachingNdc : NdcRegistry {
        std::function<std::optional<std::string>(const std::string&)> fn;
        std::optional<std::string> proprietary_name(const std::string& ndc) override {
            return fn(ndc);
        }
    };

    std::vector<std::pair<const Key*, const std::vector<std::size_t>*>> work;
    work.reserve(groups.size());
    for (const auto& [key, indices] : groups) work.push_back({&key, &indices});

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        CachingCompound cc;
        cc.fn = cached_compound;
        CachingNdc cn;
        cn.fn = cached_ndc;
        RetryPolicy no_retry;  // retries already applied inside the cache layer
        no_retry.attempts = 1;
        for (;;) {
            const std::size_t w = next.fetch_add(1);
            if (w >= work.size()) break;
            const auto& indices = *work[w].second;
            const DrugRecord& representative = records[indices.front()];
            try {
                Resolution r = resolve(representative, cc, cn, no_retry);
                std::lock_guard<std::mutex> lock(state_mu);
                for (auto idx : indices) result.resolutions[idx] = r;
            } catch (const UpstreamError& e) {
                std::lock_guard<std::mutex> lock(state_mu);
                for (auto idx : indices) result.errors.push_back({idx, e.what()});
            }
        }
    };

    const int n_workers = std::max(1, options.parallelism);
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(n_workers));
        for (int t = 0; t < n_workers; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    std::sort(result.errors.begin(), result.errors.end(),
              [](const BatchError& a, const BatchError& b) { return a.index < b.index; });
    cache.flush();
    return result;
}

}  // namespace nephrofp::resolver
