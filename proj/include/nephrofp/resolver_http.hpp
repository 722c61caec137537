#pragma once

#include <cstdlib>
#include <memory>
#include <optional>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "resolver.hpp"

// HTTP+JSON adapters for the public compound database and the NDC registry.
// Endpoint shapes follow the PubChem PUG REST and openFDA NDC conventions:
//
//   GET {compound_base}/compound/name/{term}/property/CanonicalSMILES/JSON
//     -> {"PropertyTable":{"Properties":[{"CanonicalSMILES":"..."}]}}
//   GET {ndc_base}/drug/ndc.json?search=product_ndc:"{code}"&limit=1
//     -> {"results":[{"brand_name":"..."}]}
//
// 404 is a definitive miss; transport errors and 5xx raise UpstreamError and
// are retried by the caller's policy.

namespace nephrofp::resolver {

struct HttpConfig {
    std::string compound_base_url = "https://pubchem.ncbi.nlm.nih.gov/rest/pug";
    std::string ndc_base_url = "https://api.fda.gov";
    int timeout_seconds = 10;

    // NEPHROFP_COMPOUND_URL / NEPHROFP_NDC_URL override the config file.
    static HttpConfig with_env_overrides(HttpConfig cfg) {
        if (const char* v = std::getenv("NEPHROFP_COMPOUND_URL")) cfg.compound_base_url = v;
        if (const char* v = std::getenv("NEPHROFP_NDC_URL")) cfg.ndc_base_url = v;
        return cfg;
    }
};

namespace detail {

inline std::string url_encode(const std::string& s) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out += static_cast<char>(c);
        } else if (c == ' ') {
            out += "%20";
        } else {
            out += '%';
            out += hex[c >> 4];
            out += hex[c & 15];
        }
    }
    return out;
}

// Splits "https://host:port/base/path" into client target and path prefix.
struct SplitUrl {
    std::string host_part;  // scheme://host[:port]
    std::string base_path;  // may be empty
};

inline SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    std::size_t path_start =
        scheme_end == std::string::npos ? url.find('/') : url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, ""};
    return {url.substr(0, path_start), url.substr(path_start)};
}

inline std::optional<std::string> get_json_body(const std::string& base_url,
                                                const std::string& path, int timeout_seconds) {
    const auto split = split_url(base_url);
    httplib::Client client(split.host_part);
    client.set_connection_timeout(timeout_seconds);
    client.set_read_timeout(timeout_seconds);
    client.set_follow_location(true);
    auto res = client.Get(split.base_path + path);
    if (!res) {
        throw UpstreamError("transport failure against " + split.host_part + ": " +
                            httplib::to_string(res.error()));
    }
    if (res->status == 404) return std::nullopt;
    if (res->status >= 500) {
        throw UpstreamError("upstream returned " + std::to_string(res->status));
    }
    if (res->status != 200) return std::nullopt;  // 4xx other than 404: definitive miss
    return res->body;
}

}  // namespace detail

class HttpCompoundDatabase : public CompoundDatabase {
public:
    explicit HttpCompoundDatabase(HttpConfig cfg) : cfg_(std::move(cfg)) {}

    std::optional<std::string> smiles_for_term(const std::string& term) override {
        const std::string path = "/compound/name/" + detail::url_encode(term) +
                                 "/property/CanonicalSMILES/JSON";
        auto body = detail::get_json_body(cfg_.compound_base_url, path, cfg_.timeout_seconds);
        if (!body) return std::nullopt;
        try {
            auto j = nlohmann::json::parse(*body);
            const auto& props = j.at("PropertyTable").at("Properties");
            if (props.empty()) return std::nullopt;
            return props.at(0).at("CanonicalSMILES").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            return std::nullopt;  // malformed payload counts as a miss
        }
    }

private:
    HttpConfig cfg_;
};

class HttpNdcRegistry : public NdcRegistry {
public:
    explicit HttpNdcRegistry(HttpConfig cfg) : cfg_(std::move(cfg)) {}

    std::optional<std::string> proprietary_name(const std::string& ndc) override {
        const std::string path =
            "/drug/ndc.json?search=product_ndc:%22" + detail::url_encode(ndc) + "%22&limit=1";
        auto body = detail::get_json_body(cfg_.ndc_base_url, path, cfg_.timeout_seconds);
        if (!body) return std::nullopt;
        try {
            auto j = nlohmann::json::parse(*body);
            const auto& results = j.at("results");
            if (results.empty()) return std::nullopt;
            return results.at(0).at("brand_name").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            return std::nullopt;
        }
    }

private:
    HttpConfig cfg_;
};

}  // namespace nephrofp::resolver
