#include "xplain/http.hpp"

#include <cstdlib>

#include "httplib.h"
#include "xplain/errors.hpp"

namespace xplain::http {

namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path prefix without trailing slash
};

SplitUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ArgumentError("base url needs a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    SplitUrl out;
    if (path_start == std::string::npos) {
        out.origin = url;
    } else {
        out.origin = url.substr(0, path_start);
        out.prefix = url.substr(path_start);
        while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
    }
    return out;
}

}  // namespace

Response post_json(const std::string& base_url, const std::string& path, const std::string& body,
                   const std::map<std::string, std::string>& headers, std::chrono::milliseconds timeout) {
    auto url = split_url(base_url);
    httplib::Client client(url.origin);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers hdrs;
    for (const auto& [k, v] : headers) hdrs.emplace(k, v);
    auto res = client.Post(url.prefix + path, hdrs, body, "application/json");
    if (!res) throw TransportError("request to " + base_url + path + " failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
}

std::string credential_from_env(const std::string& env_var) {
    if (env_var.empty()) return {};
    const char* v = std::getenv(env_var.c_str());
    return v ? std::string(v) : std::string();
}

}  // namespace xplain::http
