#pragma once

#include <chrono>
#include <map>
#include <string>

namespace xplain::http {

struct Response {
    int status = 0;
    std::string body;
};

// POSTs a JSON body to base_url + path. base_url may carry a path prefix
// ("http://host:8080/v1"). Throws TransportError when no HTTP response arrives.
Response post_json(const std::string& base_url, const std::string& path, const std::string& body,
                   const std::map<std::string, std::string>& headers, std::chrono::milliseconds timeout);

// Reads a bearer credential from the named environment variable; empty when unset.
std::string credential_from_env(const std::string& env_var);

}  // namespace xplain::http
