#pragma once

#include <chrono>
#include <string>
#include <utility>
#include <vector>

namespace fiscalrag::http {

struct Response {
    int status = 0;  // 0 when the request never completed
    std::string body;
    std::string error;
    bool timed_out = false;
};

/// Blocking JSON POST to `base_url` + `path`. base_url is scheme://host[:port].
Response post_json(const std::string& base_url, const std::string& path,
                   const std::vector<std::pair<std::string, std::string>>& headers,
                   const std::string& body, std::chrono::milliseconds timeout);

} // namespace fiscalrag::http
