#include "fiscalrag/http_client.hpp"

#include <httplib.h>

namespace fiscalrag::http {

Response post_json(const std::string& base_url, const std::string& path,
                   const std::vector<std::pair<std::string, std::string>>& headers,
                   const std::string& body, std::chrono::milliseconds timeout) {
    httplib::Client client(base_url);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());

    httplib::Headers request_headers;
    for (const auto& [name, value] : headers) request_headers.emplace(name, value);

    Response response;
    const auto started = std::chrono::steady_clock::now();
    auto result = client.Post(path, request_headers, body, "application/json");
    if (!result) {
        response.error = httplib::to_string(result.error());
        response.timed_out = result.error() == httplib::Error::ConnectionTimeout ||
                             std::chrono::steady_clock::now() - started >= timeout;
        return response;
    }
    response.status = result->status;
    response.body = result->body;
    return response;
}

} // namespace fiscalrag::http
