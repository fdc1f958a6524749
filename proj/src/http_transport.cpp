#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "debate/backends.hpp"
#include "debate/errors.hpp"

namespace debate::backends {

namespace {

struct SplitUrl {
    std::string origin; // scheme://host[:port]
    std::string path;   // /path?query
};

SplitUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw InvalidArgument("endpoint URL lacks a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

} // namespace

HttpTransport::HttpTransport(std::chrono::seconds connect_timeout, std::chrono::seconds read_timeout)
    : connect_timeout_(connect_timeout), read_timeout_(read_timeout) {}

HttpResult HttpTransport::post(const HttpRequest& request) {
    auto [origin, path] = split_url(request.url);
    httplib::Client client(origin);
    client.set_connection_timeout(connect_timeout_);
    client.set_read_timeout(read_timeout_);
    client.set_write_timeout(connect_timeout_);

    httplib::Headers headers;
    std::string content_type = "application/json";
    for (const auto& [name, value] : request.headers) {
        if (name == "Content-Type") {
            content_type = value;
            continue;
        }
        headers.emplace(name, value);
    }
    auto result = client.Post(path, headers, request.body, content_type);
    if (!result) return {0, httplib::to_string(result.error()), true};
    return {result->status, result->body, false};
}

} // namespace debate::backends
