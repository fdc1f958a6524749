// Exercises the real HTTP transport against a loopback server speaking the
// OpenAI-compatible and Gemini-style wire formats.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "debate/backends.hpp"
#include "debate/errors.hpp"

#include "doctest.h"
#include "json.hpp"

#include <atomic>
#include <thread>

using namespace debate::backends;

namespace {

class LoopbackServer {
public:
    LoopbackServer() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            last_auth = req.get_header_value("Authorization");
            last_body = req.body;
            if (openai_calls++ < 2) {
                res.status = 429;
                res.set_content(R"({"error":"rate limited"})", "application/json");
                return;
            }
            res.set_content(R"({"choices":[{"message":{"content":"The answer is \\boxed{72}"}}],)"
                            R"("usage":{"prompt_tokens":9,"completion_tokens":6}})",
                            "application/json");
        });
        server_.Post(R"(/v1beta/models/([^/]+):generateContent)", [this](const httplib::Request& req, httplib::Response& res) {
            last_auth = req.get_header_value("x-goog-api-key");
            model = req.matches[1];
            res.set_content(R"({"candidates":[{"content":{"parts":[{"text":"\\boxed{5}"}]}}]})", "application/json");
        });
        server_.Post("/bad/chat/completions", [](const httplib::Request&, httplib::Response& res) {
            res.status = 401;
            res.set_content("unauthorized", "text/plain");
        });
        port = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LoopbackServer() {
        server_.stop();
        thread_.join();
    }

    int port = 0;
    std::atomic<int> openai_calls{0};
    std::string last_auth;
    std::string last_body;
    std::string model;

private:
    httplib::Server server_;
    std::thread thread_;
};

std::shared_ptr<Runtime> runtime_with_key() {
    auto rt = std::make_shared<Runtime>();
    rt->clock = std::make_shared<VirtualClock>();
    rt->recorder = std::make_shared<CallRecorder>();
    rt->getenv = [](const std::string& name) -> std::optional<std::string> {
        if (name == "LOOPBACK_KEY") return std::string("secret");
        return std::nullopt;
    };
    return rt;
}

BackendSpec loopback_spec(BackendKind kind, const std::string& url) {
    BackendSpec spec;
    spec.backend_id = "loopback";
    spec.kind = kind;
    spec.endpoint_url = url;
    spec.credential_env_var = "LOOPBACK_KEY";
    spec.retry = {3, 10, 50};
    return spec;
}

} // namespace

TEST_CASE("http: OpenAI-compatible endpoint with 429 retries") {
    LoopbackServer server;
    auto rt = runtime_with_key();
    auto spec = loopback_spec(BackendKind::openai_compatible, "http://127.0.0.1:" + std::to_string(server.port) + "/v1");
    auto backend = make_backend(spec, rt);
    ChatRequest request("mixtral", {{Role::user, "What is 8*9?"}}, 1.0, 128);
    auto response = backend->complete(request);
    CHECK(response.text == "The answer is \\boxed{72}");
    CHECK(response.usage == Usage{9, 6});
    CHECK(backend->last_retry_count() == 2);
    CHECK(server.openai_calls == 3);
    CHECK(server.last_auth == "Bearer secret");
    auto body = nlohmann::json::parse(server.last_body);
    CHECK(body["messages"][0]["content"] == "What is 8*9?");
}

TEST_CASE("http: Gemini-style endpoint") {
    LoopbackServer server;
    auto rt = runtime_with_key();
    auto spec = loopback_spec(BackendKind::gemini, "http://127.0.0.1:" + std::to_string(server.port) + "/v1beta");
    ChatRequest request("gemini-pro", {{Role::user, "q"}}, 0.0, 16);
    auto response = complete(spec, request, rt);
    CHECK(response.text == "\\boxed{5}");
    CHECK(server.model == "gemini-pro");
    CHECK(server.last_auth == "secret");
}

TEST_CASE("http: 401 is not retried") {
    LoopbackServer server;
    auto rt = runtime_with_key();
    auto spec = loopback_spec(BackendKind::openai_compatible, "http://127.0.0.1:" + std::to_string(server.port) + "/bad");
    try {
        complete(spec, ChatRequest("m", {{Role::user, "q"}}, 0.0, 16), rt);
        FAIL("expected ProviderError");
    } catch (const debate::ProviderError& e) {
        CHECK(e.status() == 401);
        CHECK(e.body_excerpt() == "unauthorized");
    }
    CHECK(rt->recorder->count() == 1);
}

TEST_CASE("http: connection failure is retried as a network error") {
    int closed_port = 0;
    {
        LoopbackServer server;
        closed_port = server.port;
    }
    auto rt = runtime_with_key();
    auto spec = loopback_spec(BackendKind::openai_compatible, "http://127.0.0.1:" + std::to_string(closed_port) + "/v1");
    try {
        complete(spec, ChatRequest("m", {{Role::user, "q"}}, 0.0, 16), rt);
        FAIL("expected ProviderError");
    } catch (const debate::ProviderError& e) {
        CHECK(e.status() == 0);
    }
    CHECK(rt->recorder->count() == 3);
}
